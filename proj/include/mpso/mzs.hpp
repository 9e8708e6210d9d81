#pragma once

#include "mpso/formula.hpp"
#include "mpso/sspmt.hpp"

// Membership zero-sharing. A relaxed sharing of bin b reconstructs to zero
// exactly when the bin's predicate holds; the standard form additionally makes
// the nonzero case uniform. Characteristic 2 throughout, so -r is r.
namespace mpso {

// A party's hashed view of its own set.
struct Tables {
  std::vector<Element> X;
  CuckooTable cuckoo;
  SimpleTable simple;

  static Tables build(std::vector<Element> X, const HashParams& hp, std::size_t width) {
    Tables t;
    t.cuckoo = cuckoo_insert(X, hp, width);
    t.simple = simple_hash(X, hp, width);
    t.X = std::move(X);
    return t;
  }
  std::size_t bins() const { return simple.bins.size(); }
};

template <class F>
std::vector<F> random_vec(Prg& prg, std::size_t n) {
  std::vector<F> v(n);
  for (auto& x : v) x = F::random(prg);
  return v;
}

// ---- relaxed member: pivot holds u_b, sender holds r_b, u_b + r_b = 0 iff member

template <class F>
std::vector<F> rmzs_member_send(Party& P, PartyId pivot, const Tables& t) {
  const std::size_t B = t.bins();
  auto r = random_vec<F>(P.prg, B);
  std::vector<OpprfEntry> entries;
  entries.reserve(t.simple.total());
  for (std::size_t b = 0; b < B; ++b)
    for (auto& e : t.simple.bins[b]) entries.push_back({static_cast<u32>(b), e.index, e.tag, pack_field(r[b])});
  opprf_program(P, pivot, t.X, entries, F::bits);
  return r;
}

template <class F>
std::vector<F> rmzs_member_recv(Party& P, PartyId sender, const OprfView& view) {
  auto f = opprf_receive(P, sender, view, F::bits);
  std::vector<F> u(f.size());
  for (std::size_t b = 0; b < f.size(); ++b) u[b] = unpack_field<F>(f[b]);
  return u;
}

// ---- relaxed non-member: ssPMT bits, then a ROT keyed by the pivot's bit

template <class F>
std::vector<F> rmzs_nonmember_send(Party& P, PartyId pivot, const Tables& t, unsigned pmt_bits) {
  auto e0 = bsspmt_send(P, pivot, t.X, t.simple, pmt_bits);
  const std::size_t B = e0.size();
  auto rot = P.store.take_rot_send<F>(pivot, B);
  mark_used(rot);
  auto d = unpack_bits(P.net.recv(pivot, Stage::rot_mask), B);
  std::vector<F> out(B);
  for (std::size_t b = 0; b < B; ++b) {
    auto [r0, r1] = rot_sender_pair(rot, b, d[b]);
    out[b] = e0[b] ? r1 : r0;
  }
  return out;
}

template <class F>
std::vector<F> rmzs_nonmember_recv(Party& P, PartyId sender, const OprfView& view, unsigned pmt_bits) {
  auto e1 = bsspmt_recv(P, sender, view, pmt_bits);
  const std::size_t B = e1.size();
  auto rot = P.store.take_rot_recv<F>(sender, B);
  mark_used(rot);
  P.net.send(sender, Stage::rot_mask, pack_bits(rot_choice_flip(rot, e1)));
  return rot.mc;
}

// ---- composition

template <class F>
std::vector<F> compose_and(std::vector<F> u, const std::vector<F>& v) {
  add_into(u, v);
  return u;
}

template <class F>
std::vector<F> compose_or(Party& P, std::span<const PartyId> group, PartyId leader, const std::vector<F>& u,
                          const std::vector<F>& v) {
  return beaver_mul(P, group, leader, u, v);
}

template <class F>
std::vector<F> relax_to_standard(Party& P, std::span<const PartyId> group, PartyId leader, const std::vector<F>& r) {
  return beaver_mul_random(P, group, leader, r);
}

// Literals of a separation formula in depth-first order.
inline void collect_literals(const Pred& p, std::vector<const Pred*>& out) {
  if (p.is_literal()) {
    out.push_back(&p);
    return;
  }
  if (p.kind != Pred::Kind::And && p.kind != Pred::Kind::Or)
    throw ConfigError("constant inside a separation formula");
  for (auto& k : p.kids) collect_literals(k, out);
}

inline u64 bmzs_group_mask(PartyId pivot, const Pred& q) { return (u64{1} << pivot) | pred_indices(q); }

// ---- correlation demand, mirrored by the planner

inline void nonmember_demand(CorrelationPlan& plan, PartyId pivot, PartyId sender, std::size_t B, unsigned pmt_bits) {
  plan.bit_triples[unordered_pair(pivot, sender)] += B * peqt_and_count(pmt_bits);
  plan.rots[{sender, pivot}] += B;
}

inline void bmzs_or_demand(CorrelationPlan& plan, PartyId pivot, const Pred& q, std::size_t B) {
  if (q.kind == Pred::Kind::Or && q.kids.size() > 1) plan.beaver[bmzs_group_mask(pivot, q)] += (q.kids.size() - 1) * B;
  for (auto& k : q.kids) bmzs_or_demand(plan, pivot, k, B);
}

inline void bmzs_demand(CorrelationPlan& plan, PartyId pivot, const Pred& q, std::size_t B, unsigned pmt_bits) {
  std::vector<const Pred*> lits;
  collect_literals(q, lits);
  for (auto* l : lits)
    if (l->kind == Pred::Kind::NotIn) nonmember_demand(plan, pivot, l->idx, B, pmt_bits);
  bmzs_or_demand(plan, pivot, q, B);
  plan.beaver[bmzs_group_mask(pivot, q)] += B;
}

// bpmzs and bpmzsp: one transformation over the group.
inline void bpmzs_demand(CorrelationPlan& plan, std::span<const PartyId> group, std::size_t B) {
  plan.beaver[party_mask(group)] += B;
}

inline void bpnmzs_demand(CorrelationPlan& plan, PartyId pivot, std::span<const PartyId> group, std::size_t B,
                          unsigned pmt_bits) {
  for (PartyId q : group)
    if (q != pivot) nonmember_demand(plan, pivot, q, B, pmt_bits);
  plan.beaver[party_mask(group)] += B;
}

namespace detail {

template <class F>
std::vector<F> emulate(Party& P, PartyId pivot, const Pred& q, const std::vector<std::vector<F>>& lit,
                       std::size_t& next, std::size_t B) {
  if (q.is_literal()) return lit[next++];
  std::vector<std::vector<F>> kids;
  for (auto& k : q.kids) kids.push_back(emulate(P, pivot, k, lit, next, B));
  if (kids.empty()) throw ConfigError("empty connective in separation formula");
  auto acc = std::move(kids[0]);
  if (q.kind == Pred::Kind::And) {
    for (std::size_t i = 1; i < kids.size(); ++i) acc = compose_and(std::move(acc), kids[i]);
    return acc;
  }
  u64 mask = bmzs_group_mask(pivot, q);
  bool mine = (mask >> P.id) & 1;
  for (std::size_t i = 1; i < kids.size(); ++i) {
    if (!mine) continue;
    auto group = mask_parties(mask);
    acc = compose_or(P, group, pivot, acc, kids[i]);
  }
  return mine ? acc : std::vector<F>(B);
}

}  // namespace detail

// Standard zero-sharing of Q' over the bins of the pivot's Cuckoo table.
// Parties outside pivot + indices(Q') return zeros without communicating.
template <class F>
std::vector<F> bmzs(Party& P, PartyId pivot, const Pred& q, const Tables& mine, unsigned pmt_bits) {
  const std::size_t B = mine.bins();
  const u64 involved = bmzs_group_mask(pivot, q);
  if (!((involved >> P.id) & 1)) return std::vector<F>(B);
  if (q.is_literal() && q.idx == pivot) throw ConfigError("separation formula mentions its own pivot");

  std::vector<const Pred*> lits;
  collect_literals(q, lits);
  std::vector<PartyId> senders;
  for (auto* l : lits)
    if (!contains(senders, l->idx)) senders.push_back(l->idx);
  if (contains(senders, pivot)) throw ConfigError("separation formula mentions its own pivot");

  OprfView view;
  if (P.id == pivot) view = oprf_query(P, senders, cuckoo_items(mine.cuckoo, mine.X));
  else oprf_answer(P, pivot);

  std::vector<std::vector<F>> lit(lits.size());
  for (std::size_t i = 0; i < lits.size(); ++i) {
    const Pred& l = *lits[i];
    bool member = l.kind == Pred::Kind::In;
    if (P.id == pivot)
      lit[i] = member ? rmzs_member_recv<F>(P, l.idx, view) : rmzs_nonmember_recv<F>(P, l.idx, view, pmt_bits);
    else if (P.id == l.idx)
      lit[i] = member ? rmzs_member_send<F>(P, pivot, mine) : rmzs_nonmember_send<F>(P, pivot, mine, pmt_bits);
    else
      lit[i].assign(B, F{});
  }
  std::size_t next = 0;
  auto r = detail::emulate(P, pivot, q, lit, next, B);
  auto group = mask_parties(involved);
  return relax_to_standard(P, group, pivot, r);
}

// Pure member variant over `group`: zero iff the pivot's item is in every other set.
template <class F>
std::vector<F> bpmzs(Party& P, PartyId pivot, std::span<const PartyId> group, const Tables& mine) {
  const std::size_t B = mine.bins();
  std::vector<F> r;
  if (P.id == pivot) {
    std::vector<PartyId> senders;
    for (PartyId q : group)
      if (q != pivot) senders.push_back(q);
    auto view = oprf_query(P, senders, cuckoo_items(mine.cuckoo, mine.X));
    r.assign(B, F{});
    for (PartyId s : senders) add_into(r, rmzs_member_recv<F>(P, s, view));
  } else {
    oprf_answer(P, pivot);
    r = rmzs_member_send<F>(P, pivot, mine);
  }
  return relax_to_standard(P, group, pivot, r);
}

// Pure non-member variant: zero iff the pivot's item is in no other set.
template <class F>
std::vector<F> bpnmzs(Party& P, PartyId pivot, std::span<const PartyId> group, const Tables& mine,
                      unsigned pmt_bits) {
  const std::size_t B = mine.bins();
  std::vector<F> r;
  if (P.id == pivot) {
    std::vector<PartyId> senders;
    for (PartyId q : group)
      if (q != pivot) senders.push_back(q);
    auto view = oprf_query(P, senders, cuckoo_items(mine.cuckoo, mine.X));
    r.assign(B, F{});
    for (PartyId s : senders) add_into(r, rmzs_nonmember_recv<F>(P, s, view, pmt_bits));
  } else {
    oprf_answer(P, pivot);
    r = rmzs_nonmember_send<F>(P, pivot, mine, pmt_bits);
  }
  return relax_to_standard(P, group, pivot, r);
}

template <class F>
struct ShareWithPayload {
  std::vector<F> s;
  std::vector<Payload> w;
};

// Member variant carrying payloads: s as in bpmzs, w sums the other parties'
// payloads of the pivot's item (relaxed; only s is transformed).
template <class F>
ShareWithPayload<F> bpmzsp(Party& P, PartyId pivot, std::span<const PartyId> group, const Tables& mine,
                           const std::vector<u64>& payloads) {
  const std::size_t B = mine.bins();
  constexpr unsigned gamma = 64 * ring_word<F>() + 64;
  ShareWithPayload<F> out;
  std::vector<F> r;
  if (P.id == pivot) {
    std::vector<PartyId> senders;
    for (PartyId q : group)
      if (q != pivot) senders.push_back(q);
    auto view = oprf_query(P, senders, cuckoo_items(mine.cuckoo, mine.X));
    r.assign(B, F{});
    out.w.assign(B, Payload{});
    for (PartyId s : senders) {
      auto f = opprf_receive(P, s, view, gamma);
      for (std::size_t b = 0; b < B; ++b) {
        r[b] += unpack_field<F>(f[b]);
        out.w[b] += Payload(f[b][ring_word<F>()]);
      }
    }
  } else {
    if (payloads.size() != mine.X.size()) throw ConfigError("payload count does not match set size");
    oprf_answer(P, pivot);
    r = random_vec<F>(P.prg, B);
    out.w.resize(B);
    std::vector<OpprfEntry> entries;
    entries.reserve(mine.simple.total());
    for (std::size_t b = 0; b < B; ++b) {
      out.w[b] = Payload::random(P.prg);
      for (auto& e : mine.simple.bins[b]) {
        OkvsValue v = pack_field(r[b]);
        v[ring_word<F>()] = payloads[e.index] - out.w[b].v;
        entries.push_back({static_cast<u32>(b), e.index, e.tag, v});
      }
    }
    opprf_program(P, pivot, mine.X, entries, gamma);
  }
  out.s = relax_to_standard(P, group, pivot, r);
  return out;
}

}  // namespace mpso
