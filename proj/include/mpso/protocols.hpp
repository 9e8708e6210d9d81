#pragma once

#include <chrono>
#include <optional>

#include "mpso/mzs.hpp"
#include "mpso/shuffle.hpp"

namespace mpso {

enum class Functionality { mpsi, mpsi_card, mpsi_card_sum, mpsu, mpsu_card, mpso, mpso_card };

inline const char* func_name(Functionality f) {
  switch (f) {
    case Functionality::mpsi: return "mpsi";
    case Functionality::mpsi_card: return "mpsi-card";
    case Functionality::mpsi_card_sum: return "mpsi-card-sum";
    case Functionality::mpsu: return "mpsu";
    case Functionality::mpsu_card: return "mpsu-card";
    case Functionality::mpso: return "mpso";
    case Functionality::mpso_card: return "mpso-card";
  }
  return "?";
}

inline Functionality parse_func(std::string_view s) {
  for (auto f : {Functionality::mpsi, Functionality::mpsi_card, Functionality::mpsi_card_sum, Functionality::mpsu,
                 Functionality::mpsu_card, Functionality::mpso, Functionality::mpso_card})
    if (s == func_name(f)) return f;
  throw ConfigError("unknown functionality '" + std::string(s) + "'");
}

inline bool is_mpsi_family(Functionality f) {
  return f == Functionality::mpsi || f == Functionality::mpsi_card || f == Functionality::mpsi_card_sum;
}
inline bool is_mpso_family(Functionality f) { return f == Functionality::mpso || f == Functionality::mpso_card; }
inline bool outputs_set(Functionality f) {
  return f == Functionality::mpsi || f == Functionality::mpsu || f == Functionality::mpso;
}

inline constexpr unsigned kElementBits = 64;  // l
inline constexpr unsigned kPadBits = 64;      // l'

struct SessionConfig {
  Functionality func = Functionality::mpsi;
  unsigned m = 3;
  std::size_t n = 0;  // upper bound on every set size
  unsigned sigma = 40;
  std::string formula;  // MPSO only
  u16 session = 1;
  bool ideal_oprf = false;

  // Binds everything that must agree across parties; exchanged in the TCP handshake.
  std::array<u8, 32> digest() const {
    Blake2b h(32);
    h.update("mpso-config").update(func_name(func)).update_le<u32>(m).update_le<u64>(n).update_le<u32>(sigma);
    h.update_le<u64>(formula.size()).update(formula).update_le<u16>(session).update_le<u8>(ideal_oprf);
    return h.digest<32>();
  }
};

// Parameters every party derives identically from the config.
struct SessionParams {
  std::size_t B = 0;
  unsigned field_bits = 64;
  std::size_t width = 8;  // element bytes after pre-hashing (if any)
  unsigned prehash = 0;   // bits, 0 = off
  unsigned pmt_bits = 0;
  Cpf cpf;
  std::optional<SetExpr> expr;

  std::size_t vec_len(const SessionConfig& c) const {
    switch (c.func) {
      case Functionality::mpsu:
      case Functionality::mpsu_card: return (c.m - 1) * B;
      case Functionality::mpso:
      case Functionality::mpso_card: return cpf.s() * B;
      default: return B;
    }
  }
};

inline SessionParams derive(const SessionConfig& c) {
  if (c.m < 2 || c.m > 32) throw ConfigError("party count must be in [2, 32]");
  if (c.n == 0) throw ConfigError("n must be >= 1");
  if (c.n > (std::size_t{1} << 24)) throw ConfigError("n above 2^24 is not supported");
  SessionParams d;
  d.B = std::max<std::size_t>(1, bins_for(c.n));
  if (is_mpsi_family(c.func)) {
    d.field_bits = 64;
    d.prehash = prehash_bits(c.m, c.n, c.sigma);
    d.width = d.prehash / 8;
    if (c.sigma + ceil_log2(d.B) > 64) throw ConfigError("GF(2^64) too small for sigma and n");
    return d;
  }
  d.field_bits = kElementBits + kPadBits;
  d.width = kElementBits / 8;
  u64 vectors = c.m - 1;
  u64 pmt_instances = static_cast<u64>(c.m) * (c.m - 1) / 2;
  if (is_mpso_family(c.func)) {
    if (c.formula.empty()) throw ConfigError("MPSO needs a formula");
    d.expr = parse(c.formula, c.m);
    d.cpf = to_cpf(expr_to_predicate(*d.expr));
    auto cost = cpf_cost(d.cpf, c.n, c.sigma);
    if (cost.mpso_field_bits > d.field_bits) throw ConfigError("field too small for this formula");
    if (cost.min_field_bits > d.field_bits) throw ConfigError("field too small for the formula's OR count");
    vectors = d.cpf.s();
    pmt_instances = 0;
    for (auto& f : d.cpf.subs) {
      if (f.q() == 1) continue;
      std::vector<const Pred*> lits;
      collect_literals(f.separation, lits);
      for (auto* l : lits) pmt_instances += l->kind == Pred::Kind::NotIn;
    }
  }
  if (kPadBits < c.sigma + ceil_log2(vectors) + ceil_log2(d.B))
    throw ConfigError("zero padding too short: l' < sigma + log s + log B");
  d.pmt_bits = pmt_gamma(c.sigma, pmt_instances, d.B);
  return d;
}

inline CorrelationPlan plan_session(const SessionConfig& c, const SessionParams& d) {
  CorrelationPlan p;
  p.m = c.m;
  p.field_bits = d.field_bits;
  const std::size_t B = d.B;
  auto all = all_parties(c.m);
  switch (c.func) {
    case Functionality::mpsi: bpmzs_demand(p, all, B); break;
    case Functionality::mpsi_card:
      bpmzs_demand(p, all, B);
      p.shuffles.push_back({B, {LaneKind::field}});
      break;
    case Functionality::mpsi_card_sum:
      bpmzs_demand(p, all, B);
      p.shuffles.push_back({B, {LaneKind::field, LaneKind::ring}});
      break;
    case Functionality::mpsu:
    case Functionality::mpsu_card:
      for (PartyId j = 2; j <= c.m; ++j) {
        std::vector<PartyId> group(all.begin(), all.begin() + j);
        bpnmzs_demand(p, j, group, B, d.pmt_bits);
      }
      p.shuffles.push_back({d.vec_len(c), {LaneKind::field}});
      break;
    case Functionality::mpso:
    case Functionality::mpso_card:
      for (auto& f : d.cpf.subs)
        if (f.q() > 1) bmzs_demand(p, f.pivot, f.separation, B, d.pmt_bits);
      p.shuffles.push_back({d.vec_len(c), {LaneKind::field}});
      break;
  }
  return p;
}

inline CorrelationPlan plan_session(const SessionConfig& c) { return plan_session(c, derive(c)); }

struct PartyInput {
  std::vector<Element> X;
  std::vector<u64> payloads;  // MPSI-card-sum, aligned with X
};

struct PartyOutput {
  std::optional<std::vector<Element>> set;  // leader, set-valued functionalities
  std::optional<u64> cardinality;
  std::optional<u64> sum;                   // leader, MPSI-card-sum
  std::vector<u128> exported;               // final shares when exporting
  std::vector<u64> exported_payload;        // MPSI-card-sum payload lane
};

struct RunOptions {
  bool export_only = false;  // stop right before reconstruction
  PartyId corrupt = 0;       // fault injection: this party perturbs every share it opens
};

namespace detail {

inline void check_input(const SessionConfig& c, const SessionParams& d, const PartyInput& in, PartyId id) {
  if (in.X.size() > c.n) throw ConfigError("party " + std::to_string(id) + " holds more than n elements");
  require_distinct(in.X);
  for (auto& x : in.X)
    if (!is_mpsi_family(c.func) && x.size != d.width)
      throw ConfigError("elements must be " + std::to_string(d.width) + " bytes wide");
  if (c.func == Functionality::mpsi_card_sum && in.payloads.size() != in.X.size())
    throw ConfigError("payload count does not match set size");
}

// Leader proposes hash keys until every party built its tables.
inline Tables agree_tables(Party& P, const SessionConfig& c, const SessionParams& d, const std::vector<Element>& X) {
  constexpr int kAttempts = 3;
  auto all = all_parties(P.m);
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    Bytes keys(32);
    if (P.id == 1) {
      P.prg.fill(keys);
      P.net.broadcast(all, Stage::hash_agree, keys);
    } else {
      keys = P.net.recv(1, Stage::hash_agree);
      if (keys.size() != 32) throw ProtocolError("malformed hashing proposal");
    }
    Key128 hk, pk;
    std::copy(keys.begin(), keys.begin() + 16, hk.begin());
    std::copy(keys.begin() + 16, keys.end(), pk.begin());
    auto hp = HashParams::for_n(c.n, hk);
    hp.B = d.B;
    std::optional<Tables> t;
    try {
      t = Tables::build(d.prehash ? pre_hash(X, pk, d.prehash) : X, hp, d.width);
    } catch (const HashingFailure&) {
    }
    u8 ok = t.has_value();
    if (P.id == 1) {
      for (PartyId q = 2; q <= P.m; ++q) {
        auto s = P.net.recv(q, Stage::hash_agree);
        if (s.size() != 1) throw ProtocolError("malformed hashing status");
        ok &= s[0];
      }
      P.net.broadcast(all, Stage::hash_agree, Bytes{ok});
    } else {
      P.net.send(1, Stage::hash_agree, Bytes{ok});
      auto s = P.net.recv(1, Stage::hash_agree);
      if (s.size() != 1) throw ProtocolError("malformed hashing decision");
      ok = s[0];
    }
    if (ok) return std::move(*t);
  }
  throw HashingFailure("hashing failed after 3 attempts");
}

// Non-leaders send their vector, the leader returns the sum.
template <class T>
std::vector<T> gather_sum(Party& P, std::vector<T> mine, Stage st) {
  if (P.id != 1) {
    P.net.send(1, st, pack_vec(mine));
    return {};
  }
  for (PartyId q = 2; q <= P.m; ++q) add_into(mine, unpack_vec<T>(P.net.recv(q, st), mine.size()));
  return mine;
}

template <class F>
std::vector<F> reconstruct(Party& P, const RunOptions& opt, std::vector<F> mine) {
  if (P.id == opt.corrupt)
    for (auto& v : mine) v += F::random_nonzero(P.prg);
  return gather_sum(P, std::move(mine), Stage::reconstruct);
}

inline GF128 embed(const Element& x) { return GF128(static_cast<u128>(x.to_u64()) << 64); }

inline std::optional<Element> decode(GF128 v) {
  if (static_cast<u64>(v.v) != 0) return std::nullopt;
  return Element::from_u64(static_cast<u64>(v.v >> 64));
}

inline std::size_t count_zero(const std::vector<GF128>& v) {
  return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](GF128 x) { return x.is_zero(); }));
}

inline PartyOutput run_mpsi_family(Party& P, const SessionConfig& c, const SessionParams& d, const PartyInput& in,
                                   const Tables& t, const RunOptions& opt) {
  PartyOutput out;
  auto all = all_parties(P.m);
  const std::size_t B = d.B;
  if (c.func == Functionality::mpsi) {
    auto s = bpmzs<GF64>(P, 1, all, t);
    if (opt.export_only) {
      out.exported = to_lane(s);
      return out;
    }
    auto open = reconstruct(P, opt, std::move(s));
    if (P.id == 1) {
      std::vector<Element> res;
      for (std::size_t b = 0; b < B; ++b)
        if (open[b].is_zero() && t.cuckoo.occupied(b)) res.push_back(in.X[t.cuckoo.index(b)]);
      std::sort(res.begin(), res.end());
      out.cardinality = res.size();
      out.set = std::move(res);
    }
    return out;
  }
  if (c.func == Functionality::mpsi_card) {
    auto s = bpmzs<GF64>(P, 1, all, t);
    // Empty leader bins hold a dummy nobody has, so their secret is already nonzero.
    auto sh = mshuffle(P, {B, {LaneKind::field}}, Lanes{to_lane(s)});
    auto v = from_lane<GF64>(sh[0]);
    if (opt.export_only) {
      out.exported = sh[0];
      return out;
    }
    auto open = reconstruct(P, opt, std::move(v));
    if (P.id == 1)
      out.cardinality = static_cast<u64>(std::count_if(open.begin(), open.end(), [](GF64 x) { return x.is_zero(); }));
    return out;
  }
  // MPSI-card-sum
  auto r = bpmzsp<GF64>(P, 1, all, t, in.payloads);
  if (P.id == 1)
    for (std::size_t b = 0; b < B; ++b)
      if (t.cuckoo.occupied(b)) r.w[b] += Payload(in.payloads[t.cuckoo.index(b)]);
  auto sh = mshuffle(P, {B, {LaneKind::field, LaneKind::ring}}, Lanes{to_lane(r.s), to_lane(r.w)});
  if (opt.export_only) {
    out.exported = sh[0];
    for (u128 v : sh[1]) out.exported_payload.push_back(static_cast<u64>(v));
    return out;
  }
  auto s_open = reconstruct(P, opt, from_lane<GF64>(sh[0]));
  std::vector<u8> e;
  if (P.id == 1) {
    e.resize(B);
    for (std::size_t k = 0; k < B; ++k) e[k] = s_open[k].is_zero();
    P.net.broadcast(all, Stage::indicator, pack_bits(e));
  } else {
    e = unpack_bits(P.net.recv(1, Stage::indicator), B);
  }
  Payload part;
  for (std::size_t k = 0; k < B; ++k)
    if (e[k]) part += Payload(static_cast<u64>(sh[1][k]));
  auto total = gather_sum(P, std::vector<Payload>{part}, Stage::result);
  out.cardinality = static_cast<u64>(std::count(e.begin(), e.end(), u8{1}));
  if (P.id == 1) out.sum = total[0].v;
  return out;
}

// Shuffle the assembled vector, then let the leader decode.
inline PartyOutput finish_embedded(Party& P, const SessionConfig& c, std::vector<GF128> vec, std::size_t extra_card,
                                   const std::vector<Element>& own, const RunOptions& opt) {
  PartyOutput out;
  const std::size_t N = vec.size();
  auto sh = mshuffle(P, {N, {LaneKind::field}}, Lanes{to_lane(vec)});
  if (opt.export_only) {
    out.exported = sh[0];
    return out;
  }
  auto open = reconstruct(P, opt, from_lane<GF128>(sh[0]));
  if (P.id != 1) return out;
  if (!outputs_set(c.func)) {
    out.cardinality = count_zero(open) + extra_card;
    return out;
  }
  std::vector<Element> res(own.begin(), own.end());
  for (auto& v : open)
    if (auto x = decode(v)) res.push_back(*x);
  std::sort(res.begin(), res.end());
  res.erase(std::unique(res.begin(), res.end()), res.end());
  out.cardinality = res.size();
  out.set = std::move(res);
  return out;
}

inline PartyOutput run_mpsu(Party& P, const SessionConfig& c, const SessionParams& d, const PartyInput& in, const Tables& t,
                            const RunOptions& opt) {
  const std::size_t B = d.B;
  const bool embed_elems = c.func == Functionality::mpsu;
  std::vector<GF128> vec((c.m - 1) * B);
  auto all = all_parties(c.m);
  for (PartyId j = 2; j <= c.m; ++j) {
    if (P.id > j) continue;
    std::vector<PartyId> group(all.begin(), all.begin() + j);
    auto s = bpnmzs<GF128>(P, j, group, t, d.pmt_bits);
    if (P.id == j)
      for (std::size_t b = 0; b < B; ++b) {
        if (!t.cuckoo.occupied(b)) s[b] += GF128::random_nonzero(P.prg);
        else if (embed_elems) s[b] += embed(in.X[t.cuckoo.index(b)]);
      }
    std::copy(s.begin(), s.end(), vec.begin() + static_cast<long>((j - 2) * B));
  }
  std::vector<Element> own;
  if (P.id == 1 && embed_elems) own = in.X;
  return finish_embedded(P, c, std::move(vec), P.id == 1 ? in.X.size() : 0, own, opt);
}

inline PartyOutput run_mpso(Party& P, const SessionConfig& c, const SessionParams& d, const PartyInput& in, const Tables& t,
                            const RunOptions& opt) {
  const std::size_t B = d.B;
  const bool embed_elems = c.func == Functionality::mpso;
  std::vector<GF128> vec(d.cpf.s() * B);
  for (std::size_t i = 0; i < d.cpf.s(); ++i) {
    const auto& f = d.cpf.subs[i];
    const PartyId pivot = f.pivot;
    std::vector<GF128> s;
    if (f.q() == 1) {
      s.assign(B, GF128{});
    } else {
      s = bmzs<GF128>(P, pivot, f.separation, t, d.pmt_bits);
    }
    if (P.id == pivot)
      for (std::size_t b = 0; b < B; ++b) {
        if (!t.cuckoo.occupied(b)) s[b] += GF128::random_nonzero(P.prg);
        else if (embed_elems) s[b] += embed(in.X[t.cuckoo.index(b)]);
      }
    std::copy(s.begin(), s.end(), vec.begin() + static_cast<long>(i * B));
  }
  return finish_embedded(P, c, std::move(vec), 0, {}, opt);
}

}  // namespace detail

// One party's full run. Ends with a barrier so transports can close safely.
inline PartyOutput run_party(Party& P, const SessionConfig& c, const PartyInput& in, const RunOptions& opt = {}) {
  const SessionParams d = derive(c);
  if (P.store.field_bits != d.field_bits) throw CorrelationError("correlation field width does not match the session");
  if (P.store.m != c.m || P.store.party != P.id) throw CorrelationError("correlation file belongs to another session");
  detail::check_input(c, d, in, P.id);
  Tables t = detail::agree_tables(P, c, d, in.X);
  PartyOutput out;
  if (is_mpsi_family(c.func)) out = detail::run_mpsi_family(P, c, d, in, t, opt);
  else if (is_mpso_family(c.func)) out = detail::run_mpso(P, c, d, in, t, opt);
  else out = detail::run_mpsu(P, c, d, in, t, opt);
  P.net.barrier();
  return out;
}

struct PartyStats {
  u64 bytes_sent = 0, bytes_recv = 0, frames_sent = 0;
  std::map<Stage, std::string> digests;
  std::vector<Stage> stage_log;
};

inline PartyStats collect_stats(const Mesh& mesh) {
  PartyStats s;
  auto t = mesh.total_stats();
  s.bytes_sent = t.bytes_sent;
  s.bytes_recv = t.bytes_recv;
  s.frames_sent = t.frames_sent;
  s.digests = mesh.transcript().digests();
  s.stage_log = mesh.transcript().stage_log();
  return s;
}

struct RunResult {
  PartyOutput leader;
  std::vector<PartyOutput> outputs;  // 1-based
  std::vector<PartyStats> stats;     // 1-based
  double seconds = 0;
};

inline Seed party_seed(const Seed& master, PartyId p) { return derive_seed(master, "party", p); }
inline Seed dealer_seed(const Seed& master) { return derive_seed(master, "dealer"); }
inline Seed ideal_seed(const Seed& master) { return derive_seed(master, "ideal"); }

// All parties in-process. Correlations are dealt from the same master seed the
// TCP path uses, so both produce identical transcripts.
inline RunResult run_local(const SessionConfig& c, const std::vector<PartyInput>& inputs, const Seed& master,
                           const RunOptions& opt = {}) {
  if (inputs.size() != c.m + 1) throw ConfigError("need one input per party (index 0 unused)");
  auto stores = deal(plan_session(c), dealer_seed(master));
  auto meshes = connect_local_mesh(c.m, c.session);
  RunResult r;
  r.outputs.resize(c.m + 1);
  auto t0 = std::chrono::steady_clock::now();
  run_parties(meshes, [&](PartyId p) {
    Party P(p, *meshes[p], stores[p], party_seed(master, p));
    P.ideal_oprf = c.ideal_oprf;
    P.ideal_seed = ideal_seed(master);
    r.outputs[p] = run_party(P, c, inputs[p], opt);
  });
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.leader = r.outputs[1];
  r.stats.resize(c.m + 1);
  for (PartyId p = 1; p <= c.m; ++p) r.stats[p] = collect_stats(*meshes[p]);
  return r;
}

// ---- plaintext oracles

inline std::vector<std::set<u64>> as_sets(const std::vector<PartyInput>& in) {
  std::vector<std::set<u64>> s;
  for (std::size_t p = 1; p < in.size(); ++p) {
    std::set<u64> cur;
    for (auto& x : in[p].X) cur.insert(x.to_u64());
    s.push_back(std::move(cur));
  }
  return s;
}

struct OracleResult {
  std::set<u64> set;
  u64 cardinality = 0;
  u64 sum = 0;
};

inline OracleResult oracle(const SessionConfig& c, const std::vector<PartyInput>& in) {
  auto sets = as_sets(in);
  OracleResult o;
  switch (c.func) {
    case Functionality::mpsi:
    case Functionality::mpsi_card:
    case Functionality::mpsi_card_sum: {
      o.set = sets[0];
      for (std::size_t i = 1; i < sets.size(); ++i) {
        std::set<u64> t;
        std::set_intersection(o.set.begin(), o.set.end(), sets[i].begin(), sets[i].end(), std::inserter(t, t.end()));
        o.set = std::move(t);
      }
      if (c.func == Functionality::mpsi_card_sum)
        for (std::size_t p = 1; p < in.size(); ++p)
          for (std::size_t k = 0; k < in[p].X.size(); ++k)
            if (o.set.count(in[p].X[k].to_u64())) o.sum += in[p].payloads[k];
      break;
    }
    case Functionality::mpsu:
    case Functionality::mpsu_card:
      for (auto& s : sets) o.set.insert(s.begin(), s.end());
      break;
    case Functionality::mpso:
    case Functionality::mpso_card: o.set = eval_expr(parse(c.formula, c.m), sets); break;
  }
  o.cardinality = o.set.size();
  return o;
}

// True if the leader's output agrees with the oracle for this functionality.
inline bool matches_oracle(const SessionConfig& c, const PartyOutput& leader, const OracleResult& o) {
  if (!leader.cardinality || *leader.cardinality != o.cardinality) return false;
  if (outputs_set(c.func)) {
    if (!leader.set) return false;
    std::set<u64> got;
    for (auto& x : *leader.set) got.insert(x.to_u64());
    if (got != o.set) return false;
  }
  if (c.func == Functionality::mpsi_card_sum && (!leader.sum || *leader.sum != o.sum)) return false;
  return true;
}

}  // namespace mpso
