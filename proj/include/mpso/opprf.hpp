#pragma once

#include "mpso/hashing.hpp"
#include "mpso/okvs.hpp"
#include "mpso/session.hpp"

// Batch OPPRF: one OPRF evaluation per receiver item, one OKVS hint per
// programmed map. H1 sees only the element; the bin, hash index and a per-pair
// domain counter go into H2, so a sender evaluates the group once per element.
namespace mpso {

// bin (u32 LE) || x || tag
inline OkvsKey opprf_key(u32 bin, const Element& x, u8 tag) {
  OkvsKey k;
  for (std::size_t i = 0; i < 4; ++i) k.data[i] = static_cast<u8>(bin >> (8 * i));
  std::memcpy(k.data.data() + 4, x.data.data(), x.size);
  k.data[4 + x.size] = tag;
  k.size = static_cast<u8>(x.size + 5);
  return k;
}

namespace detail {

inline Point ideal_prf(const Seed& ideal, PartyId sender, PartyId receiver, const Element& x) {
  auto key = derive_seed(ideal, "ideal-oprf", sender, receiver);
  Blake2b h(32);
  h.update(key).update(x.bytes());
  return h.digest<32>();
}

inline const OprfKey& oprf_key_for(Party& P, PartyId receiver) {
  auto it = P.oprf_keys.find(receiver);
  if (it == P.oprf_keys.end()) {
    Prg kp(derive_seed(P.seed, "oprf-key", receiver));
    it = P.oprf_keys.emplace(receiver, OprfKey::generate(kp)).first;
  }
  return it->second;
}

// Sender-side k * H1(x), cached per receiver.
inline const Point& sender_point(Party& P, PartyId receiver, const Element& x) {
  auto& cache = P.oprf_cache[receiver];
  auto it = cache.find(x);
  if (it != cache.end()) return it->second;
  Point y = P.ideal_oprf ? ideal_prf(P.ideal_seed, P.id, receiver, x)
                         : scalar_mul(oprf_key_for(P, receiver).clamped, hash_to_group(x.bytes()));
  return cache.emplace(x, y).first->second;
}

}  // namespace detail

// Receiver's evaluated points, one vector per sender, aligned with its items.
struct OprfView {
  std::vector<TaggedItem> items;
  std::map<PartyId, std::vector<Point>> y;
};

// Receiver: blind each item once and send the same batch to every sender.
inline OprfView oprf_query(Party& P, std::span<const PartyId> senders, std::vector<TaggedItem> items) {
  OprfView v;
  v.items = std::move(items);
  const std::size_t B = v.items.size();
  if (P.ideal_oprf) {
    for (PartyId s : senders) {
      auto& ys = v.y[s];
      ys.reserve(B);
      for (auto& it : v.items) ys.push_back(detail::ideal_prf(P.ideal_seed, s, P.id, it.x));
    }
    return v;
  }
  std::vector<BlindFactor> r(B);
  Bytes q(B * 32);
  std::unordered_map<Element, Point, ElementHash> h1;
  for (std::size_t b = 0; b < B; ++b) {
    auto [it, fresh] = h1.try_emplace(v.items[b].x);
    if (fresh) it->second = hash_to_group(v.items[b].x.bytes());
    r[b] = BlindFactor::generate(P.prg);
    Point a = scalar_mul(r[b].blind, it->second);
    std::memcpy(q.data() + 32 * b, a.data(), 32);
  }
  for (PartyId s : senders) P.net.send(s, Stage::oprf_query, q);
  for (PartyId s : senders) {
    Bytes resp = P.net.recv(s, Stage::oprf_response);
    if (resp.size() != B * 32) throw ProtocolError("oprf response has wrong length");
    auto& ys = v.y[s];
    ys.resize(B);
    for (std::size_t b = 0; b < B; ++b) {
      Point pt;
      std::memcpy(pt.data(), resp.data() + 32 * b, 32);
      ys[b] = oprf_unblind(pt, r[b]);
    }
  }
  return v;
}

// Sender: answer one query batch from `receiver`.
inline void oprf_answer(Party& P, PartyId receiver) {
  if (P.ideal_oprf) return;
  Bytes q = P.net.recv(receiver, Stage::oprf_query);
  if (q.size() % 32) throw ProtocolError("oprf query has wrong length");
  const auto& k = detail::oprf_key_for(P, receiver);
  Bytes out(q.size());
  for (std::size_t off = 0; off < q.size(); off += 32) {
    Point a;
    std::memcpy(a.data(), q.data() + off, 32);
    Point b = oprf_respond(k, a);
    std::memcpy(out.data() + off, b.data(), 32);
  }
  P.net.send(receiver, Stage::oprf_response, std::move(out));
}

// One programmed entry: simple-table position plus the value to hit.
struct OpprfEntry {
  u32 bin;
  u32 index;  // into the sender's set
  u8 tag;
  OkvsValue value;
};

// Sender: program F(k, .) to `value` on every entry and ship the hint.
inline void opprf_program(Party& P, PartyId receiver, const std::vector<Element>& X,
                          const std::vector<OpprfEntry>& entries, unsigned gamma) {
  const u32 domain = P.next_domain(receiver);
  std::vector<OkvsKey> keys(entries.size());
  std::vector<OkvsValue> vals(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const Element& x = X[e.index];
    keys[i] = opprf_key(e.bin, x, e.tag);
    OkvsValue mask = hash_to_bits(domain, keys[i].bytes(), detail::sender_point(P, receiver, x), gamma);
    for (std::size_t w = 0; w < 4; ++w) vals[i][w] = e.value[w] ^ mask[w];
  }
  auto enc = okvs_encode(keys, vals, gamma, P.prg);
  P.net.send(receiver, Stage::opprf_hint, enc.serialize());
}

// Receiver: f_b = Decode(hint, key_b) xor F(k, key_b) for every bin.
inline std::vector<OkvsValue> opprf_receive(Party& P, PartyId sender, const OprfView& view, unsigned gamma) {
  const u32 domain = P.next_domain(sender);
  Bytes hint = P.net.recv(sender, Stage::opprf_hint);
  ByteReader r(hint);
  auto enc = OkvsEncoding::deserialize(r);
  if (enc.gamma != gamma) throw ProtocolError("opprf hint has unexpected width");
  const auto& ys = view.y.at(sender);
  std::vector<OkvsValue> out(view.items.size());
  for (std::size_t b = 0; b < view.items.size(); ++b) {
    const auto& it = view.items[b];
    OkvsKey k = opprf_key(static_cast<u32>(b), it.x, it.tag);
    OkvsValue d = enc.decode(k.bytes()), mask = hash_to_bits(domain, k.bytes(), ys[b], gamma);
    for (std::size_t w = 0; w < 4; ++w) out[b][w] = d[w] ^ mask[w];
  }
  return out;
}

inline std::vector<TaggedItem> cuckoo_items(const CuckooTable& t, const std::vector<Element>& X) {
  std::vector<TaggedItem> v(t.size());
  for (std::size_t b = 0; b < t.size(); ++b) v[b] = t.item(b, X);
  return v;
}

// Field and ring values packed into an OKVS value: field in the low words, ring above it.
template <class F>
OkvsValue pack_field(F x) {
  OkvsValue v{};
  if constexpr (F::bits == 128) {
    v[0] = static_cast<u64>(x.v);
    v[1] = static_cast<u64>(x.v >> 64);
  } else {
    v[0] = static_cast<u64>(x.v);
  }
  return v;
}

template <class F>
F unpack_field(const OkvsValue& v) {
  if constexpr (F::bits == 128) return F((static_cast<u128>(v[1]) << 64) | v[0]);
  else return F(static_cast<typename F::rep>(v[0]));
}

template <class F>
constexpr std::size_t ring_word() { return F::bits == 128 ? 2 : 1; }

}  // namespace mpso
