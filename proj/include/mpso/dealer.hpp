#pragma once

#include <filesystem>
#include <fstream>
#include <map>

#include "mpso/gf.hpp"
#include "mpso/prg.hpp"

namespace mpso {

enum class LaneKind : u8 { field = 0, ring = 1 };

struct ShuffleJobSpec {
  std::size_t N = 0;
  std::vector<LaneKind> lanes;
  friend bool operator==(const ShuffleJobSpec&, const ShuffleJobSpec&) = default;
};

using PairKey = std::pair<PartyId, PartyId>;

// Counts of every correlation type a session will consume.
struct CorrelationPlan {
  unsigned m = 0;
  unsigned field_bits = 64;
  std::map<u64, u64> beaver;          // party bitmask -> triples
  std::map<PairKey, u64> bit_triples;  // (lo, hi) -> AND triples
  std::map<PairKey, u64> rots;         // (sender, receiver) -> ROTs
  std::vector<ShuffleJobSpec> shuffles;
};

inline u64 party_mask(std::span<const PartyId> ps) {
  u64 m = 0;
  for (PartyId p : ps) m |= u64{1} << p;
  return m;
}

inline std::vector<PartyId> mask_parties(u64 mask) {
  std::vector<PartyId> v;
  for (PartyId p = 0; p < 64; ++p)
    if ((mask >> p) & 1) v.push_back(p);
  return v;
}

inline PairKey unordered_pair(PartyId a, PartyId b) { return a < b ? PairKey{a, b} : PairKey{b, a}; }

// Raw field values are kept as u128 regardless of width.
struct BeaverPool {
  std::vector<u128> a, b, c;
  std::size_t cursor = 0;
};

struct BitPool {
  std::size_t count = 0;
  std::vector<u64> a, b, c;  // packed bits
  std::size_t cursor = 0;
};

struct RotSendPool {
  std::vector<u128> m0, m1;
  std::size_t cursor = 0;
};

struct RotRecvPool {
  std::vector<u8> choice;
  std::vector<u128> mc;
  std::size_t cursor = 0;
};

struct ShuffleRoundShare {
  bool permuter = false;
  std::vector<u32> perm;                  // permuter only
  std::vector<std::vector<u128>> delta;   // permuter only, per lane
  std::vector<std::vector<u128>> a, b;    // others, per lane
};

struct ShuffleCorrelation {
  ShuffleJobSpec spec;
  std::vector<ShuffleRoundShare> rounds;  // index 0 = round 1
  bool used = false;
};

// (pi(z))[k] = z[perm[k]]
template <class T>
std::vector<T> apply_perm(const std::vector<u32>& perm, const std::vector<T>& z) {
  if (perm.size() != z.size()) throw ProtocolError("permutation length mismatch");
  std::vector<T> out(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) out[k] = z[perm[k]];
  return out;
}

inline u128 lane_add(LaneKind k, unsigned field_bits, u128 x, u128 y) {
  (void)field_bits;
  return k == LaneKind::field ? x ^ y : static_cast<u128>(static_cast<u64>(x) + static_cast<u64>(y));
}
inline u128 lane_sub(LaneKind k, unsigned field_bits, u128 x, u128 y) {
  (void)field_bits;
  return k == LaneKind::field ? x ^ y : static_cast<u128>(static_cast<u64>(x) - static_cast<u64>(y));
}
inline std::size_t lane_bytes(LaneKind k, unsigned field_bits) { return k == LaneKind::field ? field_bits / 8 : 8; }

inline u128 random_value(Prg& prg, unsigned bits) {
  u128 v = prg.next_u128();
  return bits >= 128 ? v : v & ((static_cast<u128>(1) << bits) - 1);
}

inline u128 random_lane_value(Prg& prg, LaneKind k, unsigned field_bits) {
  return random_value(prg, k == LaneKind::field ? field_bits : 64);
}

inline u128 field_mul_raw(unsigned bits, u128 a, u128 b) {
  return gf_mul(FieldValue{bits, a}, FieldValue{bits, b}).v;
}

template <class F>
struct BeaverBatch {
  std::vector<F> a, b, c;
  bool used = false;
  std::size_t size() const { return a.size(); }
};

struct BitTripleBatch {
  std::size_t count = 0;
  std::vector<u64> a, b, c;
  bool used = false;
};

template <class F>
struct RotSendBatch {
  std::vector<F> m0, m1;
  bool used = false;
};

template <class F>
struct RotRecvBatch {
  std::vector<u8> choice;
  std::vector<F> mc;
  bool used = false;
};

inline bool get_bit(const std::vector<u64>& v, std::size_t i) { return (v[i >> 6] >> (i & 63)) & 1; }
inline void set_bit(std::vector<u64>& v, std::size_t i, bool b) {
  if (b) v[i >> 6] |= u64{1} << (i & 63);
  else v[i >> 6] &= ~(u64{1} << (i & 63));
}

class CorrelationStore {
 public:
  static constexpr const char* kMagic = "MPSODEAL";
  static constexpr u16 kVersion = 1;

  PartyId party = 0;
  unsigned m = 0;
  unsigned field_bits = 64;
  std::map<u64, BeaverPool> beaver;
  std::map<PartyId, BitPool> bits;         // keyed by peer
  std::map<PartyId, RotSendPool> rot_send;  // keyed by receiver
  std::map<PartyId, RotRecvPool> rot_recv;  // keyed by sender
  std::vector<ShuffleCorrelation> shuffles;
  std::size_t shuffle_cursor = 0;

  template <class F>
  BeaverBatch<F> take_beaver(u64 mask, std::size_t n) {
    check_width<F>();
    auto it = beaver.find(mask);
    if (it == beaver.end() || it->second.a.size() - it->second.cursor < n)
      throw CorrelationError("beaver triple pool exhausted for party set " + std::to_string(mask));
    BeaverBatch<F> out;
    auto& p = it->second;
    for (std::size_t i = p.cursor; i < p.cursor + n; ++i) {
      out.a.push_back(F(static_cast<typename F::rep>(p.a[i])));
      out.b.push_back(F(static_cast<typename F::rep>(p.b[i])));
      out.c.push_back(F(static_cast<typename F::rep>(p.c[i])));
    }
    p.cursor += n;
    return out;
  }

  BitTripleBatch take_bits(PartyId peer, std::size_t n) {
    auto it = bits.find(peer);
    if (it == bits.end() || it->second.count - it->second.cursor < n)
      throw CorrelationError("bit triple pool exhausted for peer " + std::to_string(peer));
    auto& p = it->second;
    BitTripleBatch out;
    out.count = n;
    out.a.assign((n + 63) / 64, 0);
    out.b = out.a;
    out.c = out.a;
    for (std::size_t i = 0; i < n; ++i) {
      set_bit(out.a, i, get_bit(p.a, p.cursor + i));
      set_bit(out.b, i, get_bit(p.b, p.cursor + i));
      set_bit(out.c, i, get_bit(p.c, p.cursor + i));
    }
    p.cursor += n;
    return out;
  }

  template <class F>
  RotSendBatch<F> take_rot_send(PartyId receiver, std::size_t n) {
    check_width<F>();
    auto it = rot_send.find(receiver);
    if (it == rot_send.end() || it->second.m0.size() - it->second.cursor < n)
      throw CorrelationError("ROT pool exhausted (sender side, receiver " + std::to_string(receiver) + ")");
    auto& p = it->second;
    RotSendBatch<F> out;
    for (std::size_t i = p.cursor; i < p.cursor + n; ++i) {
      out.m0.push_back(F(static_cast<typename F::rep>(p.m0[i])));
      out.m1.push_back(F(static_cast<typename F::rep>(p.m1[i])));
    }
    p.cursor += n;
    return out;
  }

  template <class F>
  RotRecvBatch<F> take_rot_recv(PartyId sender, std::size_t n) {
    check_width<F>();
    auto it = rot_recv.find(sender);
    if (it == rot_recv.end() || it->second.choice.size() - it->second.cursor < n)
      throw CorrelationError("ROT pool exhausted (receiver side, sender " + std::to_string(sender) + ")");
    auto& p = it->second;
    RotRecvBatch<F> out;
    for (std::size_t i = p.cursor; i < p.cursor + n; ++i) {
      out.choice.push_back(p.choice[i]);
      out.mc.push_back(F(static_cast<typename F::rep>(p.mc[i])));
    }
    p.cursor += n;
    return out;
  }

  ShuffleCorrelation& take_shuffle(const ShuffleJobSpec& spec) {
    if (shuffle_cursor >= shuffles.size()) throw CorrelationError("shuffle correlations exhausted");
    auto& s = shuffles[shuffle_cursor];
    if (!(s.spec == spec)) throw CorrelationError("shuffle correlation shape mismatch");
    ++shuffle_cursor;
    return s;
  }

  Bytes serialize() const;
  static CorrelationStore deserialize(std::span<const u8> b);

  void save(const std::filesystem::path& p) const {
    Bytes b = serialize();
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot write " + p.string());
    f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    if (!f) throw IoError("write failed for " + p.string());
  }
  static CorrelationStore load(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw CorrelationError("missing correlation file " + p.string());
    Bytes b((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize(b);
  }

 private:
  template <class F>
  void check_width() const {
    if (F::bits != field_bits) throw ConfigError("correlation field width mismatch");
  }
};

namespace detail {

inline void put_value(ByteWriter& w, u128 v, std::size_t nbytes) {
  for (std::size_t i = 0; i < nbytes; ++i) w.u8_(static_cast<u8>(v >> (8 * i)));
}

inline u128 get_value(ByteReader& r, std::size_t nbytes) {
  auto s = r.raw(nbytes);
  u128 v = 0;
  for (std::size_t i = 0; i < nbytes; ++i) v |= static_cast<u128>(s[i]) << (8 * i);
  return v;
}

enum class Section : u8 { end = 0, beaver = 1, bits = 2, rot_send = 3, rot_recv = 4, shuffle = 5 };

}  // namespace detail

inline Bytes CorrelationStore::serialize() const {
  using detail::Section;
  ByteWriter w;
  w.raw(std::span<const u8>(reinterpret_cast<const u8*>(kMagic), 8));
  w.le<u16>(kVersion);
  w.le<u32>(party);
  w.le<u32>(m);
  w.le<u16>(static_cast<u16>(field_bits));
  const std::size_t fb = field_bits / 8;

  w.u8_(static_cast<u8>(Section::beaver));
  w.le<u32>(static_cast<u32>(beaver.size()));
  for (auto& [mask, p] : beaver) {
    w.le<u64>(mask);
    w.le<u64>(p.a.size());
    for (std::size_t i = 0; i < p.a.size(); ++i) {
      detail::put_value(w, p.a[i], fb);
      detail::put_value(w, p.b[i], fb);
      detail::put_value(w, p.c[i], fb);
    }
  }
  w.u8_(static_cast<u8>(Section::bits));
  w.le<u32>(static_cast<u32>(bits.size()));
  for (auto& [peer, p] : bits) {
    w.le<u32>(peer);
    w.le<u64>(p.count);
    for (auto* v : {&p.a, &p.b, &p.c})
      for (u64 x : *v) w.le<u64>(x);
  }
  w.u8_(static_cast<u8>(Section::rot_send));
  w.le<u32>(static_cast<u32>(rot_send.size()));
  for (auto& [peer, p] : rot_send) {
    w.le<u32>(peer);
    w.le<u64>(p.m0.size());
    for (std::size_t i = 0; i < p.m0.size(); ++i) {
      detail::put_value(w, p.m0[i], fb);
      detail::put_value(w, p.m1[i], fb);
    }
  }
  w.u8_(static_cast<u8>(Section::rot_recv));
  w.le<u32>(static_cast<u32>(rot_recv.size()));
  for (auto& [peer, p] : rot_recv) {
    w.le<u32>(peer);
    w.le<u64>(p.choice.size());
    for (std::size_t i = 0; i < p.choice.size(); ++i) {
      w.u8_(p.choice[i]);
      detail::put_value(w, p.mc[i], fb);
    }
  }
  w.u8_(static_cast<u8>(Section::shuffle));
  w.le<u32>(static_cast<u32>(shuffles.size()));
  for (auto& s : shuffles) {
    w.le<u64>(s.spec.N);
    w.u8_(static_cast<u8>(s.spec.lanes.size()));
    for (auto k : s.spec.lanes) w.u8_(static_cast<u8>(k));
    for (auto& r : s.rounds) {
      w.u8_(r.permuter ? 1 : 0);
      if (r.permuter) {
        for (u32 x : r.perm) w.le<u32>(x);
        for (std::size_t l = 0; l < s.spec.lanes.size(); ++l)
          for (u128 v : r.delta[l]) detail::put_value(w, v, lane_bytes(s.spec.lanes[l], field_bits));
      } else {
        for (std::size_t l = 0; l < s.spec.lanes.size(); ++l) {
          for (u128 v : r.a[l]) detail::put_value(w, v, lane_bytes(s.spec.lanes[l], field_bits));
          for (u128 v : r.b[l]) detail::put_value(w, v, lane_bytes(s.spec.lanes[l], field_bits));
        }
      }
    }
  }
  w.u8_(static_cast<u8>(Section::end));
  return std::move(w.buf);
}

inline CorrelationStore CorrelationStore::deserialize(std::span<const u8> b) {
  using detail::Section;
  CorrelationStore s;
  try {
    ByteReader r(b);
    auto magic = r.raw(8);
    if (std::memcmp(magic.data(), kMagic, 8) != 0) throw CorrelationError("not a correlation file");
    if (r.le<u16>() != kVersion) throw CorrelationError("unsupported correlation file version");
    s.party = r.le<u32>();
    s.m = r.le<u32>();
    s.field_bits = r.le<u16>();
    if (s.field_bits != 16 && s.field_bits != 64 && s.field_bits != 128) throw CorrelationError("bad field width");
    const std::size_t fb = s.field_bits / 8;
    for (;;) {
      auto sec = static_cast<Section>(r.u8_());
      if (sec == Section::end) break;
      u32 n = r.le<u32>();
      for (u32 k = 0; k < n; ++k) {
        switch (sec) {
          case Section::beaver: {
            u64 mask = r.le<u64>(), cnt = r.le<u64>();
            auto& p = s.beaver[mask];
            for (u64 i = 0; i < cnt; ++i) {
              p.a.push_back(detail::get_value(r, fb));
              p.b.push_back(detail::get_value(r, fb));
              p.c.push_back(detail::get_value(r, fb));
            }
            break;
          }
          case Section::bits: {
            PartyId peer = r.le<u32>();
            auto& p = s.bits[peer];
            p.count = r.le<u64>();
            std::size_t words = (p.count + 63) / 64;
            for (auto* v : {&p.a, &p.b, &p.c})
              for (std::size_t i = 0; i < words; ++i) v->push_back(r.le<u64>());
            break;
          }
          case Section::rot_send: {
            PartyId peer = r.le<u32>();
            u64 cnt = r.le<u64>();
            auto& p = s.rot_send[peer];
            for (u64 i = 0; i < cnt; ++i) {
              p.m0.push_back(detail::get_value(r, fb));
              p.m1.push_back(detail::get_value(r, fb));
            }
            break;
          }
          case Section::rot_recv: {
            PartyId peer = r.le<u32>();
            u64 cnt = r.le<u64>();
            auto& p = s.rot_recv[peer];
            for (u64 i = 0; i < cnt; ++i) {
              p.choice.push_back(r.u8_());
              p.mc.push_back(detail::get_value(r, fb));
            }
            break;
          }
          case Section::shuffle: {
            ShuffleCorrelation c;
            c.spec.N = r.le<u64>();
            u8 nl = r.u8_();
            for (u8 l = 0; l < nl; ++l) c.spec.lanes.push_back(static_cast<LaneKind>(r.u8_()));
            c.rounds.resize(s.m);
            for (auto& rd : c.rounds) {
              rd.permuter = r.u8_() != 0;
              if (rd.permuter) {
                rd.perm.resize(c.spec.N);
                for (auto& x : rd.perm) x = r.le<u32>();
                rd.delta.resize(nl);
                for (u8 l = 0; l < nl; ++l)
                  for (std::size_t i = 0; i < c.spec.N; ++i)
                    rd.delta[l].push_back(detail::get_value(r, lane_bytes(c.spec.lanes[l], s.field_bits)));
              } else {
                rd.a.resize(nl);
                rd.b.resize(nl);
                for (u8 l = 0; l < nl; ++l) {
                  for (std::size_t i = 0; i < c.spec.N; ++i)
                    rd.a[l].push_back(detail::get_value(r, lane_bytes(c.spec.lanes[l], s.field_bits)));
                  for (std::size_t i = 0; i < c.spec.N; ++i)
                    rd.b[l].push_back(detail::get_value(r, lane_bytes(c.spec.lanes[l], s.field_bits)));
                }
              }
            }
            s.shuffles.push_back(std::move(c));
            break;
          }
          default: throw CorrelationError("unknown correlation section");
        }
      }
    }
  } catch (const ProtocolError& e) {
    throw CorrelationError(std::string("corrupt correlation file: ") + e.what());
  }
  return s;
}

// Deterministic dealing. Party p's shares come from its own stream; the last
// party of each group absorbs the correction so the identity holds.
inline std::vector<CorrelationStore> deal(const CorrelationPlan& plan, const Seed& master) {
  const unsigned m = plan.m, fb = plan.field_bits;
  if (m < 2 || m > 63) throw ConfigError("party count out of range");
  std::vector<CorrelationStore> st(m + 1);
  std::vector<Prg> party_prg;
  party_prg.emplace_back(derive_seed(master, "dealer-unused"));
  for (PartyId p = 1; p <= m; ++p) {
    st[p].party = p;
    st[p].m = m;
    st[p].field_bits = fb;
    party_prg.emplace_back(derive_seed(master, "dealer-party", p));
  }
  Prg common(derive_seed(master, "dealer-common"));

  for (auto& [mask, count] : plan.beaver) {
    auto ps = mask_parties(mask);
    if (ps.size() < 2 || ps.back() > m) throw ConfigError("beaver pool party set out of range");
    for (PartyId p : ps) {
      auto& pool = st[p].beaver[mask];
      pool.a.reserve(count);
      pool.b.reserve(count);
      pool.c.reserve(count);
    }
    for (u64 t = 0; t < count; ++t) {
      u128 a = random_value(common, fb), b;
      do b = random_value(common, fb);
      while (b == 0);
      u128 c = field_mul_raw(fb, a, b);
      u128 sa = 0, sb = 0, sc = 0;
      for (std::size_t k = 0; k < ps.size(); ++k) {
        auto& pool = st[ps[k]].beaver[mask];
        u128 xa, xb, xc;
        if (k + 1 < ps.size()) {
          xa = random_value(party_prg[ps[k]], fb);
          xb = random_value(party_prg[ps[k]], fb);
          xc = random_value(party_prg[ps[k]], fb);
          sa ^= xa;
          sb ^= xb;
          sc ^= xc;
        } else {
          xa = a ^ sa;
          xb = b ^ sb;
          xc = c ^ sc;
        }
        pool.a.push_back(xa);
        pool.b.push_back(xb);
        pool.c.push_back(xc);
      }
    }
  }

  for (auto& [pair, count] : plan.bit_triples) {
    auto [lo, hi] = pair;
    if (lo >= hi || hi > m) throw ConfigError("bit triple pair out of range");
    std::size_t words = (count + 63) / 64;
    auto& pl = st[lo].bits[hi];
    auto& ph = st[hi].bits[lo];
    pl.count = ph.count = count;
    for (auto* p : {&pl, &ph}) {
      p->a.assign(words, 0);
      p->b.assign(words, 0);
      p->c.assign(words, 0);
    }
    for (std::size_t w = 0; w < words; ++w) {
      u64 a = common.next_u64(), b = common.next_u64(), c = a & b;
      u64 la = party_prg[lo].next_u64(), lb = party_prg[lo].next_u64(), lc = party_prg[lo].next_u64();
      u64 keep = (w + 1 == words && count % 64) ? (u64{1} << (count % 64)) - 1 : ~u64{0};
      pl.a[w] = la & keep;
      pl.b[w] = lb & keep;
      pl.c[w] = lc & keep;
      ph.a[w] = (a ^ la) & keep;
      ph.b[w] = (b ^ lb) & keep;
      ph.c[w] = (c ^ lc) & keep;
    }
  }

  for (auto& [pair, count] : plan.rots) {
    auto [s, r] = pair;
    if (s == r || s > m || r > m || !s || !r) throw ConfigError("ROT pair out of range");
    auto& ps = st[s].rot_send[r];
    auto& pr = st[r].rot_recv[s];
    for (u64 i = 0; i < count; ++i) {
      u128 m0 = random_value(party_prg[s], fb), m1 = random_value(party_prg[s], fb);
      u8 c = static_cast<u8>(party_prg[r].next_u64() & 1);
      ps.m0.push_back(m0);
      ps.m1.push_back(m1);
      pr.choice.push_back(c);
      pr.mc.push_back(c ? m1 : m0);
    }
  }

  for (auto& spec : plan.shuffles) {
    std::vector<ShuffleCorrelation> job(m + 1);
    for (PartyId p = 1; p <= m; ++p) {
      job[p].spec = spec;
      job[p].rounds.resize(m);
    }
    const std::size_t L = spec.lanes.size();
    for (PartyId i = 1; i <= m; ++i) {
      auto& perm_holder = job[i].rounds[i - 1];
      perm_holder.permuter = true;
      perm_holder.perm.resize(spec.N);
      for (u32 k = 0; k < spec.N; ++k) perm_holder.perm[k] = k;
      shuffle_in_place(perm_holder.perm.begin(), perm_holder.perm.end(), party_prg[i]);
      perm_holder.delta.assign(L, {});
      for (std::size_t l = 0; l < L; ++l) {
        std::vector<u128> sum_a(spec.N, 0), sum_b(spec.N, 0);
        for (PartyId j = 1; j <= m; ++j) {
          if (j == i) continue;
          auto& rd = job[j].rounds[i - 1];
          rd.a.resize(L);
          rd.b.resize(L);
          for (std::size_t k = 0; k < spec.N; ++k) {
            u128 a = random_lane_value(party_prg[j], spec.lanes[l], fb);
            u128 b = random_lane_value(party_prg[j], spec.lanes[l], fb);
            rd.a[l].push_back(a);
            rd.b[l].push_back(b);
            sum_a[k] = lane_add(spec.lanes[l], fb, sum_a[k], a);
            sum_b[k] = lane_add(spec.lanes[l], fb, sum_b[k], b);
          }
        }
        auto pa = apply_perm(perm_holder.perm, sum_a);
        for (std::size_t k = 0; k < spec.N; ++k) perm_holder.delta[l].push_back(lane_sub(spec.lanes[l], fb, pa[k], sum_b[k]));
      }
    }
    for (PartyId p = 1; p <= m; ++p) st[p].shuffles.push_back(std::move(job[p]));
  }
  return st;
}

}  // namespace mpso
