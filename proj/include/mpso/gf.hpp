#pragma once

#include <immintrin.h>
#include <wmmintrin.h>

#include <compare>
#include <type_traits>

#include "mpso/common.hpp"
#include "mpso/prg.hpp"

namespace mpso {

namespace detail {

// 64x64 -> 128 carry-less product.
inline u128 clmul64(u64 a, u64 b) {
#if defined(__PCLMUL__)
  __m128i r = _mm_clmulepi64_si128(_mm_cvtsi64_si128(static_cast<long long>(a)),
                                   _mm_cvtsi64_si128(static_cast<long long>(b)), 0x00);
  u64 lo = static_cast<u64>(_mm_cvtsi128_si64(r));
  u64 hi = static_cast<u64>(_mm_extract_epi64(r, 1));
  return (static_cast<u128>(hi) << 64) | lo;
#else
  u128 r = 0;
  for (int i = 0; i < 64; ++i)
    if ((b >> i) & 1) r ^= static_cast<u128>(a) << i;
  return r;
#endif
}

inline u64 lo64(u128 v) { return static_cast<u64>(v); }
inline u64 hi64(u128 v) { return static_cast<u64>(v >> 64); }

template <unsigned K>
struct FieldTraits;

template <>
struct FieldTraits<16> {
  using rep = u16;
  static constexpr u32 poly = 0x1002B;  // x^16 + x^5 + x^3 + x + 1
  static rep mul(rep a, rep b) {
    u64 p = lo64(clmul64(a, b));
    for (int i = 30; i >= 16; --i)
      if ((p >> i) & 1) p ^= static_cast<u64>(poly) << (i - 16);
    return static_cast<rep>(p);
  }
};

template <>
struct FieldTraits<64> {
  using rep = u64;
  static constexpr u64 poly = 0x1B;  // x^64 + x^4 + x^3 + x + 1
  static rep mul(rep a, rep b) {
    u128 p = clmul64(a, b);
    u128 t = clmul64(hi64(p), poly);
    u128 u = clmul64(hi64(t), poly);
    return lo64(p) ^ lo64(t) ^ lo64(u);
  }
};

template <>
struct FieldTraits<128> {
  using rep = u128;
  static constexpr u64 poly = 0x87;  // x^128 + x^7 + x^2 + x + 1
  static rep mul(rep a, rep b) {
    u64 a0 = lo64(a), a1 = hi64(a), b0 = lo64(b), b1 = hi64(b);
    u128 lo = clmul64(a0, b0);
    u128 hi = clmul64(a1, b1);
    u128 mid = clmul64(a0 ^ a1, b0 ^ b1) ^ lo ^ hi;
    u64 p0 = lo64(lo), p1 = hi64(lo) ^ lo64(mid), p2 = lo64(hi) ^ hi64(mid), p3 = hi64(hi);
    u128 t = clmul64(p3, poly);
    p1 ^= lo64(t);
    p2 ^= hi64(t);
    u128 v = clmul64(p2, poly);
    p0 ^= lo64(v);
    p1 ^= hi64(v);
    return (static_cast<u128>(p1) << 64) | p0;
  }
};

}  // namespace detail

// Element of GF(2^K); addition is XOR.
template <unsigned K>
class GF2k {
 public:
  using rep = typename detail::FieldTraits<K>::rep;
  static constexpr unsigned bits = K;
  static constexpr std::size_t bytes = K / 8;

  rep v{};

  constexpr GF2k() = default;
  constexpr explicit GF2k(rep x) : v(x) {}
  static constexpr GF2k zero() { return GF2k(); }
  static constexpr GF2k one() { return GF2k(rep{1}); }

  bool is_zero() const { return v == 0; }
  friend GF2k operator+(GF2k a, GF2k b) { return GF2k(static_cast<rep>(a.v ^ b.v)); }
  friend GF2k operator-(GF2k a, GF2k b) { return a + b; }
  GF2k& operator+=(GF2k o) { v ^= o.v; return *this; }
  GF2k& operator-=(GF2k o) { v ^= o.v; return *this; }
  friend GF2k operator*(GF2k a, GF2k b) { return GF2k(detail::FieldTraits<K>::mul(a.v, b.v)); }
  GF2k& operator*=(GF2k o) { return *this = *this * o; }
  friend bool operator==(GF2k a, GF2k b) { return a.v == b.v; }

  GF2k pow(u128 e) const {
    GF2k r = one(), b = *this;
    while (e) {
      if (e & 1) r *= b;
      b *= b;
      e >>= 1;
    }
    return r;
  }
  // a^(2^K - 2)
  GF2k inv() const {
    if (is_zero()) throw std::domain_error("inverse of zero field element");
    GF2k r = one(), sq = *this * *this;
    for (unsigned i = 1; i < K; ++i) {
      r *= sq;
      sq *= sq;
    }
    return r;
  }

  void to_bytes(u8* out) const {
    for (std::size_t i = 0; i < bytes; ++i) out[i] = static_cast<u8>(v >> (8 * i));
  }
  static GF2k from_bytes(const u8* in) {
    rep x = 0;
    for (std::size_t i = 0; i < bytes; ++i) x |= static_cast<rep>(static_cast<rep>(in[i]) << (8 * i));
    return GF2k(x);
  }
  static GF2k random(Prg& prg) {
    u8 b[bytes];
    prg.fill(std::span<u8>(b, bytes));
    return from_bytes(b);
  }
  static GF2k random_nonzero(Prg& prg) {
    for (;;) {
      GF2k x = random(prg);
      if (!x.is_zero()) return x;
    }
  }
  u64 low_u64() const { return static_cast<u64>(v); }
};

using GF16 = GF2k<16>;
using GF64 = GF2k<64>;
using GF128 = GF2k<128>;

template <class F>
F gf_add(F a, F b) { return a + b; }
template <class F>
F gf_mul(F a, F b) { return a * b; }
template <class F>
F gf_inv(F a) { return a.inv(); }
template <class F>
F rand_elem(Prg& prg) { return F::random(prg); }

template <class T>
struct is_field : std::false_type {};
template <unsigned K>
struct is_field<GF2k<K>> : std::true_type {};

// Integers mod 2^64; payload shares.
struct Payload {
  u64 v = 0;
  static constexpr std::size_t bytes = 8;

  constexpr Payload() = default;
  constexpr explicit Payload(u64 x) : v(x) {}
  static Payload zero() { return Payload(); }
  friend Payload operator+(Payload a, Payload b) { return Payload(a.v + b.v); }
  friend Payload operator-(Payload a, Payload b) { return Payload(a.v - b.v); }
  Payload& operator+=(Payload o) { v += o.v; return *this; }
  Payload& operator-=(Payload o) { v -= o.v; return *this; }
  friend bool operator==(Payload a, Payload b) { return a.v == b.v; }
  bool is_zero() const { return v == 0; }
  void to_bytes(u8* out) const { store_le64(out, v); }
  static Payload from_bytes(const u8* in) { return Payload(load_le64(in)); }
  static Payload random(Prg& prg) { return Payload(prg.next_u64()); }
};

// Runtime-width element, used where the width is only known from a file or flag.
struct FieldValue {
  unsigned bits = 64;
  u128 v = 0;
};

namespace detail {
template <class Fn>
FieldValue dispatch(const FieldValue& a, const FieldValue& b, Fn fn) {
  if (a.bits != b.bits) throw ConfigError("field width mismatch");
  switch (a.bits) {
    case 16: return {16, fn(GF16(static_cast<u16>(a.v)), GF16(static_cast<u16>(b.v))).v};
    case 64: return {64, fn(GF64(static_cast<u64>(a.v)), GF64(static_cast<u64>(b.v))).v};
    case 128: return {128, fn(GF128(a.v), GF128(b.v)).v};
    default: throw ConfigError("unsupported field width " + std::to_string(a.bits));
  }
}
}  // namespace detail

inline FieldValue gf_add(const FieldValue& a, const FieldValue& b) {
  return detail::dispatch(a, b, [](auto x, auto y) { return x + y; });
}
inline FieldValue gf_mul(const FieldValue& a, const FieldValue& b) {
  return detail::dispatch(a, b, [](auto x, auto y) { return x * y; });
}
inline FieldValue gf_inv(const FieldValue& a) {
  return detail::dispatch(a, a, [](auto x, auto) { return x.inv(); });
}

// Vector helpers shared by the sharing layers.
template <class T>
void add_into(std::vector<T>& acc, const std::vector<T>& x) {
  if (acc.size() != x.size()) throw ProtocolError("share vector length mismatch");
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
}

template <class T>
Bytes pack_vec(const std::vector<T>& v) {
  Bytes out(v.size() * T::bytes);
  for (std::size_t i = 0; i < v.size(); ++i) v[i].to_bytes(out.data() + i * T::bytes);
  return out;
}

template <class T>
std::vector<T> unpack_vec(std::span<const u8> b, std::size_t expect) {
  if (b.size() != expect * T::bytes) throw ProtocolError("unexpected vector payload size");
  std::vector<T> v(expect);
  for (std::size_t i = 0; i < expect; ++i) v[i] = T::from_bytes(b.data() + i * T::bytes);
  return v;
}

}  // namespace mpso
