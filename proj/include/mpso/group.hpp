#pragma once

#include <gmp.h>
#include <sodium.h>

#include "mpso/common.hpp"
#include "mpso/okvs.hpp"
#include "mpso/prg.hpp"

// X25519 x-only group arithmetic for the OPRF. Every scalar is 8 times an
// integer below the prime order, so torsion components never survive.
namespace mpso {

using Point = std::array<u8, 32>;
using Scalar = std::array<u8, 32>;

namespace detail {

// s' in [2^251, 2^252), returned as little-endian bytes.
inline Scalar sample_small_scalar(Prg& prg) {
  Scalar s;
  prg.fill(s);
  s[31] = static_cast<u8>((s[31] & 0x0F) | 0x08);
  return s;
}

inline bool in_small_range(const Scalar& s) { return (s[31] & 0xF8) == 0x08; }

// 8 * s as bytes; s < 2^252 so no overflow.
inline Scalar times8(const Scalar& s) {
  Scalar o{};
  u8 carry = 0;
  for (std::size_t i = 0; i < 32; ++i) {
    o[i] = static_cast<u8>((s[i] << 3) | carry);
    carry = static_cast<u8>(s[i] >> 5);
  }
  return o;
}

struct Mpz {
  mpz_t v;
  Mpz() { mpz_init(v); }
  ~Mpz() { mpz_clear(v); }
  Mpz(const Mpz&) = delete;
  Mpz& operator=(const Mpz&) = delete;
};

// Montgomery curve y^2 = x^3 + 486662 x^2 + x over 2^255 - 19.
class CurveCheck {
 public:
  CurveCheck() {
    mpz_ui_pow_ui(p_.v, 2, 255);
    mpz_sub_ui(p_.v, p_.v, 19);
  }
  // True if u < p and u is the x-coordinate of a curve point other than (0,0).
  bool on_curve(const u8* u_le) {
    mpz_import(u_.v, 32, -1, 1, -1, 0, u_le);
    if (mpz_cmp(u_.v, p_.v) >= 0) return false;
    mpz_mul(t_.v, u_.v, u_.v);         // u^2
    mpz_mul(f_.v, t_.v, u_.v);         // u^3
    mpz_addmul_ui(f_.v, t_.v, 486662);  // + A u^2
    mpz_add(f_.v, f_.v, u_.v);         // + u
    mpz_mod(f_.v, f_.v, p_.v);
    if (mpz_sgn(f_.v) == 0) return false;
    return mpz_jacobi(f_.v, p_.v) == 1;
  }

 private:
  Mpz p_, u_, t_, f_;
};

}  // namespace detail

struct OprfKey {
  Scalar clamped{};  // 8 k'
  static OprfKey generate(Prg& prg) { return OprfKey{detail::times8(detail::sample_small_scalar(prg))}; }
};

struct BlindFactor {
  Scalar blind{};    // 8 r'
  Scalar unblind{};  // 8 u', u' = (64 r')^{-1} mod l

  static BlindFactor generate(Prg& prg) {
    sodium_once();
    Scalar sixty_four{};
    sixty_four[0] = 64;
    for (;;) {
      Scalar r = detail::sample_small_scalar(prg), t, inv;
      crypto_core_ed25519_scalar_mul(t.data(), r.data(), sixty_four.data());
      if (crypto_core_ed25519_scalar_invert(inv.data(), t.data()) != 0) continue;
      if (!detail::in_small_range(inv)) continue;
      return BlindFactor{detail::times8(r), detail::times8(inv)};
    }
  }
};

// H1: try-and-increment onto the curve.
inline Point hash_to_group(std::span<const u8> input) {
  thread_local detail::CurveCheck check;
  for (u32 ctr = 0;; ++ctr) {
    Blake2b h(32);
    h.update("mpso-h1").update_le<u32>(ctr).update(input);
    Point u = h.digest<32>();
    u[31] &= 0x7f;
    if (check.on_curve(u.data())) return u;
  }
}

inline Point scalar_mul(const Scalar& s, const Point& p) {
  Point out;
  if (crypto_scalarmult(out.data(), s.data(), p.data()) != 0) throw ProtocolError("identity group element received");
  return out;
}

// H2: domain-separated hash to gamma bits.
inline OkvsValue hash_to_bits(u32 domain, std::span<const u8> input, const Point& y, unsigned gamma) {
  Blake2b h(64);
  h.update("mpso-h2").update_le<u32>(domain).update_le<u32>(static_cast<u32>(input.size())).update(input).update(y);
  auto d = h.digest<64>();
  OkvsValue v{};
  for (std::size_t w = 0; w < 4; ++w) v[w] = load_le64(d.data() + 8 * w);
  return mask_value(v, gamma);
}

inline Point oprf_blind(std::span<const u8> input, const BlindFactor& r) { return scalar_mul(r.blind, hash_to_group(input)); }
inline Point oprf_respond(const OprfKey& k, const Point& a) { return scalar_mul(k.clamped, a); }
inline Point oprf_unblind(const Point& b, const BlindFactor& r) { return scalar_mul(r.unblind, b); }

inline OkvsValue oprf_finalize(std::span<const u8> input, const BlindFactor& r, const Point& b, unsigned gamma,
                               u32 domain = 0) {
  return hash_to_bits(domain, input, oprf_unblind(b, r), gamma);
}

inline OkvsValue oprf_eval_direct(const OprfKey& k, std::span<const u8> input, unsigned gamma, u32 domain = 0) {
  return hash_to_bits(domain, input, scalar_mul(k.clamped, hash_to_group(input)), gamma);
}

// tag || x, the OPRF input layout used by bins.
inline Bytes tagged_input(u32 tag, std::span<const u8> x) {
  ByteWriter w;
  w.le<u32>(tag);
  w.raw(x);
  return std::move(w.buf);
}

}  // namespace mpso
