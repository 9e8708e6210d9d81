#pragma once

#include <sodium.h>

#include <array>
#include <initializer_list>
#include <string_view>

#include "mpso/common.hpp"

namespace mpso {

using Seed = std::array<u8, 32>;
using Key128 = std::array<u8, 16>;

inline void sodium_once() {
  static const int ok = sodium_init();
  if (ok < 0) throw Error(ErrorCategory::io, "libsodium init failed");
}

// Incremental BLAKE2b wrapper.
class Blake2b {
 public:
  explicit Blake2b(std::size_t outlen = 32) : outlen_(outlen) {
    sodium_once();
    crypto_generichash_blake2b_init(&st_, nullptr, 0, outlen);
  }
  Blake2b& update(std::span<const u8> b) {
    crypto_generichash_blake2b_update(&st_, b.data(), b.size());
    return *this;
  }
  Blake2b& update(std::string_view s) {
    return update(std::span<const u8>(reinterpret_cast<const u8*>(s.data()), s.size()));
  }
  template <class T>
  Blake2b& update_le(T v) {
    u8 b[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<u8>(v >> (8 * i));
    return update(std::span<const u8>(b, sizeof(T)));
  }
  void final(std::span<u8> out) {
    crypto_generichash_blake2b_final(&st_, out.data(), out.size());
  }
  template <std::size_t N>
  std::array<u8, N> digest() {
    std::array<u8, N> o{};
    final(o);
    return o;
  }

 private:
  crypto_generichash_blake2b_state st_{};
  std::size_t outlen_;
};

// Domain-separated child seed.
inline Seed derive_seed(const Seed& parent, std::string_view domain, u64 a = 0, u64 b = 0) {
  Blake2b h(32);
  h.update(parent).update(domain).update_le<u64>(a).update_le<u64>(b);
  return h.digest<32>();
}

inline Seed seed_from_u64(u64 s) {
  Blake2b h(32);
  h.update("mpso-root-seed").update_le<u64>(s);
  return h.digest<32>();
}

// SipHash-2-4 with 128-bit output.
inline std::array<u8, 16> siphash128(const Key128& key, std::span<const u8> msg) {
  sodium_once();
  std::array<u8, 16> out{};
  crypto_shorthash_siphashx24(out.data(), msg.data(), msg.size(), key.data());
  return out;
}

inline u64 load_le64(const u8* p) {
  u64 v;
  std::memcpy(&v, p, 8);
  return v;
}

inline void store_le64(u8* p, u64 v) { std::memcpy(p, &v, 8); }

// ChaCha20 keystream PRG.
class Prg {
 public:
  Prg() : Prg(Seed{}) {}
  explicit Prg(const Seed& seed) : key_(seed) { sodium_once(); }

  void fill(std::span<u8> out) {
    std::size_t done = 0;
    while (done < out.size()) {
      if (pos_ == buf_.size()) refill();
      std::size_t n = std::min(out.size() - done, buf_.size() - pos_);
      std::memcpy(out.data() + done, buf_.data() + pos_, n);
      pos_ += n;
      done += n;
    }
  }
  u64 next_u64() {
    u8 b[8];
    fill(b);
    return load_le64(b);
  }
  u128 next_u128() {
    u128 lo = next_u64();
    u128 hi = next_u64();
    return lo | (hi << 64);
  }
  bool next_bit() { return next_u64() & 1; }
  // Uniform in [0, n).
  u64 below(u64 n) {
    if (n <= 1) return 0;
    u64 lim = ~u64{0} - (~u64{0} % n);
    for (;;) {
      u64 v = next_u64();
      if (v < lim) return v % n;
    }
  }
  Seed next_seed() {
    Seed s;
    fill(s);
    return s;
  }
  Key128 next_key128() {
    Key128 k;
    fill(k);
    return k;
  }
  Prg child(std::string_view domain, u64 a = 0, u64 b = 0) const { return Prg(derive_seed(key_, domain, a, b)); }

 private:
  void refill() {
    u8 nonce[crypto_stream_chacha20_NONCEBYTES] = {};
    store_le64(nonce, block_++);
    crypto_stream_chacha20(buf_.data(), buf_.size(), nonce, key_.data());
    pos_ = 0;
  }

  Seed key_;
  std::array<u8, 4096> buf_{};
  std::size_t pos_ = 4096;
  u64 block_ = 0;
};

template <class It>
void shuffle_in_place(It first, It last, Prg& prg) {
  auto n = static_cast<u64>(last - first);
  for (u64 i = n; i > 1; --i) std::swap(first[i - 1], first[prg.below(i)]);
}

}  // namespace mpso
