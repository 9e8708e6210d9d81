#pragma once

#include "mpso/common.hpp"
#include "mpso/prg.hpp"

namespace mpso {

inline constexpr std::size_t kBandWidth = 64;
inline constexpr unsigned kMaxValueBits = 256;
inline constexpr unsigned kOkvsAttempts = 8;
inline constexpr u8 kOkvsVersion = 1;

struct OkvsFailure : ProtocolError {
  explicit OkvsFailure(const std::string& w) : ProtocolError(w) {}
};

using OkvsValue = std::array<u64, 4>;

struct OkvsKey {
  std::array<u8, 48> data{};
  u8 size = 0;
  std::span<const u8> bytes() const { return {data.data(), size}; }
};

inline std::size_t okvs_words(unsigned gamma) { return (gamma + 63) / 64; }
inline std::size_t okvs_length(std::size_t n) { return std::max<std::size_t>(kBandWidth, (n * 130 + 99) / 100); }

inline OkvsValue mask_value(OkvsValue v, unsigned gamma) {
  for (std::size_t w = 0; w < 4; ++w) {
    unsigned lo = static_cast<unsigned>(w * 64);
    if (gamma <= lo) v[w] = 0;
    else if (gamma < lo + 64) v[w] &= (u64{1} << (gamma - lo)) - 1;
  }
  return v;
}

struct OkvsEncoding {
  Key128 seed{};
  unsigned gamma = 64;
  std::size_t len = 0;
  std::vector<u64> slots;  // len * words(gamma)
  unsigned attempts = 0;   // encode attempts used, not serialized

  std::size_t words() const { return okvs_words(gamma); }

  struct Row {
    std::size_t start;
    u64 band;
  };
  Row row(std::span<const u8> key) const { return row_for(seed, len, key); }
  static Row row_for(const Key128& seed, std::size_t len, std::span<const u8> key) {
    auto h = siphash128(seed, key);
    u64 h0 = load_le64(h.data()), h1 = load_le64(h.data() + 8);
    std::size_t span = len - kBandWidth + 1;
    Row r{static_cast<std::size_t>((static_cast<u128>(h0) * span) >> 64), h1 ? h1 : 1};
    return r;
  }

  OkvsValue decode(std::span<const u8> key) const {
    Row r = row(key);
    OkvsValue v{};
    const std::size_t W = words();
    u64 band = r.band;
    while (band) {
      unsigned j = static_cast<unsigned>(__builtin_ctzll(band));
      band &= band - 1;
      const u64* s = &slots[(r.start + j) * W];
      for (std::size_t w = 0; w < W; ++w) v[w] ^= s[w];
    }
    return v;
  }

  Bytes serialize() const {
    ByteWriter w;
    w.u8_(kOkvsVersion);
    w.raw(seed);
    w.le<u16>(static_cast<u16>(gamma));
    w.le<u64>(len);
    const std::size_t vb = (gamma + 7) / 8, W = words();
    w.buf.reserve(w.buf.size() + len * vb);
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t b = 0; b < vb; ++b) w.buf.push_back(static_cast<u8>(slots[i * W + b / 8] >> (8 * (b % 8))));
    return std::move(w.buf);
  }
  static OkvsEncoding deserialize(ByteReader& r) {
    OkvsEncoding e;
    if (r.u8_() != kOkvsVersion) throw ProtocolError("unsupported OKVS version");
    auto s = r.raw(16);
    std::copy(s.begin(), s.end(), e.seed.begin());
    e.gamma = r.le<u16>();
    e.len = r.le<u64>();
    if (e.gamma == 0 || e.gamma > kMaxValueBits || e.len < kBandWidth) throw ProtocolError("malformed OKVS header");
    const std::size_t vb = (e.gamma + 7) / 8, W = e.words();
    auto body = r.raw(e.len * vb);
    e.slots.assign(e.len * W, 0);
    for (std::size_t i = 0; i < e.len; ++i)
      for (std::size_t b = 0; b < vb; ++b) e.slots[i * W + b / 8] |= static_cast<u64>(body[i * vb + b]) << (8 * (b % 8));
    return e;
  }
};

namespace detail {

// One attempt of banded Gaussian elimination; false if singular.
inline bool okvs_try(OkvsEncoding& enc, std::span<const OkvsKey> keys, std::span<const OkvsValue> vals, Prg& prg) {
  const std::size_t n = keys.size(), W = enc.words(), len = enc.len;
  std::vector<OkvsEncoding::Row> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = enc.row(keys[i].bytes());
  std::vector<u32> order(n);
  for (u32 i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](u32 a, u32 b) { return rows[a].start < rows[b].start; });

  std::vector<u64> rval(n * W);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t w = 0; w < W; ++w) rval[i * W + w] = vals[i][w];

  constexpr u32 kNone = ~u32{0};
  std::vector<u32> pivot(len, kNone);
  for (u32 i : order) {
    auto& r = rows[i];
    for (;;) {
      if (!r.band) {
        for (std::size_t w = 0; w < W; ++w)
          if (rval[i * W + w]) return false;
        break;  // redundant consistent equation
      }
      unsigned tz = static_cast<unsigned>(__builtin_ctzll(r.band));
      r.start += tz;
      r.band >>= tz;
      u32 p = pivot[r.start];
      if (p == kNone) {
        pivot[r.start] = i;
        break;
      }
      r.band ^= rows[p].band;
      for (std::size_t w = 0; w < W; ++w) rval[i * W + w] ^= rval[p * W + w];
    }
  }

  enc.slots.assign(len * W, 0);
  for (std::size_t c = 0; c < len; ++c) {
    if (pivot[c] != kNone) continue;
    OkvsValue v{};
    for (std::size_t w = 0; w < W; ++w) v[w] = prg.next_u64();
    v = mask_value(v, enc.gamma);
    for (std::size_t w = 0; w < W; ++w) enc.slots[c * W + w] = v[w];
  }
  for (std::size_t c = len; c-- > 0;) {
    u32 p = pivot[c];
    if (p == kNone) continue;
    u64* out = &enc.slots[c * W];
    for (std::size_t w = 0; w < W; ++w) out[w] = rval[p * W + w];
    u64 band = rows[p].band & ~u64{1};
    while (band) {
      unsigned j = static_cast<unsigned>(__builtin_ctzll(band));
      band &= band - 1;
      const u64* s = &enc.slots[(c + j) * W];
      for (std::size_t w = 0; w < W; ++w) out[w] ^= s[w];
    }
  }
  return true;
}

}  // namespace detail

// Values must already fit in gamma bits.
inline OkvsEncoding okvs_encode(std::span<const OkvsKey> keys, std::span<const OkvsValue> vals, unsigned gamma,
                                Prg& prg) {
  if (keys.size() != vals.size()) throw ConfigError("okvs: key/value count mismatch");
  if (gamma == 0 || gamma > kMaxValueBits) throw ConfigError("okvs: value width out of range");
  OkvsEncoding enc;
  enc.gamma = gamma;
  enc.len = okvs_length(keys.size());
  for (unsigned a = 1; a <= kOkvsAttempts; ++a) {
    enc.seed = prg.next_key128();
    enc.attempts = a;
    if (detail::okvs_try(enc, keys, vals, prg)) return enc;
  }
  throw OkvsFailure("okvs encoding failed after 8 attempts");
}

}  // namespace mpso
