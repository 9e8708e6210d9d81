#pragma once

#include <cmath>
#include <unordered_set>

#include "mpso/common.hpp"
#include "mpso/prg.hpp"

namespace mpso {

struct HashingFailure : ProtocolError {
  explicit HashingFailure(const std::string& w) : ProtocolError(w) {}
};

struct HashParams {
  Key128 key{};
  std::size_t B = 0;
  std::size_t relocation_limit = 1024;

  static HashParams for_n(std::size_t n, const Key128& key) {
    HashParams p;
    p.key = key;
    p.B = std::max<std::size_t>(1, bins_for(n));
    return p;
  }

  // h_i(x), i in {1,2,3}
  std::size_t bin(unsigned i, const Element& x) const {
    u8 buf[kMaxElementBytes + 1];
    buf[0] = static_cast<u8>(i);
    std::memcpy(buf + 1, x.data.data(), x.size);
    auto h = siphash128(key, std::span<const u8>(buf, x.size + 1u));
    return static_cast<std::size_t>((static_cast<u128>(load_le64(h.data())) * B) >> 64);
  }
  std::array<std::size_t, 3> bins(const Element& x) const { return {bin(1, x), bin(2, x), bin(3, x)}; }
};

struct TaggedItem {
  Element x;
  u8 tag = 0;

  // x || tag
  std::size_t encode(u8* out) const {
    std::memcpy(out, x.data.data(), x.size);
    out[x.size] = tag;
    return x.size + 1u;
  }
};

// All-ones of element width with tag 0; no honest party holds it.
inline TaggedItem dummy_item(std::size_t width) {
  TaggedItem t;
  t.x.size = static_cast<u8>(width);
  std::fill(t.x.data.begin(), t.x.data.begin() + static_cast<long>(width), u8{0xff});
  t.tag = 0;
  return t;
}

class CuckooTable {
 public:
  static constexpr u32 kEmpty = ~u32{0};

  CuckooTable() = default;
  CuckooTable(std::size_t B, std::size_t width) : slot_(B, kEmpty), tag_(B, 0), width_(width) {}

  std::size_t size() const { return slot_.size(); }
  bool occupied(std::size_t b) const { return slot_[b] != kEmpty; }
  // Index into the input set.
  u32 index(std::size_t b) const { return slot_[b]; }
  u8 tag(std::size_t b) const { return tag_[b]; }
  std::size_t width() const { return width_; }
  TaggedItem item(std::size_t b, const std::vector<Element>& set) const {
    if (!occupied(b)) return dummy_item(width_);
    return TaggedItem{set[slot_[b]], tag_[b]};
  }
  std::size_t count() const {
    return static_cast<std::size_t>(std::count_if(slot_.begin(), slot_.end(), [](u32 s) { return s != kEmpty; }));
  }

 private:
  friend CuckooTable cuckoo_insert(const std::vector<Element>&, const HashParams&, std::size_t);
  std::vector<u32> slot_;
  std::vector<u8> tag_;
  std::size_t width_ = 0;
};

inline std::size_t element_width(const std::vector<Element>& set, std::size_t fallback = 8) {
  return set.empty() ? fallback : set.front().size;
}

inline CuckooTable cuckoo_insert(const std::vector<Element>& X, const HashParams& p, std::size_t width = 0) {
  if (!width) width = element_width(X);
  CuckooTable t(p.B, width);
  if (X.size() > p.B) throw HashingFailure("more items than bins");
  Prg prg(Blake2b(32).update(p.key).update("cuckoo-evict").digest<32>());
  std::vector<std::array<std::size_t, 3>> hb(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) hb[i] = p.bins(X[i]);

  for (u32 i = 0; i < X.size(); ++i) {
    u32 cur = i;
    std::size_t prev_bin = ~std::size_t{0};
    bool placed = false;
    for (std::size_t step = 0; step <= p.relocation_limit; ++step) {
      for (unsigned h = 0; h < 3 && !placed; ++h) {
        std::size_t b = hb[cur][h];
        if (t.slot_[b] == CuckooTable::kEmpty) {
          t.slot_[b] = cur;
          t.tag_[b] = static_cast<u8>(h + 1);
          placed = true;
        }
      }
      if (placed) break;
      unsigned h;
      do {
        h = static_cast<unsigned>(prg.below(3));
      } while (hb[cur][h] == prev_bin && !(hb[cur][0] == hb[cur][1] && hb[cur][1] == hb[cur][2]));
      std::size_t b = hb[cur][h];
      u32 evicted = t.slot_[b];
      t.slot_[b] = cur;
      t.tag_[b] = static_cast<u8>(h + 1);
      cur = evicted;
      prev_bin = b;
    }
    if (!placed) throw HashingFailure("cuckoo relocation limit exceeded");
  }
  return t;
}

// Bin b holds every x||i with h_i(x) = b.
struct SimpleTable {
  struct Entry {
    u32 index;  // into the input set
    u8 tag;
  };
  std::vector<std::vector<Entry>> bins;
  std::size_t width = 0;

  std::size_t total() const {
    std::size_t c = 0;
    for (auto& b : bins) c += b.size();
    return c;
  }
};

inline SimpleTable simple_hash(const std::vector<Element>& X, const HashParams& p, std::size_t width = 0) {
  SimpleTable t;
  t.width = width ? width : element_width(X);
  t.bins.resize(p.B);
  for (u32 i = 0; i < X.size(); ++i) {
    auto hb = p.bins(X[i]);
    for (unsigned h = 0; h < 3; ++h) t.bins[hb[h]].push_back({i, static_cast<u8>(h + 1)});
  }
  return t;
}

// Digest width in bits: ceil(sigma + log2(m-1) + 2 log2 n) rounded up to a byte.
inline unsigned prehash_bits(unsigned m, std::size_t n, unsigned sigma) {
  double w = sigma + (m > 2 ? std::log2(static_cast<double>(m - 1)) : 0.0) +
             2.0 * std::log2(static_cast<double>(std::max<std::size_t>(n, 1)));
  auto bits = static_cast<unsigned>(std::ceil(w - 1e-9));
  return (bits + 7) / 8 * 8;
}

inline std::vector<Element> pre_hash(const std::vector<Element>& X, const Key128& key, unsigned bits) {
  if (bits / 8 > kMaxElementBytes) throw ConfigError("pre-hash digest wider than 256 bits");
  std::vector<Element> out;
  out.reserve(X.size());
  for (auto& x : X) {
    Element d;
    d.size = static_cast<u8>(bits / 8);
    u8 full[64];
    crypto_generichash_blake2b(full, sizeof full, x.data.data(), x.size, key.data(), key.size());
    std::memcpy(d.data.data(), full, d.size);
    out.push_back(d);
  }
  return out;
}

inline void require_distinct(const std::vector<Element>& X) {
  std::unordered_set<Element, ElementHash> seen(X.begin(), X.end());
  if (seen.size() != X.size()) throw ConfigError("duplicate element in input set");
}

}  // namespace mpso
