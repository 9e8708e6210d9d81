#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mpso {

using u8 = std::uint8_t;
using u16 = std::uint16_t;
using u32 = std::uint32_t;
using u64 = std::uint64_t;
using u128 = unsigned __int128;
using Bytes = std::vector<u8>;
using PartyId = unsigned;  // 1-based, P_1 is the leader

// Exit codes double as category ids.
enum class ErrorCategory : int { config = 2, correlation = 3, protocol = 4, io = 5 };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory c, const std::string& what) : std::runtime_error(what), cat_(c) {}
  ErrorCategory category() const noexcept { return cat_; }
  int exit_code() const noexcept { return static_cast<int>(cat_); }

 private:
  ErrorCategory cat_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorCategory::config, w) {}
};
struct CorrelationError : Error {
  explicit CorrelationError(const std::string& w) : Error(ErrorCategory::correlation, w) {}
};
struct ProtocolError : Error {
  explicit ProtocolError(const std::string& w) : Error(ErrorCategory::protocol, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorCategory::io, w) {}
};

inline constexpr std::size_t kMaxElementBytes = 32;

// Fixed-capacity byte string; avoids a heap allocation per set element.
struct Element {
  std::array<u8, kMaxElementBytes> data{};
  u8 size = 0;

  Element() = default;
  explicit Element(std::span<const u8> b) {
    if (b.size() > kMaxElementBytes) throw ConfigError("element wider than 256 bits");
    size = static_cast<u8>(b.size());
    std::copy(b.begin(), b.end(), data.begin());
  }
  // Big-endian encoding of v in `width` bytes.
  static Element from_u64(u64 v, std::size_t width = 8) {
    Element e;
    e.size = static_cast<u8>(width);
    for (std::size_t i = 0; i < width && i < 8; ++i) e.data[width - 1 - i] = static_cast<u8>(v >> (8 * i));
    return e;
  }
  u64 to_u64() const {
    u64 v = 0;
    for (std::size_t i = 0; i < size; ++i) v = (v << 8) | data[i];
    return v;
  }
  std::span<const u8> bytes() const { return {data.data(), size}; }
  friend bool operator==(const Element& a, const Element& b) {
    return a.size == b.size && std::equal(a.data.begin(), a.data.begin() + a.size, b.data.begin());
  }
  friend bool operator<(const Element& a, const Element& b) {
    return std::lexicographical_compare(a.data.begin(), a.data.begin() + a.size, b.data.begin(),
                                        b.data.begin() + b.size);
  }
};

struct ElementHash {
  std::size_t operator()(const Element& e) const noexcept {
    u64 h = 1469598103934665603ull ^ e.size;
    for (std::size_t i = 0; i < e.size; ++i) h = (h ^ e.data[i]) * 1099511628211ull;
    return static_cast<std::size_t>(h);
  }
};

inline std::string to_hex(std::span<const u8> b) {
  static const char* d = "0123456789abcdef";
  std::string s;
  s.reserve(b.size() * 2);
  for (u8 c : b) {
    s.push_back(d[c >> 4]);
    s.push_back(d[c & 15]);
  }
  return s;
}

inline Bytes from_hex(std::string_view s) {
  auto nib = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (s.size() % 2) throw ConfigError("odd-length hex string");
  Bytes out(s.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nib(s[2 * i]), lo = nib(s[2 * i + 1]);
    if (hi < 0 || lo < 0) throw ConfigError("bad hex digit in '" + std::string(s) + "'");
    out[i] = static_cast<u8>(hi << 4 | lo);
  }
  return out;
}

// Little-endian serialization helpers.
class ByteWriter {
 public:
  Bytes buf;

  void u8_(u8 v) { buf.push_back(v); }
  template <class T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<u8>(v >> (8 * i)));
  }
  void raw(std::span<const u8> b) { buf.insert(buf.end(), b.begin(), b.end()); }
  void bytes(std::span<const u8> b) {
    le<u32>(static_cast<u32>(b.size()));
    raw(b);
  }
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const u8> b) : b_(b) {}

  template <class T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  u8 u8_() { return le<u8>(); }
  std::span<const u8> raw(std::size_t n) {
    need(n);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::span<const u8> bytes() { return raw(le<u32>()); }
  std::size_t remaining() const { return b_.size() - pos_; }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw ProtocolError("truncated message");
  }
  std::span<const u8> b_;
  std::size_t pos_ = 0;
};

inline unsigned ceil_log2(u64 x) {
  unsigned k = 0;
  while (k < 64 && (u64{1} << k) < x) ++k;
  return k;
}

inline std::size_t bins_for(std::size_t n) {
  // ceil(1.27 n) without floating-point drift
  return (n * 127 + 99) / 100;
}

}  // namespace mpso
