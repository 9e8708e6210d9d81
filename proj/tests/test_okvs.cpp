#include <gtest/gtest.h>

#include <cmath>

#include "mpso/okvs.hpp"

using namespace mpso;

namespace {

std::vector<OkvsKey> random_keys(Prg& prg, std::size_t n) {
  std::vector<OkvsKey> k(n);
  for (auto& x : k) {
    x.size = 16;
    prg.fill(std::span<u8>(x.data.data(), 16));
  }
  return k;
}

std::vector<OkvsValue> random_values(Prg& prg, std::size_t n, unsigned gamma) {
  std::vector<OkvsValue> v(n);
  for (auto& x : v) x = mask_value({prg.next_u64(), prg.next_u64(), prg.next_u64(), prg.next_u64()}, gamma);
  return v;
}

}  // namespace

TEST(Okvs, EmptyAndSingle) {
  Prg prg(seed_from_u64(1));
  auto e = okvs_encode({}, {}, 64, prg);
  EXPECT_EQ(e.len, 64u);
  auto k = random_keys(prg, 1);
  auto v = random_values(prg, 1, 64);
  auto s = okvs_encode(k, v, 64, prg);
  EXPECT_EQ(s.decode(k[0].bytes()), v[0]);
  EXPECT_EQ(s.decode(k[0].bytes()), s.decode(k[0].bytes()));
}

TEST(Okvs, RoundTripAcrossSizes) {
  Prg prg(seed_from_u64(2));
  for (std::size_t n : {1u, 10u, 1000u, 10000u}) {
    int reps = n >= 10000 ? 20 : 100;
    for (int r = 0; r < reps; ++r) {
      unsigned gamma = r % 3 == 0 ? 64 : r % 3 == 1 ? 24 : 200;
      auto k = random_keys(prg, n);
      auto v = random_values(prg, n, gamma);
      auto e = okvs_encode(k, v, gamma, prg);
      EXPECT_EQ(e.len, okvs_length(n));
      for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(e.decode(k[i].bytes()), v[i]);
    }
  }
}

TEST(Okvs, WireRoundTrip) {
  Prg prg(seed_from_u64(3));
  for (unsigned gamma : {8u, 40u, 64u, 72u, 256u}) {
    auto k = random_keys(prg, 100);
    auto v = random_values(prg, 100, gamma);
    auto e = okvs_encode(k, v, gamma, prg);
    Bytes b = e.serialize();
    EXPECT_EQ(b.size(), 1 + 16 + 2 + 8 + e.len * ((gamma + 7) / 8));
    ByteReader rd(b);
    auto d = OkvsEncoding::deserialize(rd);
    EXPECT_TRUE(rd.done());
    for (std::size_t i = 0; i < 100; ++i) ASSERT_EQ(d.decode(k[i].bytes()), v[i]);
  }
}

TEST(Okvs, UnprogrammedKeysRarelyCollide) {
  Prg prg(seed_from_u64(4));
  auto k = random_keys(prg, 1000);
  auto v = random_values(prg, 1000, 64);
  auto e = okvs_encode(k, v, 64, prg);
  std::set<u64> programmed;
  for (auto& x : v) programmed.insert(x[0]);
  int hits = 0;
  for (auto& q : random_keys(prg, 100000)) hits += programmed.count(e.decode(q.bytes())[0]) ? 1 : 0;
  EXPECT_EQ(hits, 0);
}

TEST(Okvs, SlotBitsLookUniform) {
  Prg prg(seed_from_u64(5));
  const int encodings = 10000;
  const std::size_t n = 50;
  std::vector<int> ones(okvs_length(n) * 64);
  for (int t = 0; t < encodings; ++t) {
    auto e = okvs_encode(random_keys(prg, n), random_values(prg, n, 64), 64, prg);
    for (std::size_t s = 0; s < e.len; ++s)
      for (int b = 0; b < 64; ++b) ones[s * 64 + b] += (e.slots[s] >> b) & 1;
  }
  double sd = std::sqrt(encodings * 0.25);
  for (int c : ones) ASSERT_LT(std::abs(c - encodings * 0.5), 5 * sd);
}
