#include <gtest/gtest.h>

#include <map>

#include "mpso/hashing.hpp"

using namespace mpso;

namespace {

std::vector<Element> random_elems(Prg& prg, std::size_t n, u64 universe) {
  std::set<u64> s;
  while (s.size() < n) s.insert(prg.below(universe));
  std::vector<Element> out;
  for (u64 v : s) out.push_back(Element::from_u64(v));
  return out;
}

}  // namespace

TEST(Cuckoo, EmptySet) {
  auto p = HashParams::for_n(16, Key128{});
  auto t = cuckoo_insert({}, p, 8);
  EXPECT_EQ(t.count(), 0u);
  EXPECT_EQ(t.size(), 21u);
}

TEST(Cuckoo, PlacementAndCount) {
  Prg prg(seed_from_u64(1));
  auto X = random_elems(prg, 1024, u64{1} << 40);
  auto p = HashParams::for_n(1024, prg.next_key128());
  EXPECT_EQ(p.B, 1301u);
  auto t = cuckoo_insert(X, p);
  EXPECT_EQ(t.count(), X.size());
  std::vector<int> seen(X.size());
  for (std::size_t b = 0; b < t.size(); ++b) {
    if (!t.occupied(b)) continue;
    EXPECT_EQ(p.bin(t.tag(b), X[t.index(b)]), b);
    ++seen[t.index(b)];
  }
  for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(Cuckoo, Deterministic) {
  Prg prg(seed_from_u64(2));
  auto X = random_elems(prg, 500, 1 << 20);
  auto p = HashParams::for_n(500, prg.next_key128());
  auto a = cuckoo_insert(X, p), b = cuckoo_insert(X, p);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.index(i), b.index(i));
    EXPECT_EQ(a.tag(i), b.tag(i));
  }
}

TEST(SimpleHash, CountsAndCollisions) {
  Prg prg(seed_from_u64(3));
  auto X = random_elems(prg, 300, 1 << 20);
  auto p = HashParams::for_n(300, prg.next_key128());
  auto t = simple_hash(X, p);
  EXPECT_EQ(t.total(), 900u);
  // Find an element with h_1 = h_2 under a tiny table to exercise the collision case.
  auto q = HashParams::for_n(1, prg.next_key128());
  auto s = simple_hash({Element::from_u64(7)}, q);
  ASSERT_EQ(q.B, 2u);
  EXPECT_EQ(s.total(), 3u);
  std::map<std::size_t, std::vector<u8>> tags;
  for (std::size_t b = 0; b < s.bins.size(); ++b)
    for (auto& e : s.bins[b]) tags[b].push_back(e.tag);
  std::size_t max_in_bin = 0;
  for (auto& [b, v] : tags) max_in_bin = std::max(max_in_bin, v.size());
  EXPECT_GE(max_in_bin, 2u);  // pigeonhole with 3 tags over 2 bins
}

TEST(Hashing, Alignment) {
  Prg prg(seed_from_u64(4));
  for (int trial = 0; trial < 20; ++trial) {
    auto A = random_elems(prg, 256, 1024), Bset = random_elems(prg, 256, 1024);
    auto p = HashParams::for_n(256, prg.next_key128());
    auto c = cuckoo_insert(A, p);
    auto s = simple_hash(Bset, p);
    std::set<Element> inB(Bset.begin(), Bset.end());
    for (std::size_t b = 0; b < c.size(); ++b) {
      if (!c.occupied(b)) continue;
      const Element& x = A[c.index(b)];
      if (!inB.count(x)) continue;
      bool found = false;
      for (auto& e : s.bins[b]) found |= Bset[e.index] == x && e.tag == c.tag(b);
      ASSERT_TRUE(found);
    }
  }
}

TEST(PreHash, Widths) {
  EXPECT_EQ(prehash_bits(3, 1 << 12, 40), 72u);
  EXPECT_EQ(prehash_bits(10, 1 << 20, 40), 88u);
  Key128 k{};
  auto a = pre_hash({Element::from_u64(5)}, k, 72), b = pre_hash({Element::from_u64(5)}, k, 72);
  EXPECT_EQ(a[0], b[0]);
  EXPECT_EQ(a[0].size, 9u);
}

TEST(Hashing, DuplicateRejected) {
  EXPECT_THROW(require_distinct({Element::from_u64(1), Element::from_u64(1)}), ConfigError);
}
