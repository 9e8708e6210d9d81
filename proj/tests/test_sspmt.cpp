#include <gtest/gtest.h>

#include "mpso/sspmt.hpp"
#include "support.hpp"

using namespace mpso;
using mpso::testing::LocalSession;

namespace {

CorrelationPlan two_party_plan(u64 bit_triples) {
  CorrelationPlan p;
  p.m = 2;
  p.field_bits = 64;
  p.bit_triples[{1, 2}] = bit_triples;
  return p;
}

OkvsValue random_okvs_value(Prg& prg, unsigned gamma) {
  OkvsValue v{};
  for (auto& w : v) w = prg.next_u64();
  return mask_value(v, gamma);
}

struct PmtInstance {
  std::vector<Element> X, Y;  // sender set, receiver set
};

PmtInstance random_instance(Prg& prg, std::size_t n) {
  auto sets = mpso::testing::random_sets(prg, 2, n, 4 * n);
  return {mpso::testing::to_elements(sets[0]), mpso::testing::to_elements(sets[1])};
}

}  // namespace

TEST(Opprf, ProgrammedValuesRecoveredOthersPseudorandom) {
  for (bool ideal : {false, true}) {
    LocalSession s(two_party_plan(0), 1, ideal);
    Prg prg(seed_from_u64(2));
    auto inst = random_instance(prg, 200);
    auto hp = HashParams::for_n(200, prg.next_key128());
    auto ct = cuckoo_insert(inst.Y, hp);
    auto st = simple_hash(inst.X, hp);
    const unsigned gamma = 64;
    std::vector<OpprfEntry> entries;
    std::map<std::pair<u32, u32>, OkvsValue> programmed;  // (bin, sender index) -> value
    for (u32 b = 0; b < st.bins.size(); ++b)
      for (auto& e : st.bins[b]) {
        OkvsValue v = random_okvs_value(prg, gamma);
        entries.push_back({b, e.index, e.tag, v});
        (programmed[std::pair(b, e.index)]) = v;
      }
    std::vector<OkvsValue> got;
    OprfView view;
    s.run([&](Party& P) {
      if (P.id == 1) {
        oprf_answer(P, 2);
        opprf_program(P, 2, inst.X, entries, gamma);
      } else {
        view = oprf_query(P, std::vector<PartyId>{1}, cuckoo_items(ct, inst.Y));
        got = opprf_receive(P, 1, view, gamma);
      }
    });
    std::size_t hits = 0;
    for (u32 b = 0; b < ct.size(); ++b) {
      bool expect_hit = false;
      if (ct.occupied(b)) {
        const Element& y = inst.Y[ct.index(b)];
        for (auto& e : st.bins[b])
          if (inst.X[e.index] == y && e.tag == ct.tag(b)) {
            EXPECT_EQ(got[b], (programmed[std::pair(b, e.index)]));
            expect_hit = true;
            ++hits;
          }
      }
      if (!expect_hit) {
        for (auto& e : st.bins[b]) EXPECT_NE(got[b], (programmed[std::pair(b, e.index)]));
      }
    }
    EXPECT_GT(hits, 0u);
  }
}

TEST(Sspeqt, MatchesPlainEquality) {
  const std::size_t n = 10000;
  const unsigned gamma = 40;
  LocalSession s(two_party_plan(n * peqt_and_count(gamma)), 3);
  Prg prg(seed_from_u64(4));
  std::vector<OkvsValue> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = random_okvs_value(prg, gamma);
    switch (i % 3) {
      case 0: b[i] = a[i]; break;
      case 1: b[i] = a[i]; b[i][0] ^= u64{1} << (i % gamma); break;
      default: b[i] = random_okvs_value(prg, gamma);
    }
  }
  std::vector<u8> s1, s2;
  s.run([&](Party& P) {
    if (P.id == 1) s1 = sspeqt(P, 2, true, a, gamma);
    else s2 = sspeqt(P, 1, false, b, gamma);
  });
  std::size_t ones = 0;
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_EQ(s1[i] ^ s2[i], a[i] == b[i] ? 1 : 0) << i;
    ones += s1[i];
  }
  // Individual shares look like fair coins.
  EXPECT_NEAR(static_cast<double>(ones) / n, 0.5, 0.03);
}

TEST(Sspmt, MatchesPlaintextMembership) {
  Prg prg(seed_from_u64(5));
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = trial < 18 ? 64 : 1024;
    auto inst = random_instance(prg, n);
    auto hp = HashParams::for_n(n, prg.next_key128());
    auto ct = cuckoo_insert(inst.Y, hp);
    auto st = simple_hash(inst.X, hp);
    unsigned gamma = pmt_gamma(40, 1, hp.B);
    LocalSession s(two_party_plan(hp.B * peqt_and_count(gamma)), 100 + trial, trial % 2);
    std::vector<u8> e0, e1;
    s.run([&](Party& P) {
      if (P.id == 1) {
        oprf_answer(P, 2);
        e0 = bsspmt_send(P, 2, inst.X, st, gamma);
      } else {
        auto view = oprf_query(P, std::vector<PartyId>{1}, cuckoo_items(ct, inst.Y));
        e1 = bsspmt_recv(P, 1, view, gamma);
      }
    });
    std::set<Element> X(inst.X.begin(), inst.X.end());
    for (std::size_t b = 0; b < hp.B; ++b) {
      u8 expect = ct.occupied(b) && X.count(inst.Y[ct.index(b)]) ? 1 : 0;
      ASSERT_EQ(e0[b] ^ e1[b], expect) << "trial " << trial << " bin " << b;
    }
  }
}
