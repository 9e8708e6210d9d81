#include <gtest/gtest.h>

#include "mpso/mzs.hpp"
#include "support.hpp"

using namespace mpso;
using mpso::testing::LocalSession;

namespace {

struct Instance {
  unsigned m;
  std::vector<std::set<u64>> sets;  // index 0 = X_1
  HashParams hp;
  std::vector<Tables> tables;       // 1-based

  Instance(Prg& prg, unsigned m_, std::size_t n) : m(m_) {
    sets = mpso::testing::random_sets(prg, m, n, 4 * n);
    hp = HashParams::for_n(n, prg.next_key128());
    tables.resize(m + 1);
    for (PartyId p = 1; p <= m; ++p) tables[p] = Tables::build(mpso::testing::to_elements(sets[p - 1]), hp, 8);
  }
  // Membership bitmask of the pivot's bin-b item (0 for an empty bin).
  u64 members(PartyId pivot, std::size_t b) const {
    const auto& ct = tables[pivot].cuckoo;
    if (!ct.occupied(b)) return 0;
    u64 x = tables[pivot].X[ct.index(b)].to_u64(), mask = 0;
    for (unsigned i = 1; i <= m; ++i)
      if (sets[i - 1].count(x)) mask |= u64{1} << i;
    return mask;
  }
};

template <class F>
std::vector<F> reconstruct(const std::vector<std::vector<F>>& shares) {
  std::vector<F> out(shares[1].size());
  for (std::size_t p = 1; p < shares.size(); ++p) add_into(out, shares[p]);
  return out;
}

Pred random_sep(Prg& prg, unsigned m, PartyId pivot, unsigned depth) {
  auto pick = [&] {
    unsigned j;
    do j = 1 + static_cast<unsigned>(prg.below(m));
    while (j == pivot);
    return j;
  };
  if (depth == 0 || prg.below(3) == 0) return prg.next_bit() ? Pred::in(pick()) : Pred::not_in(pick());
  std::vector<Pred> kids;
  std::size_t k = 2 + prg.below(2);
  for (std::size_t i = 0; i < k; ++i) kids.push_back(random_sep(prg, m, pivot, depth - 1));
  return prg.next_bit() ? Pred::conj(std::move(kids)) : Pred::disj(std::move(kids));
}

}  // namespace

TEST(Mzs, PureMemberMatchesIntersection) {
  Prg prg(seed_from_u64(1));
  Instance inst(prg, 4, 256);
  const std::size_t B = inst.hp.B;
  auto plan = mpso::testing::make_plan(4, 64);
  auto group = all_parties(4);
  bpmzs_demand(plan, group, B);
  LocalSession s(plan, 2);
  std::vector<std::vector<GF64>> sh(5);
  s.run([&](Party& P) { sh[P.id] = bpmzs<GF64>(P, 1, group, inst.tables[P.id]); });
  auto sec = reconstruct(sh);
  std::size_t zeros = 0;
  for (std::size_t b = 0; b < B; ++b) {
    bool expect = inst.members(1, b) == 0b11110;
    EXPECT_EQ(sec[b].is_zero(), expect) << b;
    zeros += expect;
  }
  EXPECT_GT(zeros, 0u);
}

TEST(Mzs, PureNonMemberMatchesComplementOfUnion) {
  Prg prg(seed_from_u64(3));
  Instance inst(prg, 3, 256);
  const std::size_t B = inst.hp.B;
  unsigned pmt = pmt_gamma(40, 3, B);
  auto plan = mpso::testing::make_plan(3, 64);
  std::vector<PartyId> group{1, 2, 3};
  bpnmzs_demand(plan, 3, group, B, pmt);
  LocalSession s(plan, 4);
  std::vector<std::vector<GF64>> sh(4);
  s.run([&](Party& P) { sh[P.id] = bpnmzs<GF64>(P, 3, group, inst.tables[P.id], pmt); });
  auto sec = reconstruct(sh);
  for (std::size_t b = 0; b < B; ++b) EXPECT_EQ(sec[b].is_zero(), (inst.members(3, b) & 0b0110) == 0) << b;
}

TEST(Mzs, PayloadVariantSumsPayloads) {
  Prg prg(seed_from_u64(5));
  Instance inst(prg, 3, 128);
  const std::size_t B = inst.hp.B;
  std::vector<std::vector<u64>> pay(4);
  for (PartyId p = 1; p <= 3; ++p)
    for (auto& x : inst.tables[p].X) pay[p].push_back(x.to_u64() * 1000 + p);
  auto plan = mpso::testing::make_plan(3, 64);
  auto group = all_parties(3);
  bpmzs_demand(plan, group, B);
  LocalSession s(plan, 6);
  std::vector<std::vector<GF64>> sh(4);
  std::vector<std::vector<Payload>> w(4);
  s.run([&](Party& P) {
    auto r = bpmzsp<GF64>(P, 1, group, inst.tables[P.id], pay[P.id]);
    sh[P.id] = r.s;
    w[P.id] = r.w;
  });
  auto sec = reconstruct(sh);
  auto ws = reconstruct(w);
  for (std::size_t b = 0; b < B; ++b) {
    bool all = inst.members(1, b) == 0b1110;
    EXPECT_EQ(sec[b].is_zero(), all);
    if (all) {
      u64 x = inst.tables[1].X[inst.tables[1].cuckoo.index(b)].to_u64();
      EXPECT_EQ(ws[b].v, x * 1000 + 2 + x * 1000 + 3);
    }
  }
}

TEST(Mzs, GeneralFormulaTruthTable) {
  Prg prg(seed_from_u64(7));
  for (int trial = 0; trial < 12; ++trial) {
    const unsigned m = trial % 2 ? 4 : 3;
    const PartyId pivot = 1 + static_cast<PartyId>(prg.below(m));
    Instance inst(prg, m, 128);
    Pred q = trial == 0 ? Pred::disj({Pred::not_in(pivot % m + 1), Pred::in((pivot + 1) % m + 1)})
                        : random_sep(prg, m, pivot, 2);
    const std::size_t B = inst.hp.B;
    unsigned pmt = pmt_gamma(40, 8, B);
    auto plan = mpso::testing::make_plan(m, 64);
    bmzs_demand(plan, pivot, q, B, pmt);
    LocalSession s(plan, 100 + trial, trial % 3 == 2);
    std::vector<std::vector<GF64>> sh(m + 1);
    s.run([&](Party& P) { sh[P.id] = bmzs<GF64>(P, pivot, q, inst.tables[P.id], pmt); });
    auto sec = reconstruct(sh);
    for (std::size_t b = 0; b < B; ++b)
      ASSERT_EQ(sec[b].is_zero(), eval_pred_bits(q, inst.members(pivot, b)))
          << to_string(q) << " pivot " << pivot << " bin " << b;
    // Parties outside the formula stay silent.
    u64 involved = bmzs_group_mask(pivot, q);
    for (PartyId p = 1; p <= m; ++p)
      if (!((involved >> p) & 1)) {
        EXPECT_EQ(s.meshes[p]->total_stats().frames_sent, 0u);
      }
  }
}

TEST(Mzs, OrOfZeroAndRandomIsZero) {
  // Direct check of the composition rules on hand-made relaxed sharings.
  auto plan = mpso::testing::make_plan(2, 64);
  plan.beaver[party_mask(all_parties(2))] = 8;
  LocalSession s(plan, 9);
  Prg prg(seed_from_u64(10));
  std::vector<GF64> u1(4), u2(4), v1(4), v2(4);
  for (std::size_t i = 0; i < 4; ++i) {
    u1[i] = GF64::random(prg);
    v1[i] = GF64::random(prg);
    v2[i] = GF64::random(prg);
    u2[i] = i < 2 ? u1[i] : GF64::random(prg);  // secrets 0,0,rand,rand
  }
  std::vector<std::vector<GF64>> o(3), a(3);
  s.run([&](Party& P) {
    auto& u = P.id == 1 ? u1 : u2;
    auto& v = P.id == 1 ? v1 : v2;
    auto group = all_parties(2);
    o[P.id] = compose_or(P, group, 1, u, v);
    a[P.id] = compose_and(u, v);
  });
  auto ro = reconstruct(o), ra = reconstruct(a);
  EXPECT_TRUE(ro[0].is_zero());
  EXPECT_TRUE(ro[1].is_zero());
  EXPECT_FALSE(ro[2].is_zero());
  EXPECT_FALSE(ra[0].is_zero());
}
