#include <gtest/gtest.h>

#include "mpso/protocols.hpp"
#include "support.hpp"

using namespace mpso;
using namespace mpso::testing;

namespace {

std::vector<PartyInput> inputs_of(const std::vector<std::set<u64>>& sets) {
  std::vector<PartyInput> in(sets.size() + 1);
  for (std::size_t i = 0; i < sets.size(); ++i) in[i + 1].X = to_elements(sets[i]);
  return in;
}

SessionConfig config(Functionality f, unsigned m, std::size_t n, std::string formula = {}) {
  SessionConfig c;
  c.func = f;
  c.m = m;
  c.n = n;
  c.formula = std::move(formula);
  return c;
}

std::set<u64> as_u64(const std::vector<Element>& v) {
  std::set<u64> s;
  for (auto& x : v) s.insert(x.to_u64());
  return s;
}

const std::vector<std::set<u64>> kHand = {{1, 2, 3}, {2, 3, 4}, {3, 4, 5}};
const char* kComplex = "((X1 & X2) | (X1 & X3)) \\ (X1 & X2 & X3)";

bool has_stage(const PartyStats& s, Stage st) {
  return std::find(s.stage_log.begin(), s.stage_log.end(), st) != s.stage_log.end();
}

// Index of the last event of `st` / first event of `st` in the collapsed log.
std::ptrdiff_t last_of(const PartyStats& s, Stage st) {
  for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(s.stage_log.size()) - 1; i >= 0; --i)
    if (s.stage_log[static_cast<std::size_t>(i)] == st) return i;
  return -1;
}
std::ptrdiff_t first_of(const PartyStats& s, Stage st) {
  for (std::size_t i = 0; i < s.stage_log.size(); ++i)
    if (s.stage_log[i] == st) return static_cast<std::ptrdiff_t>(i);
  return -1;
}

bool satisfiable(const SetExpr& e) {
  try {
    to_cpf(expr_to_predicate(e));
    return true;
  } catch (const ConfigError&) {
    return false;
  }
}

}  // namespace

TEST(Protocols, UnsatisfiableFormulaRejected) {
  EXPECT_THROW(derive(config(Functionality::mpso, 3, 4, "X1 \\ X1")), ConfigError);
}

TEST(Protocols, HandMpsi) {
  auto r = run_local(config(Functionality::mpsi, 3, 3), inputs_of(kHand), seed_from_u64(1));
  ASSERT_TRUE(r.leader.set);
  EXPECT_EQ(as_u64(*r.leader.set), (std::set<u64>{3}));
  EXPECT_FALSE(r.outputs[2].set);
}

TEST(Protocols, HandMpsiCard) {
  auto r = run_local(config(Functionality::mpsi_card, 3, 3), inputs_of(kHand), seed_from_u64(2));
  EXPECT_EQ(r.leader.cardinality, 1u);
  EXPECT_FALSE(r.leader.set);
}

TEST(Protocols, HandMpsiCardSum) {
  auto in = inputs_of(kHand);
  for (std::size_t p = 1; p <= 3; ++p) in[p].payloads.assign(3, 1);
  auto r = run_local(config(Functionality::mpsi_card_sum, 3, 3), in, seed_from_u64(3));
  EXPECT_EQ(r.leader.cardinality, 1u);
  EXPECT_EQ(r.leader.sum, 3u);
  for (PartyId p = 2; p <= 3; ++p) {
    EXPECT_EQ(r.outputs[p].cardinality, 1u);
    EXPECT_FALSE(r.outputs[p].sum);
  }
}

TEST(Protocols, HandMpsu) {
  auto r = run_local(config(Functionality::mpsu, 3, 3), inputs_of(kHand), seed_from_u64(4));
  ASSERT_TRUE(r.leader.set);
  EXPECT_EQ(as_u64(*r.leader.set), (std::set<u64>{1, 2, 3, 4, 5}));
}

TEST(Protocols, HandMpsuCard) {
  auto r = run_local(config(Functionality::mpsu_card, 3, 3), inputs_of(kHand), seed_from_u64(5));
  EXPECT_EQ(r.leader.cardinality, 5u);
}

TEST(Protocols, HandMpsoComplex) {
  auto r = run_local(config(Functionality::mpso, 3, 3, kComplex), inputs_of(kHand), seed_from_u64(6));
  ASSERT_TRUE(r.leader.set);
  EXPECT_EQ(as_u64(*r.leader.set), (std::set<u64>{2}));
  auto rc = run_local(config(Functionality::mpso_card, 3, 3, kComplex), inputs_of(kHand), seed_from_u64(7));
  EXPECT_EQ(rc.leader.cardinality, 1u);
}

TEST(Protocols, RandomAgainstOracle) {
  Prg prg(seed_from_u64(77));
  const Functionality fs[] = {Functionality::mpsi,      Functionality::mpsi_card, Functionality::mpsi_card_sum,
                              Functionality::mpsu,      Functionality::mpsu_card};
  for (auto f : fs)
    for (unsigned m : {2u, 3u, 4u})
      for (int trial = 0; trial < 3; ++trial) {
        const std::size_t n = 16 + prg.below(40);
        auto sets = random_sets(prg, m, n, 3 * n);
        auto in = inputs_of(sets);
        if (f == Functionality::mpsi_card_sum)
          for (std::size_t p = 1; p <= m; ++p)
            for (std::size_t k = 0; k < in[p].X.size(); ++k) in[p].payloads.push_back(prg.next_u64() >> 8);
        auto c = config(f, m, n);
        c.ideal_oprf = trial % 2;
        auto r = run_local(c, in, seed_from_u64(prg.next_u64()));
        EXPECT_TRUE(matches_oracle(c, r.leader, oracle(c, in))) << func_name(f) << " m=" << m << " trial " << trial;
      }
}

TEST(Protocols, RandomFormulasAgainstOracle) {
  Prg prg(seed_from_u64(78));
  for (int trial = 0; trial < 12; ++trial) {
    const unsigned m = 3 + static_cast<unsigned>(prg.below(2));
    auto expr = random_expr(prg, m, 3);
    // Unsatisfiable formulas are rejected at setup; draw again.
    while (!satisfiable(expr)) expr = random_expr(prg, m, 3);
    const std::string formula = to_string(expr);
    const std::size_t n = 24;
    auto in = inputs_of(random_sets(prg, m, n, 4 * n));
    for (auto f : {Functionality::mpso, Functionality::mpso_card}) {
      auto c = config(f, m, n, formula);
      c.ideal_oprf = true;
      auto r = run_local(c, in, seed_from_u64(prg.next_u64()));
      EXPECT_TRUE(matches_oracle(c, r.leader, oracle(c, in))) << formula << " " << func_name(f);
    }
  }
}

TEST(Protocols, UnevenAndEmptySets) {
  std::vector<std::set<u64>> sets = {{1, 2, 3, 4, 5, 6, 7, 8}, {}, {2, 7}};
  for (auto f : {Functionality::mpsi, Functionality::mpsu, Functionality::mpsu_card}) {
    auto c = config(f, 3, 8);
    auto in = inputs_of(sets);
    auto r = run_local(c, in, seed_from_u64(9));
    EXPECT_TRUE(matches_oracle(c, r.leader, oracle(c, in))) << func_name(f);
  }
}

TEST(Protocols, StageOrder) {
  auto in = inputs_of(kHand);
  auto plain = run_local(config(Functionality::mpsi, 3, 3), in, seed_from_u64(10));
  for (PartyId p = 1; p <= 3; ++p) EXPECT_FALSE(has_stage(plain.stats[p], Stage::shuffle));

  for (auto f : {Functionality::mpsi_card, Functionality::mpsu, Functionality::mpso}) {
    auto r = run_local(config(f, 3, 3, f == Functionality::mpso ? kComplex : ""), in, seed_from_u64(11));
    for (PartyId p = 1; p <= 3; ++p) {
      const auto& s = r.stats[p];
      ASSERT_TRUE(has_stage(s, Stage::shuffle)) << func_name(f);
      ASSERT_TRUE(has_stage(s, Stage::reconstruct)) << func_name(f);
      EXPECT_LT(last_of(s, Stage::shuffle), first_of(s, Stage::reconstruct)) << func_name(f) << " party " << p;
    }
  }
}

TEST(Protocols, DeterministicUnderSeed) {
  auto c = config(Functionality::mpsu, 3, 3);
  auto a = run_local(c, inputs_of(kHand), seed_from_u64(12));
  auto b = run_local(c, inputs_of(kHand), seed_from_u64(12));
  for (PartyId p = 1; p <= 3; ++p) EXPECT_EQ(a.stats[p].digests, b.stats[p].digests);
}

TEST(Protocols, ExportSharesReconstruct) {
  auto c = config(Functionality::mpsu_card, 3, 3);
  auto r = run_local(c, inputs_of(kHand), seed_from_u64(13), RunOptions{true});
  const std::size_t N = r.outputs[1].exported.size();
  ASSERT_EQ(N, 2 * derive(c).B);
  std::size_t zeros = 0;
  for (std::size_t k = 0; k < N; ++k) {
    u128 v = 0;
    for (PartyId p = 1; p <= 3; ++p) v ^= r.outputs[p].exported[k];
    zeros += v == 0;
  }
  EXPECT_EQ(zeros + 3, 5u);
  EXPECT_FALSE(r.leader.cardinality);
}

TEST(Protocols, ConfigErrors) {
  EXPECT_THROW(derive(config(Functionality::mpsi, 1, 4)), ConfigError);
  EXPECT_THROW(derive(config(Functionality::mpso, 3, 4)), ConfigError);
  EXPECT_THROW(derive(config(Functionality::mpso, 3, 4, "X1 & X4")), std::exception);
  auto in = inputs_of(kHand);
  EXPECT_THROW(run_local(config(Functionality::mpsi, 3, 2), in, seed_from_u64(1)), ConfigError);
  in[2].X[0] = Element::from_u64(1, 4);
  EXPECT_THROW(run_local(config(Functionality::mpsu, 3, 3), in, seed_from_u64(1)), ConfigError);
}

TEST(Protocols, WrongCorrelationsRejected) {
  auto c = config(Functionality::mpsu, 3, 3);
  auto stores = deal(plan_session(config(Functionality::mpsi, 3, 3)), seed_from_u64(1));
  auto meshes = connect_local_mesh(3);
  auto in = inputs_of(kHand);
  EXPECT_THROW(run_parties(meshes,
                           [&](PartyId p) {
                             Party P(p, *meshes[p], stores[p], seed_from_u64(p));
                             run_party(P, c, in[p]);
                           }),
               CorrelationError);
}
