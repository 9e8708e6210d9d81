#include <gtest/gtest.h>

#include "mpso/formula.hpp"
#include "support.hpp"

using namespace mpso;
using mpso::testing::random_expr;
using mpso::testing::random_sets;

namespace {

const char* kComplex = "((X1 & X2) | (X1 & X3)) \\ (X1 & X2 & X3)";

std::vector<std::set<u64>> small_sets() { return {{1, 2, 3}, {2, 3, 4}, {3, 4, 5}}; }

bool cpf_compilable(const Pred& p) {
  try {
    to_cpf(p);
    return true;
  } catch (const ConfigError&) {
    return false;
  }
}

}  // namespace

TEST(Parse, LeftAssociativeIntersection) {
  SetExpr e = parse("X1 & X2 & X3");
  ASSERT_EQ(e.op, SetExpr::Op::Intersect);
  ASSERT_EQ(e.l->op, SetExpr::Op::Intersect);
  EXPECT_EQ(e.l->l->var, 1u);
  EXPECT_EQ(e.l->r->var, 2u);
  EXPECT_EQ(e.r->var, 3u);
}

TEST(Parse, ComplexFormulaShape) {
  SetExpr e = parse(kComplex);
  ASSERT_EQ(e.op, SetExpr::Op::Diff);
  EXPECT_EQ(e.l->op, SetExpr::Op::Union);
  EXPECT_EQ(e.r->op, SetExpr::Op::Intersect);
}

TEST(Parse, Precedence) {
  // \ binds tighter than & tighter than |
  EXPECT_EQ(to_string(parse("X1 | X2 & X3 \\ X4")), "(X1 | (X2 & (X3 \\ X4)))");
  EXPECT_EQ(to_string(parse("X1 \\ X2 \\ X3")), "((X1 \\ X2) \\ X3)");
}

TEST(Parse, Errors) {
  try {
    parse("X1 &");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset, 4u);
  }
  EXPECT_THROW(parse("(X1 & X2"), ParseError);
  EXPECT_THROW(parse("X1 & X2)"), ParseError);
  EXPECT_THROW(parse("Y1 & X2"), ParseError);
  EXPECT_THROW(parse("X0"), ParseError);
  EXPECT_THROW(parse("X4", 3), ParseError);
  EXPECT_THROW(parse("& X1"), ParseError);
}

TEST(Predicate, BaseRules) {
  EXPECT_EQ(expr_to_predicate(parse("X1")), Pred::in(1));
  EXPECT_EQ(expr_to_predicate(parse("X1 \\ X2")), Pred::conj({Pred::in(1), Pred::not_in(2)}));
  EXPECT_EQ(expr_to_predicate(parse("X1 | X2")), Pred::disj({Pred::in(1), Pred::in(2)}));
}

TEST(EvalExpr, HandExamples) {
  auto s = small_sets();
  EXPECT_EQ(eval_expr(parse("X1 & X2 & X3"), s), (std::set<u64>{3}));
  EXPECT_EQ(eval_expr(parse("X1 | X2 | X3"), s), (std::set<u64>{1, 2, 3, 4, 5}));
  EXPECT_EQ(eval_expr(parse(kComplex), s), (std::set<u64>{2}));
  EXPECT_TRUE(eval_predicate(Pred::in(1), u64{1}, s));
  EXPECT_FALSE(eval_predicate(Pred::conj({Pred::in(1), Pred::not_in(2)}), u64{2}, s));
}

TEST(Cpf, Intersection) {
  Cpf c = to_cpf(expr_to_predicate(parse("X1 & X2 & X3")));
  ASSERT_EQ(c.s(), 1u);
  EXPECT_EQ(c.subs[0].pivot, 1u);
  EXPECT_EQ(c.subs[0].separation, Pred::conj({Pred::in(2), Pred::in(3)}));
  auto k = cpf_cost(c, 1 << 12, 40);
  EXPECT_EQ(k.total_or, 0u);
  EXPECT_EQ(k.mpso_field_bits, 53u);
}

TEST(Cpf, Union) {
  Cpf c = to_cpf(expr_to_predicate(parse("X1 | X2 | X3")));
  ASSERT_EQ(c.s(), 3u);
  for (unsigned i = 1; i <= 3; ++i) {
    const auto& f = c.subs[i - 1];
    EXPECT_EQ(f.pivot, i);
    std::vector<Pred> want;
    for (unsigned j = 1; j < i; ++j) want.push_back(Pred::not_in(j));
    Pred sep = want.empty() ? Pred::truth() : want.size() == 1 ? want[0] : Pred::conj(want);
    EXPECT_EQ(f.separation, sep) << to_string(f.separation);
  }
  EXPECT_EQ(cpf_cost(c, 256, 40).total_or, 0u);
}

TEST(Cpf, ComplexHasTwoSubformulas) {
  Cpf c = to_cpf(expr_to_predicate(parse(kComplex)));
  ASSERT_EQ(c.s(), 2u);
  EXPECT_EQ(to_dnf(c.subs[0].full()), (Dnf{Clause{0b0110, 0b1000}}));
  EXPECT_EQ(to_dnf(c.subs[1].full()), (Dnf{Clause{0b1010, 0b0100}}));
  EXPECT_EQ(c.subs[0].pivot, 1u);
  EXPECT_EQ(c.subs[1].pivot, 1u);
}

TEST(Cpf, OrInsideSeparation) {
  Cpf c = to_cpf(expr_to_predicate(parse("X1 & (X2 | X3)")));
  ASSERT_EQ(c.s(), 1u);
  EXPECT_EQ(cpf_cost(c, 256, 40).total_or, 1u);
}

TEST(Cpf, Errors) {
  EXPECT_THROW(to_cpf(expr_to_predicate(parse("X1 \\ X1"))), ConfigError);
  EXPECT_THROW(to_cpf(Pred::not_in(1)), ConfigError);
  EXPECT_THROW(to_cpf(Pred::conj({Pred::not_in(1), Pred::not_in(2)})), ConfigError);
}

TEST(Cpf, MinFieldBits) {
  Cpf c = to_cpf(expr_to_predicate(parse("X1 & (X2 | X3 | X4)")));
  auto k = cpf_cost(c, 1 << 10, 40);
  EXPECT_EQ(k.total_or, 2u);
  EXPECT_EQ(k.min_field_bits, 40u + ceil_log2(2 * 1301));
}

// Semantics, partition, separability and pivot soundness on random formulas.
TEST(Cpf, RandomFormulasProperties) {
  Prg prg(seed_from_u64(2024));
  int compiled = 0;
  for (int t = 0; t < 200; ++t) {
    unsigned m = 2 + static_cast<unsigned>(prg.below(4));
    SetExpr e = random_expr(prg, m, 4);
    auto sets = random_sets(prg, m, 1200, 1 << 12);
    Pred phi = expr_to_predicate(e);
    auto want = eval_expr(e, sets);
    for (u64 x = 0; x < (1 << 12); ++x)
      ASSERT_EQ(eval_predicate(phi, x, sets), want.count(x) == 1) << to_string(e);
    if (want.empty() && !cpf_compilable(phi)) continue;
    Cpf c = to_cpf(phi);
    ++compiled;
    for (auto& f : c.subs) ASSERT_FALSE((pred_indices(f.separation) >> f.pivot) & 1) << to_string(e);
    for (u64 x = 0; x < (1 << 12); ++x) {
      u64 mm = membership_mask(x, sets);
      int hits = 0;
      for (auto& f : c.subs)
        if (eval_pred_bits(f.full(), mm)) {
          ++hits;
          ASSERT_TRUE((mm >> f.pivot) & 1);
        }
      ASSERT_LE(hits, 1) << to_string(e);
      ASSERT_EQ(hits == 1, want.count(x) == 1) << to_string(e);
    }
  }
  EXPECT_GT(compiled, 100);
}

// Exhaustive truth-table check: CPF disjunction equals the formula on every membership pattern.
TEST(Cpf, TruthTableEquivalence) {
  Prg prg(seed_from_u64(77));
  for (int t = 0; t < 300; ++t) {
    unsigned m = 2 + static_cast<unsigned>(prg.below(4));
    Pred phi = expr_to_predicate(random_expr(prg, m, 4));
    if (!cpf_compilable(phi)) continue;
    Cpf c = to_cpf(phi);
    Pred d = c.as_disjunction();
    for (u64 mm = 0; mm < (u64{1} << (m + 1)); mm += 2) {
      if (mm == 0) continue;
      ASSERT_EQ(eval_pred_bits(d, mm), eval_pred_bits(phi, mm)) << to_string(phi);
    }
  }
}
