#pragma once

#include <set>

#include "mpso/formula.hpp"
#include "mpso/prg.hpp"
#include "mpso/session.hpp"

namespace mpso::testing {

inline SetExpr random_expr(Prg& prg, unsigned m, unsigned depth) {
  if (depth == 0 || prg.below(4) == 0) return SetExpr::make_var(1 + static_cast<unsigned>(prg.below(m)));
  auto op = static_cast<SetExpr::Op>(1 + prg.below(3));
  return SetExpr::make(op, random_expr(prg, m, depth - 1), random_expr(prg, m, depth - 1));
}

inline std::vector<std::set<u64>> random_sets(Prg& prg, unsigned m, std::size_t n, u64 universe) {
  std::vector<std::set<u64>> sets(m);
  for (auto& s : sets)
    while (s.size() < n) s.insert(prg.below(universe));
  return sets;
}

inline std::vector<Element> to_elements(const std::set<u64>& s, std::size_t width = 8) {
  std::vector<Element> v;
  for (u64 x : s) v.push_back(Element::from_u64(x, width));
  return v;
}

inline CorrelationPlan make_plan(unsigned m, unsigned field_bits) {
  CorrelationPlan p;
  p.m = m;
  p.field_bits = field_bits;
  return p;
}

// m in-process parties with dealt correlations.
struct LocalSession {
  std::vector<std::unique_ptr<Mesh>> meshes;
  std::vector<CorrelationStore> stores;
  std::vector<std::unique_ptr<Party>> parties;

  LocalSession(const CorrelationPlan& plan, u64 seed, bool ideal = false) {
    const unsigned m = plan.m;
    meshes = connect_local_mesh(m);
    stores = deal(plan, seed_from_u64(seed));
    parties.resize(m + 1);
    for (PartyId p = 1; p <= m; ++p) {
      parties[p] = std::make_unique<Party>(p, *meshes[p], stores[p], derive_seed(seed_from_u64(seed), "party", p));
      parties[p]->ideal_oprf = ideal;
      parties[p]->ideal_seed = derive_seed(seed_from_u64(seed), "ideal");
    }
  }
  template <class Fn>
  void run(Fn fn) {
    run_parties(meshes, [&](PartyId p) { fn(*parties[p]); });
  }
};

}  // namespace mpso::testing
