#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "mpso/common.hpp"

namespace mpso {

struct ParseError : ConfigError {
  std::size_t offset;
  ParseError(const std::string& w, std::size_t off)
      : ConfigError(w + " at offset " + std::to_string(off)), offset(off) {}
};

inline constexpr unsigned kMaxSets = 63;

// ---------------------------------------------------------------- set algebra

struct SetExpr {
  enum class Op { Var, Intersect, Union, Diff };
  Op op = Op::Var;
  unsigned var = 0;
  std::shared_ptr<const SetExpr> l, r;

  static SetExpr make_var(unsigned i) {
    SetExpr e;
    e.var = i;
    return e;
  }
  static SetExpr make(Op op, SetExpr a, SetExpr b) {
    SetExpr e;
    e.op = op;
    e.l = std::make_shared<const SetExpr>(std::move(a));
    e.r = std::make_shared<const SetExpr>(std::move(b));
    return e;
  }
  unsigned max_var() const { return op == Op::Var ? var : std::max(l->max_var(), r->max_var()); }
};

inline std::string to_string(const SetExpr& e) {
  switch (e.op) {
    case SetExpr::Op::Var: return "X" + std::to_string(e.var);
    case SetExpr::Op::Intersect: return "(" + to_string(*e.l) + " & " + to_string(*e.r) + ")";
    case SetExpr::Op::Union: return "(" + to_string(*e.l) + " | " + to_string(*e.r) + ")";
    case SetExpr::Op::Diff: return "(" + to_string(*e.l) + " \\ " + to_string(*e.r) + ")";
  }
  return {};
}

namespace detail {

class Parser {
 public:
  Parser(std::string_view s, unsigned m) : s_(s), m_(m) {}

  SetExpr run() {
    SetExpr e = parse_union();
    skip();
    if (pos_ < s_.size()) {
      if (s_[pos_] == ')') throw ParseError("unbalanced parenthesis", pos_);
      throw ParseError("unexpected character '" + std::string(1, s_[pos_]) + "'", pos_);
    }
    return e;
  }

 private:
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  SetExpr parse_union() {
    SetExpr e = parse_inter();
    while (eat('|')) e = SetExpr::make(SetExpr::Op::Union, e, parse_inter());
    return e;
  }
  SetExpr parse_inter() {
    SetExpr e = parse_diff();
    while (eat('&')) e = SetExpr::make(SetExpr::Op::Intersect, e, parse_diff());
    return e;
  }
  SetExpr parse_diff() {
    SetExpr e = parse_primary();
    while (eat('\\')) e = SetExpr::make(SetExpr::Op::Diff, e, parse_primary());
    return e;
  }
  SetExpr parse_primary() {
    skip();
    if (pos_ >= s_.size()) throw ParseError("dangling operator: expected operand", pos_);
    std::size_t start = pos_;
    char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      SetExpr e = parse_union();
      if (!eat(')')) throw ParseError("unbalanced parenthesis", start);
      return e;
    }
    if (c == 'X' || c == 'x') {
      ++pos_;
      std::size_t d = pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      if (d == pos_ || pos_ - d > 3) throw ParseError("unknown identifier", start);
      unsigned idx = static_cast<unsigned>(std::stoul(std::string(s_.substr(d, pos_ - d))));
      if (idx == 0 || idx > kMaxSets || (m_ && idx > m_)) throw ParseError("unknown identifier X" + std::to_string(idx), start);
      return SetExpr::make_var(idx);
    }
    if (c == '&' || c == '|' || c == '\\') throw ParseError("dangling operator", pos_);
    if (c == ')') throw ParseError("unbalanced parenthesis", pos_);
    throw ParseError("unknown identifier", pos_);
  }

  std::string_view s_;
  unsigned m_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// m = 0 accepts any index up to kMaxSets.
inline SetExpr parse(std::string_view text, unsigned m = 0) { return detail::Parser(text, m).run(); }

template <class T>
std::set<T> eval_expr(const SetExpr& e, const std::vector<std::set<T>>& sets) {
  switch (e.op) {
    case SetExpr::Op::Var:
      if (e.var == 0 || e.var > sets.size()) throw ConfigError("set index out of range");
      return sets[e.var - 1];
    default: break;
  }
  auto a = eval_expr(*e.l, sets), b = eval_expr(*e.r, sets);
  std::set<T> out;
  if (e.op == SetExpr::Op::Intersect)
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
  else if (e.op == SetExpr::Op::Union)
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
  else
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
  return out;
}

// ---------------------------------------------------------- predicate formulas

struct Pred {
  enum class Kind { In, NotIn, And, Or, True, False };
  Kind kind = Kind::True;
  unsigned idx = 0;
  std::vector<Pred> kids;

  static Pred in(unsigned i) { return {Kind::In, i, {}}; }
  static Pred not_in(unsigned i) { return {Kind::NotIn, i, {}}; }
  static Pred truth() { return {Kind::True, 0, {}}; }
  static Pred falsity() { return {Kind::False, 0, {}}; }
  static Pred conj(std::vector<Pred> k) { return {Kind::And, 0, std::move(k)}; }
  static Pred disj(std::vector<Pred> k) { return {Kind::Or, 0, std::move(k)}; }

  bool is_literal() const { return kind == Kind::In || kind == Kind::NotIn; }
  friend bool operator==(const Pred& a, const Pred& b) {
    return a.kind == b.kind && a.idx == b.idx && a.kids == b.kids;
  }
};

// Bit i of `members` set iff x is in X_i.
inline bool eval_pred_bits(const Pred& p, u64 members) {
  switch (p.kind) {
    case Pred::Kind::In: return (members >> p.idx) & 1;
    case Pred::Kind::NotIn: return !((members >> p.idx) & 1);
    case Pred::Kind::True: return true;
    case Pred::Kind::False: return false;
    case Pred::Kind::And:
      for (auto& k : p.kids)
        if (!eval_pred_bits(k, members)) return false;
      return true;
    case Pred::Kind::Or:
      for (auto& k : p.kids)
        if (eval_pred_bits(k, members)) return true;
      return false;
  }
  return false;
}

template <class T>
u64 membership_mask(const T& x, const std::vector<std::set<T>>& sets) {
  u64 m = 0;
  for (std::size_t i = 0; i < sets.size(); ++i)
    if (sets[i].count(x)) m |= u64{1} << (i + 1);
  return m;
}

template <class T>
bool eval_predicate(const Pred& p, const T& x, const std::vector<std::set<T>>& sets) {
  return eval_pred_bits(p, membership_mask(x, sets));
}

inline u64 pred_indices(const Pred& p) {
  if (p.is_literal()) return u64{1} << p.idx;
  u64 m = 0;
  for (auto& k : p.kids) m |= pred_indices(k);
  return m;
}

inline std::size_t or_count(const Pred& p) {
  std::size_t c = p.kind == Pred::Kind::Or && !p.kids.empty() ? p.kids.size() - 1 : 0;
  for (auto& k : p.kids) c += or_count(k);
  return c;
}

inline std::string to_string(const Pred& p) {
  switch (p.kind) {
    case Pred::Kind::In: return "In(" + std::to_string(p.idx) + ")";
    case Pred::Kind::NotIn: return "NotIn(" + std::to_string(p.idx) + ")";
    case Pred::Kind::True: return "true";
    case Pred::Kind::False: return "false";
    default: break;
  }
  std::string sep = p.kind == Pred::Kind::And ? " & " : " | ";
  std::string s = "(";
  for (std::size_t i = 0; i < p.kids.size(); ++i) s += (i ? sep : "") + to_string(p.kids[i]);
  return s + ")";
}

namespace detail {

// Flattens nested same-kind nodes and folds constants.
inline Pred simplify(Pred p) {
  if (p.kind != Pred::Kind::And && p.kind != Pred::Kind::Or) return p;
  bool is_and = p.kind == Pred::Kind::And;
  std::vector<Pred> out;
  for (auto& k : p.kids) {
    Pred s = simplify(std::move(k));
    if (s.kind == Pred::Kind::True) {
      if (is_and) continue;
      return Pred::truth();
    }
    if (s.kind == Pred::Kind::False) {
      if (!is_and) continue;
      return Pred::falsity();
    }
    if (s.kind == p.kind) {
      for (auto& g : s.kids) out.push_back(std::move(g));
    } else {
      out.push_back(std::move(s));
    }
  }
  if (out.empty()) return is_and ? Pred::truth() : Pred::falsity();
  if (out.size() == 1) return std::move(out[0]);
  return {p.kind, 0, std::move(out)};
}

inline Pred negate(const Pred& p) {
  switch (p.kind) {
    case Pred::Kind::In: return Pred::not_in(p.idx);
    case Pred::Kind::NotIn: return Pred::in(p.idx);
    case Pred::Kind::True: return Pred::falsity();
    case Pred::Kind::False: return Pred::truth();
    case Pred::Kind::And:
    case Pred::Kind::Or: {
      std::vector<Pred> k;
      for (auto& c : p.kids) k.push_back(negate(c));
      return {p.kind == Pred::Kind::And ? Pred::Kind::Or : Pred::Kind::And, 0, std::move(k)};
    }
  }
  return p;
}

// Fix index j to "member": In(j) -> true, NotIn(j) -> false.
inline Pred assign_member(const Pred& p, unsigned j) {
  if (p.kind == Pred::Kind::In && p.idx == j) return Pred::truth();
  if (p.kind == Pred::Kind::NotIn && p.idx == j) return Pred::falsity();
  if (p.is_literal()) return p;
  Pred q{p.kind, 0, {}};
  for (auto& k : p.kids) q.kids.push_back(assign_member(k, j));
  return simplify(std::move(q));
}

}  // namespace detail

inline Pred expr_to_predicate(const SetExpr& e) {
  switch (e.op) {
    case SetExpr::Op::Var: return Pred::in(e.var);
    case SetExpr::Op::Intersect:
      return detail::simplify(Pred::conj({expr_to_predicate(*e.l), expr_to_predicate(*e.r)}));
    case SetExpr::Op::Union:
      return detail::simplify(Pred::disj({expr_to_predicate(*e.l), expr_to_predicate(*e.r)}));
    case SetExpr::Op::Diff:
      return detail::simplify(
          Pred::conj({expr_to_predicate(*e.l), detail::negate(expr_to_predicate(*e.r))}));
  }
  return Pred::falsity();
}

// ------------------------------------------------------------------------ DNF

struct Clause {
  u64 pos = 0, neg = 0;
  friend bool operator==(const Clause& a, const Clause& b) { return a.pos == b.pos && a.neg == b.neg; }
  friend bool operator<(const Clause& a, const Clause& b) {
    return a.pos != b.pos ? a.pos < b.pos : a.neg < b.neg;
  }
  bool contradictory() const { return (pos & neg) != 0; }
  // Every assignment satisfying o also satisfies *this.
  bool subsumes(const Clause& o) const { return (pos & ~o.pos) == 0 && (neg & ~o.neg) == 0; }
  bool disjoint_with(const Clause& o) const { return (pos & o.neg) || (neg & o.pos); }
};

using Dnf = std::vector<Clause>;

inline constexpr std::size_t kMaxDnfClauses = 4096;

inline int lowest_bit(u64 m) { return m ? __builtin_ctzll(m) : -1; }

inline Dnf simplify_dnf(Dnf d) {
  d.erase(std::remove_if(d.begin(), d.end(), [](const Clause& c) { return c.contradictory(); }), d.end());
  bool changed = true;
  while (changed) {
    changed = false;
    std::sort(d.begin(), d.end());
    d.erase(std::unique(d.begin(), d.end()), d.end());
    std::vector<bool> dead(d.size(), false);
    for (std::size_t i = 0; i < d.size(); ++i)
      for (std::size_t j = 0; j < d.size(); ++j)
        if (i != j && !dead[i] && !dead[j] && d[i].subsumes(d[j])) dead[j] = true;
    Dnf kept;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (!dead[i]) kept.push_back(d[i]);
    d = std::move(kept);
    // (A & y) | (A & !y) -> A
    for (std::size_t i = 0; i < d.size() && !changed; ++i)
      for (std::size_t j = i + 1; j < d.size() && !changed; ++j) {
        u64 dp = d[i].pos ^ d[j].pos, dn = d[i].neg ^ d[j].neg;
        if (dp && dp == dn && __builtin_popcountll(dp) == 1 && (d[i].pos & dp) == (d[j].neg & dp)) {
          Clause merged{d[i].pos & ~dp, d[i].neg & ~dp};
          d[i] = merged;
          d.erase(d.begin() + static_cast<long>(j));
          changed = true;
        }
      }
  }
  return d;
}

inline Dnf to_dnf(const Pred& p) {
  switch (p.kind) {
    case Pred::Kind::In: return {Clause{u64{1} << p.idx, 0}};
    case Pred::Kind::NotIn: return {Clause{0, u64{1} << p.idx}};
    case Pred::Kind::True: return {Clause{}};
    case Pred::Kind::False: return {};
    case Pred::Kind::Or: {
      Dnf out;
      for (auto& k : p.kids) {
        Dnf d = to_dnf(k);
        out.insert(out.end(), d.begin(), d.end());
        if (out.size() > kMaxDnfClauses) out = simplify_dnf(std::move(out));
        if (out.size() > kMaxDnfClauses) throw ConfigError("DNF exceeds 4096 clauses");
      }
      return simplify_dnf(std::move(out));
    }
    case Pred::Kind::And: {
      Dnf acc{Clause{}};
      for (auto& k : p.kids) {
        Dnf d = to_dnf(k);
        if (acc.size() * d.size() > kMaxDnfClauses * 4) throw ConfigError("DNF exceeds 4096 clauses");
        Dnf next;
        for (auto& a : acc)
          for (auto& b : d) {
            Clause c{a.pos | b.pos, a.neg | b.neg};
            if (!c.contradictory()) next.push_back(c);
          }
        acc = simplify_dnf(std::move(next));
        if (acc.size() > kMaxDnfClauses) throw ConfigError("DNF exceeds 4096 clauses");
      }
      return acc;
    }
  }
  return {};
}

inline Pred clause_to_pred(const Clause& c) {
  std::vector<Pred> lits;
  for (unsigned i = 0; i < 64; ++i) {
    if ((c.pos >> i) & 1) lits.push_back(Pred::in(i));
    if ((c.neg >> i) & 1) lits.push_back(Pred::not_in(i));
  }
  return detail::simplify(Pred::conj(std::move(lits)));
}

inline Pred dnf_to_pred(const Dnf& d) {
  std::vector<Pred> cs;
  for (auto& c : d) cs.push_back(clause_to_pred(c));
  return detail::simplify(Pred::disj(std::move(cs)));
}

// ------------------------------------------------------------------------ CPF

struct Subformula {
  unsigned pivot = 0;
  Pred separation = Pred::truth();  // True when q = 1
  u64 involved = 0;                 // bit i set for X_i, includes the pivot

  std::vector<unsigned> parties() const {
    std::vector<unsigned> v;
    for (unsigned i = 0; i < 64; ++i)
      if ((involved >> i) & 1) v.push_back(i);
    return v;
  }
  std::size_t q() const { return static_cast<std::size_t>(__builtin_popcountll(involved)); }
  Pred full() const { return detail::simplify(Pred::conj({Pred::in(pivot), separation})); }
};

struct Cpf {
  std::vector<Subformula> subs;
  std::size_t s() const { return subs.size(); }
  u64 indices() const {
    u64 m = 0;
    for (auto& f : subs) m |= f.involved;
    return m;
  }
  Pred as_disjunction() const {
    std::vector<Pred> k;
    for (auto& f : subs) k.push_back(f.full());
    return detail::simplify(Pred::disj(std::move(k)));
  }
};

namespace detail {

inline Subformula make_sub(unsigned pivot, Pred sep) {
  Subformula f;
  f.pivot = pivot;
  f.separation = simplify(std::move(sep));
  f.involved = (u64{1} << pivot) | pred_indices(f.separation);
  return f;
}

}  // namespace detail

inline Cpf to_cpf(const Pred& phi_in) {
  Pred phi = detail::simplify(phi_in);
  u64 mentioned = pred_indices(phi);
  if (phi.kind == Pred::Kind::False || mentioned == 0) throw ConfigError("formula denotes the empty set");

  // Directly separable: a top-level conjunct In(j).
  if (phi.kind == Pred::Kind::In) return Cpf{{detail::make_sub(phi.idx, Pred::truth())}};
  if (phi.kind == Pred::Kind::And) {
    int j = -1;
    for (auto& k : phi.kids)
      if (k.kind == Pred::Kind::In && (j < 0 || static_cast<int>(k.idx) < j)) j = static_cast<int>(k.idx);
    if (j > 0) {
      Pred rest = detail::assign_member(phi, static_cast<unsigned>(j));
      if (rest.kind == Pred::Kind::False) throw ConfigError("formula denotes the empty set");
      return Cpf{{detail::make_sub(static_cast<unsigned>(j), std::move(rest))}};
    }
  }

  Dnf d = to_dnf(phi);
  if (d.empty()) throw ConfigError("formula denotes the empty set");
  // Clauses with no positive literal: every witness lies in some mentioned set.
  Dnf aug;
  for (auto& c : d) {
    if (c.pos) {
      aug.push_back(c);
      continue;
    }
    u64 cand = mentioned & ~c.neg;
    if (!cand) throw ConfigError("unrepresentable formula: all-negative clause over every mentioned set");
    for (unsigned i = 0; i < 64; ++i)
      if ((cand >> i) & 1) aug.push_back(Clause{u64{1} << i, c.neg});
  }
  d = simplify_dnf(std::move(aug));
  std::stable_sort(d.begin(), d.end(), [](const Clause& a, const Clause& b) {
    int pa = lowest_bit(a.pos), pb = lowest_bit(b.pos);
    if (pa != pb) return pa < pb;
    return a < b;
  });

  Cpf out;
  for (std::size_t k = 0; k < d.size(); ++k) {
    unsigned pivot = static_cast<unsigned>(lowest_bit(d[k].pos));
    Dnf cur{d[k]};
    for (std::size_t i = 0; i < k; ++i) {
      if (d[i].disjoint_with(d[k])) continue;
      Dnf next;
      for (auto& c : cur)
        for (unsigned b = 0; b < 64; ++b) {
          if ((d[i].pos >> b) & 1) {
            Clause n{c.pos, c.neg | (u64{1} << b)};
            if (!n.contradictory()) next.push_back(n);
          }
          if ((d[i].neg >> b) & 1) {
            Clause n{c.pos | (u64{1} << b), c.neg};
            if (!n.contradictory()) next.push_back(n);
          }
        }
      cur = simplify_dnf(std::move(next));
      if (cur.size() > kMaxDnfClauses) throw ConfigError("DNF exceeds 4096 clauses");
    }
    // Reduce by the pivot literal.
    Dnf sep;
    for (auto& c : cur) {
      if (c.neg >> pivot & 1) continue;
      sep.push_back(Clause{c.pos & ~(u64{1} << pivot), c.neg});
    }
    sep = simplify_dnf(std::move(sep));
    if (sep.empty()) continue;
    out.subs.push_back(detail::make_sub(pivot, dnf_to_pred(sep)));
  }
  if (out.subs.empty()) throw ConfigError("formula denotes the empty set");
  return out;
}

inline std::string to_string(const Subformula& f) {
  return "pivot=" + std::to_string(f.pivot) + " q=" + std::to_string(f.q()) +
         " separation=" + (f.q() == 1 ? std::string("-") : to_string(f.separation));
}

struct CpfCost {
  std::size_t s = 0;
  std::vector<std::size_t> or_counts;
  std::size_t total_or = 0;
  unsigned min_field_bits = 0;
  unsigned mpso_field_bits = 0;
};

inline CpfCost cpf_cost(const Cpf& c, std::size_t n, unsigned sigma) {
  if (n == 0) throw ConfigError("n must be >= 1");
  CpfCost k;
  k.s = c.s();
  for (auto& f : c.subs) {
    k.or_counts.push_back(or_count(f.separation));
    k.total_or += k.or_counts.back();
  }
  u64 B = bins_for(n);
  k.min_field_bits = sigma + ceil_log2(std::max<u64>(1, k.total_or) * B);
  k.mpso_field_bits = sigma + ceil_log2(k.s * B);
  return k;
}

}  // namespace mpso
