#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "psgi/error.hpp"

namespace psgi {

using EntityId = std::string;

inline constexpr int kMaxArity = 3;

struct VerbSignature {
  std::string verb;
  int arity = 0;

  auto operator<=>(const VerbSignature&) const = default;
  bool operator==(const VerbSignature&) const = default;

  std::string str() const { return verb + "/" + std::to_string(arity); }
};

/// Argument source of a pattern: a parameter slot of the host option
/// (slot >= 1) or, in grounded/per-option models, a bound entity (slot == 0).
struct Arg {
  int slot = 0;
  EntityId entity;

  static Arg param(int j) { return Arg{j, {}}; }
  static Arg constant(EntityId e) { return Arg{0, std::move(e)}; }

  bool is_param() const noexcept { return slot > 0; }

  auto operator<=>(const Arg&) const = default;
  bool operator==(const Arg&) const = default;

  std::string str() const { return is_param() ? "p" + std::to_string(slot) : entity; }
};

enum class PatternKind : std::uint8_t { SubtaskCompletion = 0, Attribute = 1 };

/// A feature read either from the completion vector or from an entity
/// attribute. Field order gives the canonical literal order
/// (kind, verb, arity, slots, attribute id).
struct FeaturePattern {
  PatternKind kind = PatternKind::SubtaskCompletion;
  VerbSignature subtask;
  std::vector<Arg> args;
  std::string attribute;

  static FeaturePattern completion(VerbSignature sig, std::vector<Arg> args) {
    return FeaturePattern{PatternKind::SubtaskCompletion, std::move(sig), std::move(args), {}};
  }
  static FeaturePattern attr(std::string id, Arg arg) {
    return FeaturePattern{PatternKind::Attribute, {}, {std::move(arg)}, std::move(id)};
  }

  bool is_completion() const noexcept { return kind == PatternKind::SubtaskCompletion; }
  bool is_attribute() const noexcept { return kind == PatternKind::Attribute; }

  auto operator<=>(const FeaturePattern&) const = default;
  bool operator==(const FeaturePattern&) const = default;

  std::string str() const {
    std::string s = is_attribute() ? attribute : subtask.verb;
    s += "(";
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (i) s += ",";
      s += args[i].str();
    }
    return s + ")";
  }
};

struct Literal {
  FeaturePattern pattern;
  bool positive = true;

  auto operator<=>(const Literal&) const = default;
  bool operator==(const Literal&) const = default;

  std::string str() const { return (positive ? "" : "~") + pattern.str(); }
};

/// Boolean expression over feature literals in negation normal form.
/// Negation only appears on literals; `negated()` pushes it through with
/// De Morgan.
class Expr {
 public:
  enum class Op : std::uint8_t { False, True, Lit, And, Or };

  Expr() = default;

  static Expr constant(bool v) { return Expr(v ? Op::True : Op::False); }
  static Expr truth() { return Expr(Op::True); }
  static Expr falsity() { return Expr(Op::False); }
  static Expr literal(FeaturePattern p, bool positive = true) {
    Expr e(Op::Lit);
    e.lit_ = Literal{std::move(p), positive};
    return e;
  }
  static Expr literal(Literal l) {
    Expr e(Op::Lit);
    e.lit_ = std::move(l);
    return e;
  }
  // Empty conjunction is True, empty disjunction is False.
  static Expr all_of(std::vector<Expr> children) {
    if (children.empty()) return truth();
    Expr e(Op::And);
    e.children_ = std::move(children);
    return e;
  }
  static Expr any_of(std::vector<Expr> children) {
    if (children.empty()) return falsity();
    Expr e(Op::Or);
    e.children_ = std::move(children);
    return e;
  }

  Op op() const noexcept { return op_; }
  bool is_true() const noexcept { return op_ == Op::True; }
  bool is_false() const noexcept { return op_ == Op::False; }
  const Literal& lit() const noexcept { return lit_; }
  const std::vector<Expr>& children() const noexcept { return children_; }

  Expr negated() const {
    switch (op_) {
      case Op::False: return truth();
      case Op::True: return falsity();
      case Op::Lit: return literal(lit_.pattern, !lit_.positive);
      case Op::And:
      case Op::Or: {
        std::vector<Expr> c;
        c.reserve(children_.size());
        for (const auto& ch : children_) c.push_back(ch.negated());
        return op_ == Op::And ? any_of(std::move(c)) : all_of(std::move(c));
      }
    }
    return falsity();
  }

  void collect_patterns(std::set<FeaturePattern>& out) const {
    if (op_ == Op::Lit) out.insert(lit_.pattern);
    for (const auto& c : children_) c.collect_patterns(out);
  }
  std::set<FeaturePattern> patterns() const {
    std::set<FeaturePattern> s;
    collect_patterns(s);
    return s;
  }

  bool operator==(const Expr& o) const {
    return op_ == o.op_ && lit_ == o.lit_ && children_ == o.children_;
  }

  std::string str() const {
    switch (op_) {
      case Op::False: return "false";
      case Op::True: return "true";
      case Op::Lit: return lit_.str();
      case Op::And:
      case Op::Or: {
        std::string s = "(";
        for (std::size_t i = 0; i < children_.size(); ++i) {
          if (i) s += op_ == Op::And ? " & " : " | ";
          s += children_[i].str();
        }
        return s + ")";
      }
    }
    return "?";
  }

 private:
  explicit Expr(Op op) : op_(op) {}

  Op op_ = Op::False;
  Literal lit_;
  std::vector<Expr> children_;
};

using Assignment = std::map<FeaturePattern, bool>;

/// Evaluates with a callable `lookup(const FeaturePattern&) -> bool`.
template <class Lookup>
bool evaluate(const Expr& e, Lookup&& lookup) {
  switch (e.op()) {
    case Expr::Op::False: return false;
    case Expr::Op::True: return true;
    case Expr::Op::Lit: return lookup(e.lit().pattern) == e.lit().positive;
    case Expr::Op::And:
      for (const auto& c : e.children())
        if (!evaluate(c, lookup)) return false;
      return true;
    case Expr::Op::Or:
      for (const auto& c : e.children())
        if (evaluate(c, lookup)) return true;
      return false;
  }
  return false;
}

inline bool eval_expr(const Expr& e, const Assignment& assign) {
  return evaluate(e, [&](const FeaturePattern& p) {
    auto it = assign.find(p);
    if (it == assign.end()) throw Error(ErrorCode::MissingFeature, p.str());
    return it->second;
  });
}

// ---------------------------------------------------------------------------
// DNF

using Term = std::vector<Literal>;  // conjunction, sorted canonically
using Dnf = std::vector<Term>;      // disjunction; {} is False, {{}} is True

namespace detail {

// Sorts, drops duplicate literals; returns false if the term is contradictory.
inline bool normalize_term(Term& t) {
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  for (std::size_t i = 1; i < t.size(); ++i)
    if (t[i - 1].pattern == t[i].pattern) return false;
  return true;
}

inline bool subsumes(const Term& small, const Term& big) {
  return small.size() <= big.size() && std::includes(big.begin(), big.end(), small.begin(), small.end());
}

inline Dnf absorb(Dnf terms) {
  std::sort(terms.begin(), terms.end(), [](const Term& a, const Term& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  });
  terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
  Dnf out;
  for (auto& t : terms) {
    bool covered = false;
    for (const auto& k : out)
      if (subsumes(k, t)) {
        covered = true;
        break;
      }
    if (!covered) out.push_back(std::move(t));
  }
  return out;
}

// Merges pairs of terms that differ only in the polarity of one literal
// (x & a) | (x & ~a) -> x, repeated to a fixed point.
inline Dnf merge_adjacent(Dnf terms) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < terms.size() && !changed; ++i) {
      for (std::size_t j = i + 1; j < terms.size() && !changed; ++j) {
        const Term& a = terms[i];
        const Term& b = terms[j];
        if (a.size() != b.size()) continue;
        std::size_t diff = a.size();
        bool ok = true;
        for (std::size_t k = 0; k < a.size(); ++k) {
          if (a[k] == b[k]) continue;
          if (a[k].pattern == b[k].pattern && diff == a.size()) {
            diff = k;
          } else {
            ok = false;
            break;
          }
        }
        if (!ok || diff == a.size()) continue;
        Term merged = a;
        merged.erase(merged.begin() + static_cast<std::ptrdiff_t>(diff));
        terms.erase(terms.begin() + static_cast<std::ptrdiff_t>(j));
        terms[i] = std::move(merged);
        terms = absorb(std::move(terms));
        changed = true;
      }
    }
  }
  return terms;
}

}  // namespace detail

inline Dnf simplify_dnf(Dnf terms) {
  Dnf kept;
  for (auto& t : terms)
    if (detail::normalize_term(t)) kept.push_back(std::move(t));
  kept = detail::absorb(std::move(kept));
  kept = detail::merge_adjacent(std::move(kept));
  std::sort(kept.begin(), kept.end());
  return kept;
}

/// Raw distribution into terms, then simplification.
inline Dnf dnf_terms(const Expr& e) {
  switch (e.op()) {
    case Expr::Op::False: return {};
    case Expr::Op::True: return {Term{}};
    case Expr::Op::Lit: return {Term{e.lit()}};
    case Expr::Op::Or: {
      Dnf out;
      for (const auto& c : e.children()) {
        Dnf d = dnf_terms(c);
        out.insert(out.end(), std::make_move_iterator(d.begin()), std::make_move_iterator(d.end()));
      }
      return simplify_dnf(std::move(out));
    }
    case Expr::Op::And: {
      Dnf acc{Term{}};
      for (const auto& c : e.children()) {
        Dnf d = dnf_terms(c);
        Dnf next;
        next.reserve(acc.size() * d.size());
        for (const auto& a : acc)
          for (const auto& b : d) {
            Term t = a;
            t.insert(t.end(), b.begin(), b.end());
            next.push_back(std::move(t));
          }
        acc = simplify_dnf(std::move(next));
        if (acc.empty()) break;
      }
      return acc;
    }
  }
  return {};
}

inline Expr from_dnf(const Dnf& terms) {
  if (terms.empty()) return Expr::falsity();
  for (const auto& t : terms)
    if (t.empty()) return Expr::truth();
  std::vector<Expr> disj;
  disj.reserve(terms.size());
  for (const auto& t : terms) {
    std::vector<Expr> conj;
    conj.reserve(t.size());
    for (const auto& l : t) conj.push_back(Expr::literal(l));
    disj.push_back(Expr::all_of(std::move(conj)));
  }
  return Expr::any_of(std::move(disj));
}

/// OR of ANDs of literals, canonically ordered, with duplicate, subsumed and
/// adjacent (single-polarity-difference) terms collapsed. Constants stay
/// constants.
inline Expr to_dnf(const Expr& e) { return from_dnf(dnf_terms(e)); }

inline constexpr std::size_t kMaxTruthTableFeatures = 20;

/// Exhaustive truth-table equivalence. Throws TooManyFeatures above 20
/// distinct patterns.
inline bool equivalent_by_truth_table(const Expr& a, const Expr& b) {
  std::set<FeaturePattern> pats = a.patterns();
  b.collect_patterns(pats);
  if (pats.size() > kMaxTruthTableFeatures)
    throw Error(ErrorCode::TooManyFeatures, std::to_string(pats.size()) + " features");
  const std::vector<FeaturePattern> order(pats.begin(), pats.end());
  std::map<FeaturePattern, std::size_t> index;
  for (std::size_t i = 0; i < order.size(); ++i) index[order[i]] = i;
  const std::uint64_t n = 1ULL << order.size();
  for (std::uint64_t m = 0; m < n; ++m) {
    auto lookup = [&](const FeaturePattern& p) { return ((m >> index.at(p)) & 1ULL) != 0; };
    if (evaluate(a, lookup) != evaluate(b, lookup)) return false;
  }
  return true;
}

}  // namespace psgi
