#pragma once

#include <cmath>
#include <string>

#include "psgi/psgi.hpp"

namespace psgi::testing {

inline std::string domain_path(const std::string& name) { return std::string(PSGI_DOMAIN_DIR) + "/" + name; }

inline const DomainConfig& toycook_domain() {
  static const DomainConfig cfg = load_domain(domain_path("toycook.domain.json"));
  return cfg;
}

// e0 (f=1) and e1 (f=0). Subtasks A(e0) A(e1) B(e0) B(e1); options C(e0)
// C(e1) D(e0) D(e1) E(e0) E(e1), in that index order.
inline TaskInstance toycook_task() { return sample_task(toycook_domain(), Pool::Train, 0); }

inline std::size_t subtask_index(const TaskInstance& t, const std::string& name) {
  for (std::size_t s = 0; s < t.num_subtasks(); ++s)
    if (t.space.subtasks()[s].str() == name) return s;
  throw Error(ErrorCode::InvalidArgument, "no subtask " + name);
}

inline std::size_t option_index(const TaskInstance& t, const std::string& name) {
  for (std::size_t o = 0; o < t.num_options(); ++o)
    if (t.space.options()[o].str() == name) return o;
  throw Error(ErrorCode::InvalidArgument, "no option " + name);
}

inline Bits bits_of(const TaskInstance& t, std::initializer_list<const char*> names) {
  Bits x(t.num_subtasks());
  for (const char* n : names) x.set(subtask_index(t, n));
  return x;
}

inline FeaturePattern sub(const std::string& verb, int slot = 1) {
  return FeaturePattern::completion(VerbSignature{verb, 1}, {Arg::param(slot)});
}
inline FeaturePattern attr(const std::string& id, int slot = 1) { return FeaturePattern::attr(id, Arg::param(slot)); }

inline Trajectory count_based_rollout(const TaskInstance& task, int steps, std::uint64_t seed) {
  CountBasedPolicy p(seed);
  return run_adaptation(task, std::ref(p), steps);
}

// ---------------------------------------------------------------------------
// Random expressions over `n` boolean features named x0..x{n-1}.

inline FeaturePattern feature(int i) {
  return FeaturePattern::completion(VerbSignature{"x" + std::to_string(i), 0}, {});
}

inline Expr random_expr(Rng& rng, int n_features, int depth) {
  if (depth == 0 || rng.uniform01() < 0.25) {
    const double u = rng.uniform01();
    if (u < 0.03) return Expr::truth();
    if (u < 0.06) return Expr::falsity();
    return Expr::literal(feature(static_cast<int>(rng.uniform_index(static_cast<std::size_t>(n_features)))),
                         rng.uniform01() < 0.6);
  }
  std::vector<Expr> kids;
  const std::size_t k = 1 + rng.uniform_index(3);
  for (std::size_t i = 0; i < k; ++i) kids.push_back(random_expr(rng, n_features, depth - 1));
  Expr e = rng.uniform01() < 0.5 ? Expr::all_of(std::move(kids)) : Expr::any_of(std::move(kids));
  return rng.uniform01() < 0.2 ? e.negated() : e;
}

// ---------------------------------------------------------------------------
// Random small domains: three unary subtasks S0..S2 and three unary option
// verbs O0..O2. O0 is always eligible; Ok's precondition is a random DNF
// over S_j(p1) for j < k and attribute literals; Ok sets S_k and may clear
// an earlier S_j.

inline DomainConfig random_domain(std::uint64_t seed, bool allow_deletes = true, int n_entities = 3) {
  Rng rng(seed);
  DomainConfig cfg;
  cfg.name = "rand" + std::to_string(seed);
  cfg.attributes = {"a", "b"};
  cfg.embedding_dim = 4;
  for (int i = 0; i < n_entities; ++i) {
    EntitySpec e;
    e.id = "r" + std::to_string(i);
    e.attributes["a"] = rng.uniform01() < 0.6;
    e.attributes["b"] = rng.uniform01() < 0.5;
    cfg.entities.push_back(e);
  }
  for (int k = 0; k < 3; ++k) cfg.subtasks.push_back(SubtaskTemplate{VerbSignature{"S" + std::to_string(k), 1}, {}});
  for (int k = 0; k < 3; ++k) {
    OptionTemplate o;
    o.sig = VerbSignature{"O" + std::to_string(k), 1};
    if (k == 0) {
      o.precondition = Expr::truth();
    } else {
      std::vector<Expr> terms;
      const std::size_t n_terms = 1 + rng.uniform_index(2);
      for (std::size_t t = 0; t < n_terms; ++t) {
        std::vector<Expr> lits;
        lits.push_back(Expr::literal(sub("S" + std::to_string(rng.uniform_index(static_cast<std::size_t>(k))))));
        for (int j = 0; j < k; ++j)
          if (rng.uniform01() < 0.3) lits.push_back(Expr::literal(sub("S" + std::to_string(j))));
        if (rng.uniform01() < 0.5) lits.push_back(Expr::literal(attr(rng.uniform01() < 0.5 ? "a" : "b"), rng.uniform01() < 0.7));
        terms.push_back(Expr::all_of(std::move(lits)));
      }
      o.precondition = Expr::any_of(std::move(terms));
    }
    o.effect.push_back(EffectEntry{sub("S" + std::to_string(k)), +1});
    if (allow_deletes && k > 0 && rng.uniform01() < 0.3)
      o.effect.push_back(EffectEntry{sub("S" + std::to_string(rng.uniform_index(static_cast<std::size_t>(k)))), -1});
    cfg.options.push_back(std::move(o));
  }
  cfg.task = TaskParams{n_entities, 30, 200, 30};
  validate_domain(cfg);
  return cfg;
}

// ---------------------------------------------------------------------------
// Random compiled graphs for gradient checks.

inline CompiledGraph random_compiled_graph(Rng& rng, std::size_t n, std::size_t m) {
  CompiledGraph g;
  g.num_subtasks = n;
  for (std::size_t o = 0; o < m; ++o) {
    CompiledOption opt;
    const std::size_t n_terms = 1 + rng.uniform_index(2);
    for (std::size_t t = 0; t < n_terms; ++t) {
      std::vector<GroundLiteral> term;
      const std::size_t len = rng.uniform_index(4);
      for (std::size_t i = 0; i < len; ++i) {
        const auto s = static_cast<std::uint32_t>(rng.uniform_index(n));
        bool dup = false;
        for (const auto& l : term) dup = dup || l.subtask == s;
        if (!dup) term.push_back(GroundLiteral{s, rng.uniform01() < 0.75});
      }
      opt.precondition.terms.push_back(std::move(term));
    }
    const std::size_t n_eff = 1 + rng.uniform_index(2);
    for (std::size_t i = 0; i < n_eff; ++i) {
      const auto s = static_cast<std::uint32_t>(rng.uniform_index(n));
      bool dup = false;
      for (const auto& e : opt.effects) dup = dup || e.subtask == s;
      if (!dup) opt.effects.push_back(GroundEffect{s, rng.uniform01() < 0.8 ? +1 : -1});
    }
    g.options.push_back(std::move(opt));
  }
  g.rewards.assign(n, RewardEstimate{});
  return g;
}

struct GradientCheck {
  double max_rel = 0.0;
  bool smooth = true;  // false when two step sizes disagree (a kink is near)
};

// Central differences of grprop_utility against grprop_scores.
inline GradientCheck check_gradient(const CompiledGraph& g, const Bits& x, const std::vector<double>& reward,
                                    const GRPropConfig& cfg, double h = 1e-4) {
  const auto analytic = grprop_scores(g, x, reward, cfg);
  GradientCheck res;
  // The max inside softOR has a kink wherever two terms tie. A step of h can
  // cross a near tie, and central differences then mix the two slopes, so
  // points with terms closer than 10 * beta_a * h are skipped.
  const detail::EffectIndex idx(g);
  for (const auto& L : detail::grprop_forward(g, idx, x, std::vector<double>(g.options.size(), 1.0), cfg))
    for (const auto& ts : L.terms)
      for (std::size_t i = 0; i < ts.size(); ++i)
        for (std::size_t j = i + 1; j < ts.size(); ++j)
          if (std::abs(ts[i].u - ts[j].u) < 10.0 * cfg.beta_a * h) res.smooth = false;
  std::vector<double> gates(g.options.size(), 1.0);
  auto fd = [&](std::size_t o, double step) {
    gates[o] = 1.0 + step;
    const double up = grprop_utility(g, x, reward, gates, cfg);
    gates[o] = 1.0 - step;
    const double down = grprop_utility(g, x, reward, gates, cfg);
    gates[o] = 1.0;
    return (up - down) / (2.0 * step);
  };
  for (std::size_t o = 0; o < g.options.size(); ++o) {
    const double d1 = fd(o, h), d2 = fd(o, h / 2.0);
    if (std::abs(d1 - d2) > 1e-6 * std::max(1.0, std::abs(d1))) res.smooth = false;
    const double denom = std::max({std::abs(d1), std::abs(analytic[o]), 1e-5});
    res.max_rel = std::max(res.max_rel, std::abs(d1 - analytic[o]) / denom);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Greedy GRProp rollout with the ground-truth graph, acting as the harness
// agents do (eligible options some model expects to change x, then
// near-argmax selection).

struct GreedyOutcome {
  bool reached = false;
  int steps = 0;
  std::optional<int> optimal;
};

inline GreedyOutcome greedy_vs_plan(const TaskInstance& task, std::uint64_t seed, const GRPropConfig& cfg = {}) {
  GreedyOutcome out;
  const PlanResult plan = exact_plan(task.truth_model, Bits(task.num_subtasks()), task.reward_subtask);
  if (!plan.found()) return out;
  out.optimal = static_cast<int>(plan.options.size());
  const int limit = 2 * *out.optimal;
  const auto reward = graph_rewards(task.truth_model);
  const std::vector<const CompiledGraph*> models{&task.truth_model};
  Rng rng(seed);
  EnvState s = reset(task, Phase::Test);
  s.step = limit;
  for (int t = 0; t < limit; ++t) {
    if (s.e.none()) break;
    const Bits e = drop_predicted_noops(s.e, s.x, models);
    const std::size_t o = grprop_select(grprop_scores(task.truth_model, s.x, reward, cfg), e, cfg.temperature, rng);
    const StepResult r = step(task, s, o, Phase::Test);
    s = r.state;
    out.steps = t + 1;
    if (r.reward > 0.0) {
      out.reached = true;
      break;
    }
  }
  return out;
}

// Random consistent precondition table over n binary features: rows drawn
// uniformly, labels from a random hidden expression.
inline PrecondTable random_table(Rng& rng, int n_features, std::size_t n_rows) {
  const Expr hidden = random_expr(rng, n_features, 3);
  PrecondTable t;
  t.sig = VerbSignature{"t", 0};
  for (int i = 0; i < n_features; ++i) t.features.push_back(feature(i));
  std::map<Bits, std::size_t> index;
  for (std::size_t r = 0; r < n_rows; ++r) {
    Bits row(static_cast<std::size_t>(n_features));
    for (int i = 0; i < n_features; ++i)
      if (rng.uniform01() < 0.5) row.set(static_cast<std::size_t>(i));
    auto [it, fresh] = index.emplace(row, t.rows.size());
    if (!fresh) {
      ++t.multiplicity[it->second];
      continue;
    }
    const bool label = evaluate(hidden, [&](const FeaturePattern& p) {
      return row.test(static_cast<std::size_t>(std::stoi(p.subtask.verb.substr(1))));
    });
    t.rows.push_back(row);
    t.labels.push_back(label ? 1 : 0);
    t.multiplicity.push_back(1 + rng.uniform_index(3));
  }
  return t;
}

inline bool expr_reproduces_table(const Expr& e, const PrecondTable& t) {
  std::map<FeaturePattern, std::size_t> col;
  for (std::size_t i = 0; i < t.features.size(); ++i) col[t.features[i]] = i;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const bool v = evaluate(e, [&](const FeaturePattern& p) { return t.rows[r].test(col.at(p)); });
    if (v != static_cast<bool>(t.labels[r])) return false;
  }
  return true;
}

}  // namespace psgi::testing
