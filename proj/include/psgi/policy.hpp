#pragma once

#include <cmath>

#include "psgi/env.hpp"

namespace psgi {

inline std::vector<std::size_t> eligible_indices(const Bits& e) {
  std::vector<std::size_t> out;
  for (std::size_t o = 0; o < e.size(); ++o)
    if (e.test(o)) out.push_back(o);
  return out;
}

inline std::size_t random_eligible(const Bits& e, Rng& rng) {
  const auto elig = eligible_indices(e);
  if (elig.empty()) throw Error(ErrorCode::NoEligibleOption, "no eligible option");
  return elig[rng.uniform_index(elig.size())];
}

/// Least-executed eligible option, ties uniform.
inline std::size_t count_based_adapt(const Bits& e, const std::vector<std::size_t>& counts, Rng& rng) {
  std::vector<std::size_t> best;
  std::size_t lo = std::numeric_limits<std::size_t>::max();
  for (std::size_t o = 0; o < e.size(); ++o) {
    if (!e.test(o)) continue;
    const std::size_t c = o < counts.size() ? counts[o] : 0;
    if (c < lo) {
      lo = c;
      best.clear();
    }
    if (c == lo) best.push_back(o);
  }
  if (best.empty()) throw Error(ErrorCode::NoEligibleOption, "no eligible option");
  return best[rng.uniform_index(best.size())];
}

// ---------------------------------------------------------------------------
// GRProp

struct GRPropConfig {
  double temperature = 200.0;
  double w_a = 3.0;
  double beta_a = 8.0;
  double eps_or = 0.8;
  double t_or = 2.0;
  int k_iters = 8;

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorCode::ValidationError, "grprop: " + what); };
    if (!(temperature > 0.0)) bad("temperature must be > 0");
    if (!(w_a >= 1.0)) bad("w_a must be >= 1");
    if (!(beta_a > 0.0)) bad("beta_a must be > 0");
    if (!(eps_or >= 0.0 && eps_or <= 1.0)) bad("eps_or must lie in [0,1]");
    if (!(t_or > 0.0)) bad("t_or must be > 0");
    if (k_iters < 1) bad("k_iters must be >= 1");
  }
};

namespace detail {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Per-subtask adders and deleters of a compiled graph.
struct EffectIndex {
  std::vector<std::vector<std::size_t>> add, del;

  explicit EffectIndex(const CompiledGraph& g) : add(g.num_subtasks), del(g.num_subtasks) {
    for (std::size_t o = 0; o < g.options.size(); ++o)
      for (const auto& ef : g.options[o].effects) (ef.sign > 0 ? add : del)[ef.subtask].push_back(o);
  }
};

struct SoftTerm {
  double a = 0.0;  // weighted literal mean
  double u = 1.0;  // softAND value
};

struct Layer {
  std::vector<double> p_in;
  std::vector<std::vector<SoftTerm>> terms;  // per option
  std::vector<double> elig;
  std::vector<double> q, m;  // per subtask
};

inline double term_weight(const GroundLiteral& l, const GRPropConfig& cfg) { return l.positive ? cfg.w_a : 1.0; }

// softOR of term values and its partial derivatives.
inline double soft_or(const std::vector<SoftTerm>& t, const GRPropConfig& cfg, std::vector<double>* grad) {
  if (grad) grad->assign(t.size(), 0.0);
  if (t.empty()) return 0.0;
  if (t.size() == 1) {
    if (grad) (*grad)[0] = 1.0;
    return t[0].u;
  }
  std::size_t arg = 0;
  double mx = t[0].u;
  for (std::size_t j = 1; j < t.size(); ++j)
    if (t[j].u > mx) {
      mx = t[j].u;
      arg = j;
    }
  std::vector<double> w(t.size());
  double z = 0.0;
  for (std::size_t j = 0; j < t.size(); ++j) z += (w[j] = std::exp(cfg.t_or * (t[j].u - mx)));
  double s = 0.0;
  for (std::size_t j = 0; j < t.size(); ++j) s += t[j].u * (w[j] /= z);
  if (grad) {
    for (std::size_t j = 0; j < t.size(); ++j) (*grad)[j] = (1.0 - cfg.eps_or) * w[j] * (1.0 + cfg.t_or * (t[j].u - s));
    (*grad)[arg] += cfg.eps_or;
  }
  return cfg.eps_or * mx + (1.0 - cfg.eps_or) * s;
}

inline std::vector<Layer> grprop_forward(const CompiledGraph& g, const EffectIndex& idx, const Bits& x,
                                         const std::vector<double>& gates, const GRPropConfig& cfg) {
  const std::size_t n = g.num_subtasks, m = g.options.size();
  std::vector<double> p(n);
  for (std::size_t s = 0; s < n; ++s) p[s] = x.test(s) ? 1.0 : 0.0;
  std::vector<Layer> layers(static_cast<std::size_t>(cfg.k_iters));
  for (auto& L : layers) {
    L.p_in = p;
    L.terms.resize(m);
    L.elig.resize(m);
    for (std::size_t o = 0; o < m; ++o) {
      const auto& cond = g.options[o].precondition.terms;
      auto& ts = L.terms[o];
      ts.resize(cond.size());
      for (std::size_t t = 0; t < cond.size(); ++t) {
        if (cond[t].empty()) {
          ts[t] = SoftTerm{1.0, 1.0};
          continue;
        }
        double num = 0.0, den = 0.0;
        for (const auto& l : cond[t]) {
          const double w = term_weight(l, cfg);
          num += w * (l.positive ? p[l.subtask] : 1.0 - p[l.subtask]);
          den += w;
        }
        ts[t].a = num / den;
        ts[t].u = sigmoid(cfg.beta_a * (ts[t].a - 0.5));
      }
      L.elig[o] = soft_or(ts, cfg, nullptr);
    }
    L.q.assign(n, 1.0);
    L.m.assign(n, 1.0);
    for (std::size_t s = 0; s < n; ++s) {
      for (auto o : idx.add[s]) L.q[s] *= 1.0 - gates[o] * L.elig[o];
      if (x.test(s)) {
        double keep = 1.0;
        for (auto o : idx.del[s]) keep *= 1.0 - gates[o] * L.elig[o];
        L.m[s] = 1.0 - keep;
      }
      p[s] = 1.0 - L.m[s] * L.q[s];
    }
  }
  return layers;
}

// Products of (1 - v_j) over all j except i, without division.
inline std::vector<double> leave_one_out(const std::vector<double>& v) {
  const std::size_t k = v.size();
  std::vector<double> pre(k + 1, 1.0), suf(k + 1, 1.0), out(k);
  for (std::size_t i = 0; i < k; ++i) pre[i + 1] = pre[i] * (1.0 - v[i]);
  for (std::size_t i = k; i-- > 0;) suf[i] = suf[i + 1] * (1.0 - v[i]);
  for (std::size_t i = 0; i < k; ++i) out[i] = pre[i] * suf[i + 1];
  return out;
}

}  // namespace detail

/// U(g) = sum_s reward_s * p_s after K soft propagation steps with option
/// gates g (g = 1 is the actual graph).
inline double grprop_utility(const CompiledGraph& g, const Bits& x, const std::vector<double>& reward,
                             const std::vector<double>& gates, const GRPropConfig& cfg) {
  const detail::EffectIndex idx(g);
  const auto layers = detail::grprop_forward(g, idx, x, gates, cfg);
  const auto& last = layers.back();
  double u = 0.0;
  for (std::size_t s = 0; s < g.num_subtasks; ++s) u += reward[s] * (1.0 - last.m[s] * last.q[s]);
  return u;
}

/// Soft propagation of completion through the graph. Each step recomputes
/// soft eligibility from the previous soft completion (softAND over the
/// literals of a DNF term, softOR over terms) and sets
///   p_s = 1 - m_s * prod_{o adds s} (1 - g_o elig_o)
/// with m_s = 1 for incomplete s and 1 - prod_{o deletes s} (1 - g_o elig_o)
/// for complete s. Scores are dU/dg_o at g = 1, by reverse accumulation.
inline std::vector<double> grprop_scores(const CompiledGraph& g, const Bits& x, const std::vector<double>& reward,
                                         const GRPropConfig& cfg) {
  const std::size_t n = g.num_subtasks, m = g.options.size();
  std::vector<double> score(m, 0.0);
  bool any = false;
  for (double r : reward) any = any || r != 0.0;
  if (!any || m == 0) return score;

  const std::vector<double> gates(m, 1.0);
  const detail::EffectIndex idx(g);
  const auto layers = detail::grprop_forward(g, idx, x, gates, cfg);

  std::vector<double> p_bar(reward.begin(), reward.end());
  std::vector<double> e_bar(m), grad_or, vals;
  for (std::size_t k = layers.size(); k-- > 0;) {
    const auto& L = layers[k];
    std::fill(e_bar.begin(), e_bar.end(), 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      if (p_bar[s] == 0.0) continue;
      // p = 1 - m q
      const auto& adders = idx.add[s];
      if (!adders.empty() && L.m[s] != 0.0) {
        vals.clear();
        for (auto o : adders) vals.push_back(gates[o] * L.elig[o]);
        const auto others = detail::leave_one_out(vals);
        for (std::size_t i = 0; i < adders.size(); ++i) {
          const double c = p_bar[s] * L.m[s] * others[i];
          score[adders[i]] += c * L.elig[adders[i]];
          e_bar[adders[i]] += c * gates[adders[i]];
        }
      }
      const auto& dels = idx.del[s];
      if (x.test(s) && !dels.empty()) {
        vals.clear();
        for (auto o : dels) vals.push_back(gates[o] * L.elig[o]);
        const auto others = detail::leave_one_out(vals);
        for (std::size_t i = 0; i < dels.size(); ++i) {
          const double c = -p_bar[s] * L.q[s] * others[i];
          score[dels[i]] += c * L.elig[dels[i]];
          e_bar[dels[i]] += c * gates[dels[i]];
        }
      }
    }
    // Back through eligibility to the incoming soft completion.
    std::vector<double> next_bar(n, 0.0);
    for (std::size_t o = 0; o < m; ++o) {
      if (e_bar[o] == 0.0) continue;
      const auto& cond = g.options[o].precondition.terms;
      detail::soft_or(L.terms[o], cfg, &grad_or);
      for (std::size_t t = 0; t < cond.size(); ++t) {
        if (cond[t].empty()) continue;
        const double u = L.terms[o][t].u;
        const double du = e_bar[o] * grad_or[t] * cfg.beta_a * u * (1.0 - u);
        double den = 0.0;
        for (const auto& l : cond[t]) den += detail::term_weight(l, cfg);
        for (const auto& l : cond[t]) {
          const double d = du * detail::term_weight(l, cfg) / den;
          next_bar[l.subtask] += l.positive ? d : -d;
        }
      }
    }
    p_bar = std::move(next_bar);
  }
  for (auto& s : score)
    if (!std::isfinite(s)) s = 0.0;
  return score;
}

/// Samples from softmax(temperature * scores) over the eligible options.
/// Scores are first divided by their range over the eligible set, so the
/// temperature acts on relative differences whatever the reward scale.
inline std::size_t grprop_select(const std::vector<double>& scores, const Bits& e, double temperature, Rng& rng) {
  const auto elig = eligible_indices(e);
  if (elig.empty()) throw Error(ErrorCode::NoEligibleOption, "no eligible option");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, mag = 0.0;
  for (auto o : elig) {
    lo = std::min(lo, scores[o]);
    hi = std::max(hi, scores[o]);
    mag = std::max(mag, std::abs(scores[o]));
  }
  const double range = hi - lo;
  if (!(range > 1e-9 * mag) || range < 1e-300) return elig[rng.uniform_index(elig.size())];
  std::vector<double> w(elig.size());
  double z = 0.0;
  for (std::size_t i = 0; i < elig.size(); ++i) z += (w[i] = std::exp(temperature * (scores[elig[i]] - hi) / range));
  double u = rng.uniform01() * z;
  for (std::size_t i = 0; i < elig.size(); ++i) {
    u -= w[i];
    if (u < 0.0) return elig[i];
  }
  return elig.back();
}

// ---------------------------------------------------------------------------
// Exact planner

enum class PlanStatus : std::uint8_t { Found, Unreachable, CapReached };

struct PlanResult {
  PlanStatus status = PlanStatus::Unreachable;
  std::vector<std::size_t> options;

  bool found() const noexcept { return status == PlanStatus::Found; }
};

/// Shortest option sequence completing `target` from `x`, breadth-first over
/// completions; among equal-length plans the one with the smallest option
/// indices in order wins.
inline PlanResult exact_plan(const CompiledGraph& g, const Bits& x, std::size_t target,
                             std::size_t state_cap = 1000000) {
  PlanResult res;
  if (x.test(target)) {
    res.status = PlanStatus::Found;
    return res;
  }
  std::vector<Bits> states{x};
  std::vector<std::pair<std::size_t, std::size_t>> parent{{0, 0}};
  std::unordered_map<Bits, std::size_t, BitsHash> seen{{x, 0}};
  for (std::size_t head = 0; head < states.size(); ++head) {
    for (std::size_t o = 0; o < g.options.size(); ++o) {
      if (!g.eligible(o, states[head])) continue;
      Bits y = g.apply(o, states[head]);
      if (seen.count(y)) continue;
      if (states.size() >= state_cap) {
        res.status = PlanStatus::CapReached;
        return res;
      }
      const bool hit = y.test(target);
      seen.emplace(y, states.size());
      states.push_back(std::move(y));
      parent.emplace_back(head, o);
      if (hit) {
        for (std::size_t i = states.size() - 1; i != 0; i = parent[i].first) res.options.push_back(parent[i].second);
        std::reverse(res.options.begin(), res.options.end());
        res.status = PlanStatus::Found;
        return res;
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Prior/test ensemble

struct EnsembleSchedule {
  int t_switch = 1000;
  int n_priors = 4;
  int t_prior = 2000;

  /// Weight of the prior graphs after `t` steps of experience on the task.
  double alpha(long t) const {
    return std::max(0.0, 1.0 - static_cast<double>(t) / static_cast<double>(t_switch));
  }

  void validate() const {
    if (t_switch <= 0) throw Error(ErrorCode::ValidationError, "t_switch must be > 0");
    if (n_priors < 0) throw Error(ErrorCode::ValidationError, "n_priors must be >= 0");
    if (t_prior < 0) throw Error(ErrorCode::ValidationError, "t_prior must be >= 0");
  }
};

/// alpha * mean prior scores + (1 - alpha) * test scores. At alpha = 1 (or
/// with no test graph) only the priors count; at alpha = 0 (or with no
/// priors) only the test graph.
inline std::vector<double> ensemble_scores(const std::vector<CompiledGraph>& priors, const CompiledGraph* test,
                                           const Bits& x, const std::vector<double>& reward, double alpha,
                                           const GRPropConfig& cfg) {
  std::vector<double> prior_mean;
  if (!priors.empty() && (alpha > 0.0 || !test)) {
    for (const auto& p : priors) {
      auto s = grprop_scores(p, x, reward, cfg);
      if (prior_mean.empty())
        prior_mean = std::move(s);
      else
        for (std::size_t o = 0; o < s.size(); ++o) prior_mean[o] += s[o];
    }
    for (auto& v : prior_mean) v /= static_cast<double>(priors.size());
  }
  if (!test) return prior_mean;
  if (priors.empty() || alpha <= 0.0) return grprop_scores(*test, x, reward, cfg);
  if (alpha >= 1.0) return prior_mean;
  auto t = grprop_scores(*test, x, reward, cfg);
  for (std::size_t o = 0; o < t.size(); ++o) t[o] = alpha * prior_mean[o] + (1.0 - alpha) * t[o];
  return t;
}

inline std::size_t ensemble_select(const std::vector<CompiledGraph>& priors, const CompiledGraph* test,
                                   const Bits& x, const Bits& e, long t, const std::vector<double>& reward,
                                   const GRPropConfig& cfg, const EnsembleSchedule& schedule, Rng& rng) {
  auto scores = ensemble_scores(priors, test, x, reward, schedule.alpha(t), cfg);
  if (scores.empty()) scores.assign(e.size(), 0.0);
  return grprop_select(scores, e, cfg.temperature, rng);
}

/// Eligible options that some model expects to change `x`. Falls back to
/// `e` when none does.
inline Bits drop_predicted_noops(const Bits& e, const Bits& x, const std::vector<const CompiledGraph*>& models) {
  Bits out(e.size());
  bool any = false;
  for (auto o : eligible_indices(e)) {
    bool changes = false;
    for (const auto* m : models) {
      if (!m || o >= m->options.size()) continue;
      for (const auto& ef : m->options[o].effects) changes = changes || x.test(ef.subtask) != (ef.sign > 0);
    }
    if (changes) {
      out.set(o, true);
      any = true;
    }
  }
  return any ? out : e;
}

/// Reward weights for GRProp on `task`: the test graph's estimate where the
/// subtask was observed. Until some subtask has shown positive reward,
/// unobserved subtasks take the mean estimate of their signature in the
/// prior graphs.
inline std::vector<double> reward_vector(const TaskInstance& task, const ParamGraph* test,
                                         const std::vector<const ParamGraph*>& priors) {
  const std::size_t n = task.num_subtasks();
  std::vector<double> r(n, 0.0);
  std::vector<char> observed(n, 0);
  bool found = false;
  if (test)
    for (std::size_t s = 0; s < n; ++s) {
      const auto est = test->reward(task.space.subtasks()[s]);
      if (est.count) {
        r[s] = est.mean;
        observed[s] = 1;
        found = found || est.mean > 0.0;
      }
    }
  if (found || priors.empty()) return r;
  std::map<VerbSignature, std::pair<double, int>> sig_mean;
  for (const auto* p : priors) {
    std::map<VerbSignature, std::pair<double, std::size_t>> local;
    for (const auto& [item, est] : p->rewards)
      if (est.count) {
        local[item.sig].first += est.mean;
        local[item.sig].second += 1;
      }
    for (const auto& [sig, acc] : local) {
      sig_mean[sig].first += acc.first / static_cast<double>(acc.second);
      sig_mean[sig].second += 1;
    }
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (observed[s]) continue;
    auto it = sig_mean.find(task.space.subtasks()[s].sig);
    if (it != sig_mean.end()) r[s] = it->second.first / it->second.second;
  }
  return r;
}

/// Reward weights read straight from one graph's estimates.
inline std::vector<double> graph_rewards(const CompiledGraph& g) {
  std::vector<double> r(g.rewards.size());
  for (std::size_t s = 0; s < r.size(); ++s) r[s] = g.rewards[s].mean;
  return r;
}

/// Scores for a parameterized graph on `task`; attributes of inferred graphs
/// go through their candidates and `emb`.
inline std::vector<double> grprop_scores(const ParamGraph& graph, const TaskInstance& task, const Bits& x,
                                         const GRPropConfig& cfg, const EmbeddingTable& emb) {
  const CompiledGraph cg = compile_graph(graph, task.space, lookup_for(graph, emb, task.truth_lookup()));
  return grprop_scores(cg, x, graph_rewards(cg), cfg);
}

}  // namespace psgi
