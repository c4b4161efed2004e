#pragma once

#include "psgi/env.hpp"

namespace psgi {

enum class ProbeMode : std::uint8_t {
  Auto,     // every reachable completion when few enough, else a uniform sample
            // of them, else rollout samples
  Uniform,  // uniformly random bitvectors
};

struct GraphErrorOptions {
  std::size_t probes = 10000;
  std::uint64_t seed = 0;
  std::size_t reachable_cap = 10000;
  std::size_t enumerate_cap = 200000;
  ProbeMode mode = ProbeMode::Auto;
};

struct GraphError {
  double prec_error = 0.0;
  double eff_error = 0.0;
  std::size_t probes = 0;
  bool exhaustive = false;
};

/// Completions reachable from the empty one under `g`, breadth-first. Stops
/// (returning nullopt) once more than `cap` are found. Completions with the
/// `terminal` subtask done end the episode: they are neither kept nor
/// expanded.
inline std::optional<std::vector<Bits>> reachable_completions(const CompiledGraph& g, std::size_t cap,
                                                              std::optional<std::size_t> terminal = std::nullopt) {
  std::unordered_set<Bits, BitsHash> seen;
  std::vector<Bits> order{Bits(g.num_subtasks)};
  seen.insert(order.front());
  for (std::size_t head = 0; head < order.size(); ++head) {
    const Bits x = order[head];
    for (std::size_t o = 0; o < g.options.size(); ++o) {
      if (!g.eligible(o, x)) continue;
      Bits y = g.apply(o, x);
      if (terminal && y.test(*terminal)) continue;
      if (seen.insert(y).second) {
        if (order.size() >= cap) return std::nullopt;
        order.push_back(std::move(y));
      }
    }
  }
  return order;
}

/// Completions visited by uniformly random eligible rollouts from the empty
/// completion, `horizon` steps each or until `terminal` is done, until
/// `count` are gathered.
inline std::vector<Bits> sample_reachable(const CompiledGraph& g, std::size_t count, int horizon, Rng& rng,
                                          std::optional<std::size_t> terminal = std::nullopt) {
  std::vector<Bits> out;
  out.reserve(count);
  while (out.size() < count) {
    Bits x(g.num_subtasks);
    out.push_back(x);
    for (int t = 0; t < horizon && out.size() < count; ++t) {
      std::vector<std::size_t> elig;
      for (std::size_t o = 0; o < g.options.size(); ++o)
        if (g.eligible(o, x)) elig.push_back(o);
      if (elig.empty()) break;
      x = g.apply(elig[rng.uniform_index(elig.size())], x);
      if (terminal && x.test(*terminal)) break;
      out.push_back(x);
    }
  }
  return out;
}

inline std::vector<Bits> probe_completions(const CompiledGraph& truth, int horizon, const GraphErrorOptions& opt,
                                           bool* exhaustive = nullptr,
                                           std::optional<std::size_t> terminal = std::nullopt) {
  Rng rng(derive_seed(opt.seed, 0x9e0b));
  if (exhaustive) *exhaustive = false;
  if (opt.mode == ProbeMode::Uniform) {
    std::vector<Bits> out;
    for (std::size_t i = 0; i < opt.probes; ++i) {
      Bits x(truth.num_subtasks);
      for (std::size_t s = 0; s < truth.num_subtasks; ++s) x.set(s, rng.next_u64() & 1ULL);
      out.push_back(std::move(x));
    }
    return out;
  }
  const std::size_t cap = std::max(opt.reachable_cap, opt.enumerate_cap);
  if (cap > 0) {
    if (auto all = reachable_completions(truth, cap, terminal)) {
      if (all->size() <= opt.reachable_cap) {
        if (exhaustive) *exhaustive = true;
        return std::move(*all);
      }
      rng.shuffle(*all);
      all->resize(std::min(all->size(), opt.probes));
      return std::move(*all);
    }
  }
  return sample_reachable(truth, opt.probes, horizon, rng, terminal);
}

/// Disagreement between two compiled graphs over the same ground space.
inline GraphError compare_compiled(const CompiledGraph& hat, const CompiledGraph& truth,
                                   const std::vector<Bits>& probes) {
  if (hat.options.size() != truth.options.size() || hat.num_subtasks != truth.num_subtasks)
    throw Error(ErrorCode::DimensionMismatch, "graphs compiled against different ground spaces");
  std::size_t prec_bad = 0, pairs = 0, eff_bad = 0, eff_pairs = 0;
  for (const auto& x : probes) {
    for (std::size_t o = 0; o < truth.options.size(); ++o) {
      const bool et = truth.eligible(o, x);
      ++pairs;
      if (hat.eligible(o, x) != et) ++prec_bad;
      if (et) {
        ++eff_pairs;
        if (hat.apply(o, x) != truth.apply(o, x)) ++eff_bad;
      }
    }
  }
  GraphError r;
  r.probes = probes.size();
  r.prec_error = pairs ? static_cast<double>(prec_bad) / static_cast<double>(pairs) : 0.0;
  r.eff_error = eff_pairs ? static_cast<double>(eff_bad) / static_cast<double>(eff_pairs) : 0.0;
  return r;
}

/// prec_error: fraction of (ground option, probe completion) pairs whose
/// eligibility differs. eff_error: fraction of pairs eligible under the
/// truth whose next completion differs. Probes are the completions at which
/// an agent can still act: reachable without completing the rewarded subtask.
inline GraphError semantic_graph_error(const CompiledGraph& hat, const TaskInstance& task,
                                       const GraphErrorOptions& opt = {}) {
  bool exhaustive = false;
  const auto probes =
      probe_completions(task.truth_model, task.budgets.episode_steps, opt, &exhaustive, task.reward_subtask);
  GraphError r = compare_compiled(hat, task.truth_model, probes);
  r.exhaustive = exhaustive;
  return r;
}

/// Graph-level overload. Attributes of `g_hat` are read through its own
/// candidate set (with `emb` for unseen entities) or the task's ground truth.
inline GraphError semantic_graph_error(const ParamGraph& g_hat, const TaskInstance& task, const EmbeddingTable& emb,
                                       const GraphErrorOptions& opt = {}) {
  const CompiledGraph hat = compile_graph(g_hat, task.space, lookup_for(g_hat, emb, task.truth_lookup()));
  return semantic_graph_error(hat, task, opt);
}

inline GraphError semantic_graph_error(const ParamGraph& g_hat, const ParamGraph& g_true, const TaskInstance& task,
                                       const EmbeddingTable& emb, const GraphErrorOptions& opt = {}) {
  const CompiledGraph hat = compile_graph(g_hat, task.space, lookup_for(g_hat, emb, task.truth_lookup()));
  const CompiledGraph truth = compile_graph(g_true, task.space, lookup_for(g_true, emb, task.truth_lookup()));
  bool exhaustive = false;
  const auto probes = probe_completions(truth, task.budgets.episode_steps, opt, &exhaustive, task.reward_subtask);
  GraphError r = compare_compiled(hat, truth, probes);
  r.exhaustive = exhaustive;
  return r;
}

}  // namespace psgi
