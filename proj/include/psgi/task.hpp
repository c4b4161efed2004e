#pragma once

#include <algorithm>
#include <deque>
#include <limits>
#include <memory>
#include <optional>
#include <unordered_map>
#include <unordered_set>

#include "psgi/domain.hpp"
#include "psgi/rng.hpp"

namespace psgi {

struct TaskBudgets {
  int episode_steps = 50;
  int adaptation_steps = 1000;
  int test_horizon = 50;
};

/// Minimum option executions from the empty completion, per ground subtask.
/// nullopt means unreachable. `approximate` is set when the exact search hit
/// its state cap and some values come from the relaxed plan.
struct CriticalPaths {
  std::vector<std::optional<int>> length;
  bool approximate = false;
  std::size_t states_explored = 0;
};

/// One sampled MDP: entities, ground subtasks/options, ground-truth graph,
/// the rewarded subtask and budgets. Immutable once built.
struct TaskInstance {
  std::string domain;
  std::vector<EntityId> entities;
  GroundSpace space;
  ParamGraph truth;
  std::shared_ptr<const AttributeTruth> attributes;
  CompiledGraph truth_model;
  std::size_t reward_subtask = 0;
  double reward_magnitude = 1.0;
  TaskBudgets budgets;
  CriticalPaths critical_paths;

  std::size_t num_subtasks() const noexcept { return space.num_subtasks(); }
  std::size_t num_options() const noexcept { return space.num_options(); }
  AttributeLookup truth_lookup() const { return psgi::truth_lookup(attributes); }
};

inline constexpr std::size_t kCriticalPathStateCap = 200000;

namespace detail {

// Ordered tuples of distinct entities of the given length, lexicographic.
inline void enumerate_bindings(const std::vector<EntityId>& entities, int arity, std::vector<EntityId>& cur,
                               std::vector<bool>& used, std::vector<std::vector<EntityId>>& out) {
  if (static_cast<int>(cur.size()) == arity) {
    out.push_back(cur);
    return;
  }
  for (std::size_t i = 0; i < entities.size(); ++i) {
    if (used[i]) continue;
    used[i] = true;
    cur.push_back(entities[i]);
    enumerate_bindings(entities, arity, cur, used, out);
    cur.pop_back();
    used[i] = false;
  }
}

inline std::vector<GroundItem> instantiate(const DomainConfig& cfg, const VerbSignature& sig,
                                           const SlotFilters& filters, const std::vector<EntityId>& entities) {
  std::vector<std::vector<EntityId>> bindings;
  std::vector<EntityId> cur;
  std::vector<bool> used(entities.size(), false);
  enumerate_bindings(entities, sig.arity, cur, used, bindings);
  std::vector<GroundItem> out;
  for (auto& b : bindings) {
    bool ok = true;
    for (int s = 1; s <= sig.arity && ok; ++s) ok = cfg.passes(filters, s, b[static_cast<std::size_t>(s) - 1]);
    if (ok) out.push_back(GroundItem{sig, std::move(b)});
  }
  return out;
}

}  // namespace detail

/// Delete-relaxed plan length (FF-style extraction) for every subtask from
/// `x0`. A negative literal counts as satisfiable when its subtask starts
/// false or some option can clear it.
inline std::vector<std::optional<int>> relaxed_plan_lengths(const CompiledGraph& g, const Bits& x0) {
  const std::size_t n = g.num_subtasks;
  const std::size_t m = g.options.size();
  constexpr int kInf = std::numeric_limits<int>::max();
  std::vector<bool> clearable(n, false);
  for (const auto& o : g.options)
    for (const auto& ef : o.effects)
      if (ef.sign < 0) clearable[ef.subtask] = true;

  std::vector<int> fact_level(n, kInf);
  for (std::size_t s = 0; s < n; ++s)
    if (x0.test(s)) fact_level[s] = 0;
  std::vector<int> option_level(m, kInf);
  std::vector<int> option_term(m, -1);

  auto term_level = [&](const std::vector<GroundLiteral>& t) {
    int lvl = 0;
    for (const auto& l : t) {
      if (l.positive) {
        lvl = std::max(lvl, fact_level[l.subtask]);
      } else if (x0.test(l.subtask) && !clearable[l.subtask]) {
        return kInf;
      }
      if (lvl == kInf) return kInf;
    }
    return lvl;
  };

  for (int layer = 0;; ++layer) {
    bool changed = false;
    for (std::size_t o = 0; o < m; ++o) {
      if (option_level[o] != kInf) continue;
      const auto& terms = g.options[o].precondition.terms;
      for (std::size_t t = 0; t < terms.size(); ++t) {
        if (term_level(terms[t]) <= layer) {
          option_level[o] = layer;
          option_term[o] = static_cast<int>(t);
          break;
        }
      }
    }
    for (std::size_t o = 0; o < m; ++o) {
      if (option_level[o] != layer) continue;
      for (const auto& ef : g.options[o].effects)
        if (ef.sign > 0 && fact_level[ef.subtask] == kInf) {
          fact_level[ef.subtask] = layer + 1;
          changed = true;
        }
    }
    if (!changed) {
      bool pending = false;
      for (std::size_t o = 0; o < m; ++o)
        if (option_level[o] == kInf) {
          for (const auto& t : g.options[o].precondition.terms)
            if (term_level(t) != kInf) pending = true;
        }
      if (!pending) break;
    }
    if (layer > static_cast<int>(n + m + 1)) break;
  }

  std::vector<std::optional<int>> out(n);
  for (std::size_t target = 0; target < n; ++target) {
    if (fact_level[target] == kInf) continue;
    std::set<std::size_t> chosen;
    std::vector<std::size_t> goals{target};
    std::set<std::size_t> achieved;
    while (!goals.empty()) {
      const std::size_t goal = goals.back();
      goals.pop_back();
      if (fact_level[goal] == 0 || achieved.count(goal)) continue;
      achieved.insert(goal);
      // Earliest achiever, lowest index.
      std::size_t best = m;
      for (std::size_t o = 0; o < m; ++o) {
        if (option_level[o] != fact_level[goal] - 1) continue;
        for (const auto& ef : g.options[o].effects)
          if (ef.subtask == goal && ef.sign > 0) {
            best = o;
            break;
          }
        if (best != m) break;
      }
      if (best == m) continue;
      if (chosen.insert(best).second) {
        for (const auto& l : g.options[best].precondition.terms[static_cast<std::size_t>(option_term[best])])
          if (l.positive) goals.push_back(l.subtask);
      }
    }
    out[target] = static_cast<int>(chosen.size());
  }
  return out;
}

/// Breadth-first search over completion vectors from the empty completion,
/// recording the depth at which each subtask first becomes complete. Past
/// `state_cap` states the remaining subtasks fall back to the relaxed plan.
inline CriticalPaths compute_critical_paths(const CompiledGraph& g, std::size_t state_cap = kCriticalPathStateCap) {
  const std::size_t n = g.num_subtasks;
  CriticalPaths cp;
  cp.length.assign(n, std::nullopt);
  const Bits start(n);
  std::unordered_set<Bits, BitsHash> visited{start};
  std::vector<Bits> frontier{start};
  std::size_t found = 0;
  int depth = 0;
  bool capped = false;
  while (!frontier.empty() && found < n && !capped) {
    std::vector<Bits> next;
    for (const auto& x : frontier) {
      for (std::size_t o = 0; o < g.options.size(); ++o) {
        if (!g.eligible(o, x)) continue;
        Bits y = g.apply(o, x);
        if (!visited.insert(y).second) continue;
        for (const auto& ef : g.options[o].effects) {
          const auto s = ef.subtask;
          if (y.test(s) && !cp.length[s]) {
            cp.length[s] = depth + 1;
            ++found;
          }
        }
        if (visited.size() >= state_cap) {
          capped = true;
          break;
        }
        next.push_back(std::move(y));
      }
      if (capped) break;
    }
    frontier = std::move(next);
    ++depth;
  }
  cp.states_explored = visited.size();
  if (capped) {
    cp.approximate = true;
    const auto relaxed = relaxed_plan_lengths(g, start);
    for (std::size_t s = 0; s < n; ++s)
      if (!cp.length[s] && relaxed[s]) cp.length[s] = std::max(*relaxed[s], depth);
  }
  return cp;
}

inline std::optional<int> critical_path_length(const TaskInstance& task, std::size_t subtask) {
  return task.critical_paths.length.at(subtask);
}

/// Uniform choice among the subtasks with the largest finite critical path.
inline std::size_t assign_reward(const CriticalPaths& cp, std::uint64_t seed) {
  int best = -1;
  std::vector<std::size_t> argmax;
  for (std::size_t s = 0; s < cp.length.size(); ++s) {
    if (!cp.length[s]) continue;
    if (*cp.length[s] > best) {
      best = *cp.length[s];
      argmax.clear();
    }
    if (*cp.length[s] == best) argmax.push_back(s);
  }
  if (argmax.empty()) throw Error(ErrorCode::NoReachableSubtask, "every subtask is unreachable");
  Rng rng(seed);
  return argmax[rng.uniform_index(argmax.size())];
}

inline std::size_t assign_reward(const TaskInstance& task, std::uint64_t seed) {
  return assign_reward(task.critical_paths, seed);
}

inline void set_reward(TaskInstance& task, std::size_t subtask) {
  task.reward_subtask = subtask;
  task.truth.rewards.clear();
  task.truth.rewards[task.space.subtasks().at(subtask)] = RewardEstimate{task.reward_magnitude, 1};
  task.truth_model.rewards.assign(task.num_subtasks(), RewardEstimate{});
  task.truth_model.rewards[subtask] = RewardEstimate{task.reward_magnitude, 1};
}

/// Builds the task over an explicit entity set: grounds every template whose
/// slot filters pass, installs the config's expressions verbatim as the
/// ground-truth graph, and places the reward on a largest-critical-path
/// subtask chosen with `seed`.
inline TaskInstance make_task(const DomainConfig& cfg, std::vector<EntityId> entities, std::uint64_t seed) {
  std::sort(entities.begin(), entities.end());
  std::vector<GroundItem> subtasks;
  for (const auto& t : cfg.subtasks) {
    auto items = detail::instantiate(cfg, t.sig, t.filters, entities);
    subtasks.insert(subtasks.end(), items.begin(), items.end());
  }
  std::vector<GroundItem> options;
  for (const auto& t : cfg.options) {
    auto items = detail::instantiate(cfg, t.sig, t.filters, entities);
    options.insert(options.end(), items.begin(), items.end());
  }
  TaskInstance task;
  task.domain = cfg.name;
  task.entities = entities;
  task.space = GroundSpace(entities, std::move(subtasks), std::move(options));
  task.truth.provenance = Provenance::GroundTruth;
  for (const auto& t : cfg.options) task.truth.options[t.sig] = OptionModel{t.precondition, t.effect};
  task.attributes = std::make_shared<const AttributeTruth>(cfg.truth());
  task.truth_model = compile_graph(task.truth, task.space, task.truth_lookup());
  task.reward_magnitude = cfg.reward.magnitude;
  task.budgets = TaskBudgets{cfg.task.episode_steps, cfg.task.adaptation_steps, cfg.task.test_horizon};
  task.critical_paths = compute_critical_paths(task.truth_model);
  set_reward(task, assign_reward(task.critical_paths, derive_seed(seed, 0x7e3a)));
  return task;
}

/// Uniform sample without replacement of `entities_per_task` entities from
/// the pool, then make_task. Deterministic in `seed`.
inline TaskInstance sample_task(const DomainConfig& cfg, Pool pool, std::uint64_t seed) {
  std::vector<EntityId> candidates = cfg.pool(pool);
  const auto k = static_cast<std::size_t>(cfg.task.entities_per_task);
  if (k > candidates.size())
    throw Error(ErrorCode::PoolTooSmall, std::string(to_string(pool)) + " pool has " +
                                             std::to_string(candidates.size()) + " entities, need " +
                                             std::to_string(k));
  Rng rng(derive_seed(seed, 0x5a3b));
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_index(candidates.size() - i);
    std::swap(candidates[i], candidates[j]);
  }
  candidates.resize(k);
  return make_task(cfg, std::move(candidates), seed);
}

}  // namespace psgi
