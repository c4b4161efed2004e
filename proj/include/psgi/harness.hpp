#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>

#include "psgi/dot.hpp"
#include "psgi/embeddings.hpp"
#include "psgi/graph_error.hpp"
#include "psgi/infer.hpp"
#include "psgi/log.hpp"
#include "psgi/policy.hpp"

namespace psgi {

enum class Agent : std::uint8_t { PSGI, MSGIPlus, Random };

inline const char* to_string(Agent a) {
  switch (a) {
    case Agent::PSGI: return "psgi";
    case Agent::MSGIPlus: return "msgi";
    case Agent::Random: return "random";
  }
  return "?";
}

inline Agent agent_from_string(const std::string& s) {
  if (s == "psgi") return Agent::PSGI;
  if (s == "msgi") return Agent::MSGIPlus;
  if (s == "random") return Agent::Random;
  throw Error(ErrorCode::ValidationError, "unknown agent '" + s + "' (expected psgi, msgi or random)");
}

struct ExperimentConfig {
  std::string domain_path;
  std::vector<std::uint64_t> seeds{0};
  std::vector<int> budgets{0, 100, 250, 500, 1000, 2000};
  int test_horizon = 0;  // 0: the domain's test_horizon
  int test_episodes = 10;
  std::vector<Agent> agents{Agent::PSGI, Agent::MSGIPlus, Agent::Random};
  std::string out_dir = ".";
  GRPropConfig grprop;
  EnsembleSchedule schedule;
  double embedding_sigma = 0.1;
  std::uint64_t embedding_seed = 0;
  GraphErrorOptions probe;

  void validate() const {
    if (seeds.empty()) throw Error(ErrorCode::ValidationError, "seeds must be nonempty");
    if (!std::is_sorted(budgets.begin(), budgets.end()))
      throw Error(ErrorCode::ValidationError, "budgets must be sorted ascending");
    for (int b : budgets)
      if (b < 0) throw Error(ErrorCode::ValidationError, "budgets must be >= 0");
    if (test_horizon < 0) throw Error(ErrorCode::ValidationError, "test_horizon must be >= 0");
    if (test_episodes < 1) throw Error(ErrorCode::ValidationError, "test_episodes must be >= 1");
    if (agents.empty()) throw Error(ErrorCode::ValidationError, "agents must be nonempty");
    if (embedding_sigma < 0.0) throw Error(ErrorCode::ValidationError, "embedding_sigma must be >= 0");
    grprop.validate();
    schedule.validate();
  }
};

struct CurvePoint {
  std::string domain;
  Agent agent = Agent::Random;
  std::uint64_t seed = 0;
  int adaptation_steps = 0;
  double success_rate = 0.0;
  double avg_return = 0.0;
  double prec_error = 0.0;
  double eff_error = 0.0;
};

// ---------------------------------------------------------------------------
// Rollouts

/// Chooses an option index from the current state.
using ActFn = std::function<std::size_t(const EnvState&)>;

/// Least-executed eligible option; a uniformly random option (a failed
/// step) when nothing is eligible.
struct CountBasedPolicy {
  Rng rng;
  std::vector<std::size_t> counts;

  explicit CountBasedPolicy(std::uint64_t seed) : rng(seed) {}

  std::size_t operator()(const EnvState& s) {
    if (counts.size() < s.e.size()) counts.resize(s.e.size(), 0);
    const std::size_t o = s.e.none() ? rng.uniform_index(s.e.size()) : count_based_adapt(s.e, counts, rng);
    ++counts[o];
    return o;
  }
};

struct RandomPolicy {
  Rng rng;

  explicit RandomPolicy(std::uint64_t seed) : rng(seed) {}

  std::size_t operator()(const EnvState& s) {
    return s.e.none() ? rng.uniform_index(s.e.size()) : random_eligible(s.e, rng);
  }
};

/// Exactly `budget` environment steps across auto-reset episodes.
inline Trajectory run_adaptation(const TaskInstance& task, const ActFn& policy, int budget) {
  if (budget < 0) throw Error(ErrorCode::InvalidArgument, "budget must be >= 0");
  Trajectory traj;
  EnvState state = reset(task, Phase::Adaptation);
  state.step_phase = budget;
  traj.records.reserve(static_cast<std::size_t>(budget));
  for (int t = 0; t < budget; ++t) {
    const std::size_t o = policy(state);
    StepResult r = step(task, state, o, Phase::Adaptation);
    traj.records.push_back(TransitionRecord{state.x, state.e, o, r.reward, r.done, r.next_x});
    state = std::move(r.state);
  }
  traj.final_x = state.x;
  traj.final_e = state.e;
  return traj;
}

struct TestResult {
  double ret = 0.0;
  bool success = false;
  int steps = 0;
};

/// One test episode from a fresh reset. `act` receives the state and the
/// step index within the episode.
inline TestResult run_test_phase(const TaskInstance& task, const std::function<std::size_t(const EnvState&, int)>& act,
                                 int horizon) {
  if (horizon <= 0) throw Error(ErrorCode::InvalidArgument, "horizon must be > 0");
  TestResult res;
  EnvState state = reset(task, Phase::Test);
  state.step = horizon;
  for (int t = 0; t < horizon; ++t) {
    const std::size_t o = act(state, t);
    StepResult r = step(task, state, o, Phase::Test);
    res.ret += r.reward;
    res.steps = t + 1;
    state = std::move(r.state);
    if (r.reward > 0.0) res.success = true;
    if (r.done) break;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Meta-training and evaluation

inline std::uint64_t eval_task_seed(std::uint64_t seed) { return derive_seed(seed, 0xe7a1); }
inline std::uint64_t adaptation_seed(std::uint64_t seed) { return derive_seed(seed, 0xada0); }

/// Prior graphs: `n_priors` training tasks, each explored count-based for
/// `t_prior` steps and inferred with candidate attributes over its own
/// entities.
inline std::vector<ParamGraph> meta_train(const DomainConfig& domain, const EmbeddingTable& emb, int n_priors,
                                          int t_prior, std::uint64_t seed) {
  std::vector<ParamGraph> priors;
  for (int i = 0; i < n_priors; ++i) {
    const std::uint64_t s = derive_seed(seed, 0x9a10 + static_cast<std::uint64_t>(i));
    const TaskInstance task = sample_task(domain, Pool::Train, s);
    CountBasedPolicy explore(derive_seed(s, 1));
    const Trajectory traj = run_adaptation(task, std::ref(explore), t_prior);
    const AttributeSet attrs = generate_candidate_attributes(task.entities, emb);
    InferenceDiagnostics diag;
    priors.push_back(infer_psg(traj, task, &attrs, InferenceMode::PSGI, &emb, &diag));
    for (const auto& [name, n] : diag.inconsistent_rows)
      log_event(LogLevel::Info, "inconsistent_table", "prior", i, "table", name, "rows", n);
    log_event(LogLevel::Debug, "prior_trained", "index", i, "t_prior", t_prior);
  }
  return priors;
}

namespace detail {

inline std::vector<CompiledGraph> compile_for(const std::vector<ParamGraph>& graphs, const TaskInstance& task,
                                              const EmbeddingTable& emb) {
  std::vector<CompiledGraph> out;
  out.reserve(graphs.size());
  for (const auto& g : graphs) out.push_back(compile_graph(g, task.space, lookup_for(g, emb, task.truth_lookup())));
  return out;
}

inline ParamGraph empty_graph(const TaskInstance& task, Provenance p) {
  ParamGraph g;
  g.provenance = p;
  for (const auto& sig : task.space.option_signatures()) g.options[sig] = OptionModel{};
  return g;
}

}  // namespace detail

/// One (seed, budget, agent) cell on an already-sampled evaluation task.
inline CurvePoint evaluate_cell(const ExperimentConfig& cfg, const TaskInstance& task, const EmbeddingTable& emb,
                                const std::vector<ParamGraph>& priors, Agent agent, int budget, std::uint64_t seed,
                                const Trajectory* shared_traj = nullptr) {
  CurvePoint pt;
  pt.domain = task.domain;
  pt.agent = agent;
  pt.seed = seed;
  pt.adaptation_steps = budget;
  const int horizon = cfg.test_horizon > 0 ? cfg.test_horizon : task.budgets.test_horizon;

  std::optional<ParamGraph> test_graph;
  std::optional<Trajectory> own_traj;
  if (agent != Agent::Random) {
    if (!shared_traj) {
      CountBasedPolicy explore(adaptation_seed(seed));
      own_traj = run_adaptation(task, std::ref(explore), budget);
      shared_traj = &*own_traj;
    }
    if (agent == Agent::PSGI) {
      const AttributeSet attrs = generate_candidate_attributes(task.entities, emb);
      test_graph = infer_psg(*shared_traj, task, &attrs, InferenceMode::PSGI, &emb);
    } else {
      test_graph = infer_psg(*shared_traj, task, nullptr, InferenceMode::MSGIPlus, &emb);
    }
  }
  const ParamGraph scored =
      test_graph ? *test_graph : detail::empty_graph(task, Provenance::GroundTruth);
  GraphErrorOptions probe = cfg.probe;
  probe.seed = derive_seed(seed, 0x9b0e);
  const GraphError err = semantic_graph_error(scored, task, emb, probe);
  pt.prec_error = err.prec_error;
  pt.eff_error = err.eff_error;

  std::vector<CompiledGraph> prior_models;
  std::vector<const ParamGraph*> prior_ptrs;
  if (agent == Agent::PSGI) {
    prior_models = detail::compile_for(priors, task, emb);
    for (const auto& p : priors) prior_ptrs.push_back(&p);
  }
  std::optional<CompiledGraph> test_model;
  if (test_graph)
    test_model = compile_graph(*test_graph, task.space, lookup_for(*test_graph, emb, task.truth_lookup()));
  const std::vector<double> reward = reward_vector(task, test_graph ? &*test_graph : nullptr, prior_ptrs);

  std::vector<const CompiledGraph*> effect_models;
  if (test_model) effect_models.push_back(&*test_model);
  for (const auto& p : prior_models) effect_models.push_back(&p);

  int successes = 0;
  double total = 0.0;
  for (int ep = 0; ep < cfg.test_episodes; ++ep) {
    Rng rng(derive_seed(derive_seed(seed, 0x7e57 + static_cast<std::uint64_t>(ep)), static_cast<std::uint64_t>(agent)));
    std::function<std::size_t(const EnvState&, int)> act;
    if (agent == Agent::Random) {
      act = [&](const EnvState& s, int) { return s.e.none() ? rng.uniform_index(s.e.size()) : random_eligible(s.e, rng); };
    } else {
      act = [&](const EnvState& s, int t) -> std::size_t {
        if (s.e.none()) return rng.uniform_index(s.e.size());
        return ensemble_select(prior_models, test_model ? &*test_model : nullptr, s.x,
                               drop_predicted_noops(s.e, s.x, effect_models),
                               static_cast<long>(budget) + t, reward, cfg.grprop, cfg.schedule, rng);
      };
    }
    const TestResult r = run_test_phase(task, act, horizon);
    successes += r.success ? 1 : 0;
    total += r.ret;
  }
  pt.success_rate = static_cast<double>(successes) / static_cast<double>(cfg.test_episodes);
  pt.avg_return = total / static_cast<double>(cfg.test_episodes);
  log_event(LogLevel::Info, "cell", "agent", to_string(agent), "seed", seed, "budget", budget, "success",
            pt.success_rate, "prec_error", pt.prec_error, "eff_error", pt.eff_error);
  return pt;
}

inline std::string curve_csv(std::vector<CurvePoint> points) {
  std::stable_sort(points.begin(), points.end(), [](const CurvePoint& a, const CurvePoint& b) {
    const std::string aa = to_string(a.agent), ba = to_string(b.agent);
    if (aa != ba) return aa < ba;
    if (a.adaptation_steps != b.adaptation_steps) return a.adaptation_steps < b.adaptation_steps;
    return a.seed < b.seed;
  });
  std::string out = "domain,agent,seed,adaptation_steps,success_rate,avg_return,prec_error,eff_error\n";
  char buf[256];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%s,%s,%llu,%d,%.6f,%.6f,%.6f,%.6f\n", p.domain.c_str(), to_string(p.agent),
                  static_cast<unsigned long long>(p.seed), p.adaptation_steps, p.success_rate, p.avg_return,
                  p.prec_error, p.eff_error);
    out += buf;
  }
  return out;
}

struct AttributeEval {
  std::vector<EntityId> seen;
  std::vector<EntityId> holdout;
  AttributeAccuracy accuracy;
};

/// Zero-shot attribute generalization on synthetic embeddings: candidates
/// from up to `max_seen` train-pool entities (seeded choice), scored on
/// `holdouts` fresh entities that copy the attribute bits of seen ones.
inline AttributeEval attribute_generalization(const DomainConfig& cfg, double sigma, std::uint64_t seed,
                                              std::size_t holdouts = 20,
                                              std::size_t max_seen = kMaxPowersetEntities) {
  AttributeEval out;
  EmbeddingTable emb = synth_embeddings(cfg, sigma, seed);
  out.seen = cfg.pool(Pool::Train);
  Rng rng(derive_seed(seed, 0x5ee1));
  rng.shuffle(out.seen);
  if (out.seen.size() > max_seen) out.seen.resize(max_seen);
  std::sort(out.seen.begin(), out.seen.end());
  const AttributeSet set = generate_candidate_attributes(out.seen, emb);
  AttributeTruth truth = cfg.truth();
  out.holdout = synth_holdout(cfg, out.seen, holdouts, sigma, seed, emb, truth);
  out.accuracy = attribute_accuracy(set, truth, out.holdout, emb);
  return out;
}

inline json trajectory_to_json(const Trajectory& traj) {
  json recs = json::array();
  for (const auto& r : traj.records)
    recs.push_back(json{{"x", r.x.str()}, {"e", r.e.str()}, {"option", r.option}, {"reward", r.reward},
                        {"done", r.done}, {"next_x", r.next_x.str()}});
  return json{{"records", recs}, {"final_x", traj.final_x.str()}, {"final_e", traj.final_e.str()}};
}

/// Inverse of trajectory_to_json; bitvector widths are checked against `task`.
inline Trajectory trajectory_from_json(const json& j, const TaskInstance& task) {
  auto bits = [&](const json& v, std::size_t n, const std::string& where) {
    const std::string s = detail::as_string(v, where);
    if (s.size() != n || s.find_first_not_of("01") != std::string::npos)
      throw Error(ErrorCode::ParseError, where + ": expected " + std::to_string(n) + " bits");
    return Bits::from_string(s);
  };
  const std::size_t n = task.num_subtasks(), m = task.num_options();
  Trajectory traj;
  const json& recs = detail::require(j, "records", "trajectory");
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const std::string w = "trajectory.records[" + std::to_string(i) + "]";
    const json& r = recs[i];
    TransitionRecord rec;
    rec.x = bits(detail::require(r, "x", w), n, w + ".x");
    rec.e = bits(detail::require(r, "e", w), m, w + ".e");
    rec.option = detail::require(r, "option", w).get<std::size_t>();
    if (rec.option >= m) throw Error(ErrorCode::ParseError, w + ".option out of range");
    rec.reward = detail::require(r, "reward", w).get<double>();
    rec.done = detail::require(r, "done", w).get<bool>();
    rec.next_x = bits(detail::require(r, "next_x", w), n, w + ".next_x");
    traj.records.push_back(std::move(rec));
  }
  traj.final_x = bits(detail::require(j, "final_x", "trajectory"), n, "trajectory.final_x");
  traj.final_e = bits(detail::require(j, "final_e", "trajectory"), m, "trajectory.final_e");
  return traj;
}

/// Supplies the prior graphs for one seed.
using PriorSource = std::function<std::vector<ParamGraph>(std::uint64_t seed)>;

/// Every seed x budget x agent cell. The evaluation task is drawn from the
/// eval pool once per seed; PSGI and MSGI+ share the count-based adaptation
/// trajectory of each budget. Writes curve.csv to `cfg.out_dir` when it is
/// nonempty; cells finished before a failure are still written.
inline std::vector<CurvePoint> meta_eval(const ExperimentConfig& cfg, const DomainConfig& domain,
                                         const EmbeddingTable& emb, const PriorSource& priors_for) {
  cfg.validate();
  std::vector<CurvePoint> points;
  auto flush = [&] {
    if (cfg.out_dir.empty()) return;
    std::filesystem::create_directories(cfg.out_dir);
    write_text_file((std::filesystem::path(cfg.out_dir) / "curve.csv").string(), curve_csv(points));
  };
  try {
    for (auto seed : cfg.seeds) {
      const TaskInstance task = sample_task(domain, Pool::Eval, eval_task_seed(seed));
      const bool needs_priors = std::find(cfg.agents.begin(), cfg.agents.end(), Agent::PSGI) != cfg.agents.end();
      const std::vector<ParamGraph> priors = needs_priors && priors_for ? priors_for(seed) : std::vector<ParamGraph>{};
      for (int budget : cfg.budgets) {
        CountBasedPolicy explore(adaptation_seed(seed));
        const Trajectory traj = run_adaptation(task, std::ref(explore), budget);
        for (Agent a : cfg.agents) points.push_back(evaluate_cell(cfg, task, emb, priors, a, budget, seed, &traj));
      }
    }
  } catch (...) {
    flush();
    throw;
  }
  flush();
  return points;
}

/// Prior source that meta-trains afresh for each seed.
inline PriorSource trained_priors(const DomainConfig& domain, const EmbeddingTable& emb, const EnsembleSchedule& s) {
  return [&domain, &emb, s](std::uint64_t seed) { return meta_train(domain, emb, s.n_priors, s.t_prior, seed); };
}

}  // namespace psgi
