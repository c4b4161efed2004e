#include <cstdio>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "psgi/psgi.hpp"

namespace fs = std::filesystem;
using namespace psgi;

namespace {

struct Globals {
  std::string domain;
  std::uint64_t seed = 0;
  std::string out;
  std::string mode;
  std::string embeddings;
  double sigma = 0.1;
  GRPropConfig grprop;
  EnsembleSchedule schedule;
};

struct Loaded {
  DomainConfig domain;
  EmbeddingTable emb;
};

Loaded load(const Globals& g) {
  if (g.domain.empty()) throw Error(ErrorCode::ValidationError, "--domain is required");
  g.grprop.validate();
  g.schedule.validate();
  Loaded l{load_domain(g.domain), {}};
  if (g.embeddings.empty()) {
    l.emb = synth_embeddings(l.domain, g.sigma, g.seed);
  } else {
    std::vector<EntityId> ids;
    for (const auto& e : l.domain.entities) ids.push_back(e.id);
    l.emb = ingest_embeddings(g.embeddings, ids);
  }
  return l;
}

Pool parse_pool(const std::string& s) {
  if (s == "train") return Pool::Train;
  if (s == "eval") return Pool::Eval;
  throw Error(ErrorCode::ValidationError, "unknown pool '" + s + "' (expected train or eval)");
}

// Writes to <out>/<name> when --out is set, else to stdout.
void emit(const Globals& g, const std::string& name, const std::string& text) {
  if (g.out.empty()) {
    std::cout << text;
    return;
  }
  fs::create_directories(g.out);
  const std::string path = (fs::path(g.out) / name).string();
  write_text_file(path, text);
  std::cout << path << "\n";
}

json task_to_json(const TaskInstance& t, std::uint64_t seed, Pool pool) {
  json subs = json::array();
  for (std::size_t s = 0; s < t.num_subtasks(); ++s) {
    const auto cpl = t.critical_paths.length[s];
    subs.push_back(json{{"index", s}, {"name", t.space.subtasks()[s].str()},
                        {"critical_path", cpl ? json(*cpl) : json(nullptr)}});
  }
  json opts = json::array();
  for (std::size_t o = 0; o < t.num_options(); ++o) opts.push_back(t.space.options()[o].str());
  return json{{"domain", t.domain},
              {"seed", seed},
              {"pool", to_string(pool)},
              {"entities", t.entities},
              {"subtasks", subs},
              {"options", opts},
              {"reward_subtask", t.space.subtasks()[t.reward_subtask].str()},
              {"reward_magnitude", t.reward_magnitude},
              {"critical_paths_approximate", t.critical_paths.approximate}};
}

Trajectory adapt(const TaskInstance& task, const std::string& policy, int budget, std::uint64_t seed) {
  if (policy == "count") {
    CountBasedPolicy p(adaptation_seed(seed));
    return run_adaptation(task, std::ref(p), budget);
  }
  if (policy == "random") {
    RandomPolicy p(adaptation_seed(seed));
    return run_adaptation(task, std::ref(p), budget);
  }
  throw Error(ErrorCode::ValidationError, "unknown policy '" + policy + "' (expected count or random)");
}

InferenceMode inference_mode(const std::string& mode) {
  if (mode.empty() || mode == "psgi") return InferenceMode::PSGI;
  if (mode == "msgi") return InferenceMode::MSGIPlus;
  throw Error(ErrorCode::ValidationError, "--mode must be psgi or msgi for inference");
}

std::vector<ParamGraph> load_priors(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("prior_", 0) == 0 && entry.path().extension() == ".json") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorCode::ValidationError, "no prior_*.json files in " + dir);
  std::vector<ParamGraph> priors;
  for (const auto& f : files) priors.push_back(load_graph(f));
  return priors;
}

int run(int argc, char** argv) {
  CLI::App app{"Parameterized subtask graph inference"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--domain", g.domain, "Domain config (JSON)");
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--mode", g.mode, "Agent: psgi, msgi or random")->check(CLI::IsMember({"psgi", "msgi", "random"}));
  app.add_option("--embeddings", g.embeddings, "Embedding file (token v1 ... vD); synthetic when absent");
  app.add_option("--sigma", g.sigma, "Noise of synthetic embeddings");
  app.add_option("--temperature", g.grprop.temperature, "GRProp softmax temperature");
  app.add_option("--w-a", g.grprop.w_a, "GRProp positive-literal weight");
  app.add_option("--beta-a", g.grprop.beta_a, "GRProp AND sharpness");
  app.add_option("--eps-or", g.grprop.eps_or, "GRProp OR max-mixing weight");
  app.add_option("--t-or", g.grprop.t_or, "GRProp OR softmax sharpness");
  app.add_option("--k-iters", g.grprop.k_iters, "GRProp propagation iterations");
  app.add_option("--t-prior", g.schedule.t_prior, "Adaptation steps per prior task");
  app.add_option("--n-priors", g.schedule.n_priors, "Number of prior graphs");
  app.add_option("--t-switch", g.schedule.t_switch, "Steps over which prior weight decays");

  std::string pool_name = "eval";
  std::string policy = "count";
  int budget = -1;

  auto* sample = app.add_subcommand("sample-task", "Sample a task and print its grounding");
  sample->add_option("--pool", pool_name, "Entity pool: train or eval");

  auto* adapt_cmd = app.add_subcommand("adapt", "Run an adaptation phase and write the trajectory");
  adapt_cmd->add_option("--pool", pool_name, "Entity pool: train or eval");
  adapt_cmd->add_option("--budget", budget, "Adaptation steps (default: the domain's)");
  adapt_cmd->add_option("--policy", policy, "Exploration policy: count or random");

  std::string traj_path;
  auto* infer_cmd = app.add_subcommand("infer", "Infer a graph from an adaptation trajectory");
  infer_cmd->add_option("--pool", pool_name, "Entity pool: train or eval");
  infer_cmd->add_option("--budget", budget, "Adaptation steps when no trajectory is given");
  infer_cmd->add_option("--trajectory", traj_path, "Trajectory written by adapt")->check(CLI::ExistingFile);

  auto* train_cmd = app.add_subcommand("meta-train", "Infer prior graphs from training tasks");

  std::vector<int> budgets{0, 100, 250, 500, 1000, 2000};
  int n_seeds = 1;
  int episodes = 10;
  std::string priors_dir;
  auto* eval_cmd = app.add_subcommand("meta-eval", "Adaptation curves on evaluation tasks");
  eval_cmd->add_option("--budgets", budgets, "Adaptation budgets")->delimiter(',');
  eval_cmd->add_option("--n-seeds", n_seeds, "Seeds seed .. seed+n-1")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--episodes", episodes, "Test episodes per cell")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--priors", priors_dir, "Directory of prior_*.json (default: meta-train per seed)")
      ->check(CLI::ExistingDirectory);

  std::size_t holdouts = 20;
  auto* attr_cmd = app.add_subcommand("attr-eval", "Attribute generalization on synthetic embeddings");
  attr_cmd->add_option("--holdouts", holdouts, "Held-out entities");

  std::string graph_path;
  auto* dot_cmd = app.add_subcommand("export-dot", "Render a graph file (default: ground truth) as DOT");
  dot_cmd->add_option("graph", graph_path, "Graph file")->check(CLI::ExistingFile);

  std::string target;
  auto* plan_cmd = app.add_subcommand("plan", "Shortest plan to a subtask under the ground-truth graph");
  plan_cmd->add_option("--pool", pool_name, "Entity pool: train or eval");
  plan_cmd->add_option("--target", target, "Ground subtask, e.g. cooked(yam) (default: the rewarded one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (g.domain.empty() && !(*dot_cmd && !graph_path.empty())) {
    std::cerr << "error: --domain is required\n" << app.help();
    return 1;
  }

  if (*sample) {
    const Loaded l = load(g);
    const Pool pool = parse_pool(pool_name);
    const TaskInstance task = sample_task(l.domain, pool, g.seed);
    emit(g, "task.json", task_to_json(task, g.seed, pool).dump(2) + "\n");
  } else if (*adapt_cmd) {
    const Loaded l = load(g);
    const Pool pool = parse_pool(pool_name);
    const TaskInstance task = sample_task(l.domain, pool, g.seed);
    const int b = budget >= 0 ? budget : task.budgets.adaptation_steps;
    json j = trajectory_to_json(adapt(task, policy, b, g.seed));
    j["domain"] = task.domain;
    j["seed"] = g.seed;
    j["pool"] = to_string(pool);
    emit(g, "trajectory.json", j.dump() + "\n");
  } else if (*infer_cmd) {
    const Loaded l = load(g);
    const InferenceMode mode = inference_mode(g.mode);
    Pool pool = parse_pool(pool_name);
    std::uint64_t seed = g.seed;
    std::optional<json> tj;
    if (!traj_path.empty()) {
      tj = parse_json_text(read_text_file(traj_path), traj_path);
      if (tj->contains("seed")) seed = tj->at("seed").get<std::uint64_t>();
      if (tj->contains("pool")) pool = parse_pool(tj->at("pool").get<std::string>());
    }
    const TaskInstance task = sample_task(l.domain, pool, seed);
    const Trajectory traj = tj ? trajectory_from_json(*tj, task)
                               : adapt(task, "count", budget >= 0 ? budget : task.budgets.adaptation_steps, seed);
    std::optional<AttributeSet> attrs;
    if (mode == InferenceMode::PSGI) attrs = generate_candidate_attributes(task.entities, l.emb);
    InferenceDiagnostics diag;
    const ParamGraph graph = infer_psg(traj, task, attrs ? &*attrs : nullptr, mode, &l.emb, &diag);
    for (const auto& [name, n] : diag.inconsistent_rows)
      log_event(LogLevel::Warn, "inconsistent_table", "table", name, "rows", n);
    GraphErrorOptions probe;
    probe.seed = derive_seed(seed, 0x9b0e);
    const GraphError err = semantic_graph_error(graph, task, l.emb, probe);
    emit(g, "graph.json", graph_to_json(graph).dump(2) + "\n");
    std::fprintf(g.out.empty() ? stderr : stdout, "steps=%zu prec_error=%.6f eff_error=%.6f\n", traj.size(),
                 err.prec_error, err.eff_error);
  } else if (*train_cmd) {
    const Loaded l = load(g);
    const auto priors = meta_train(l.domain, l.emb, g.schedule.n_priors, g.schedule.t_prior, g.seed);
    const std::string dir = g.out.empty() ? "." : g.out;
    fs::create_directories(dir);
    for (std::size_t i = 0; i < priors.size(); ++i) {
      const std::string path = (fs::path(dir) / ("prior_" + std::to_string(i) + ".json")).string();
      save_graph(priors[i], path);
      std::cout << path << "\n";
    }
  } else if (*eval_cmd) {
    const Loaded l = load(g);
    ExperimentConfig cfg;
    cfg.domain_path = g.domain;
    cfg.seeds.clear();
    for (int i = 0; i < n_seeds; ++i) cfg.seeds.push_back(g.seed + static_cast<std::uint64_t>(i));
    cfg.budgets = budgets;
    cfg.test_episodes = episodes;
    if (!g.mode.empty()) cfg.agents = {agent_from_string(g.mode)};
    cfg.out_dir = g.out.empty() ? "." : g.out;
    cfg.grprop = g.grprop;
    cfg.schedule = g.schedule;
    cfg.embedding_sigma = g.sigma;
    cfg.embedding_seed = g.seed;
    cfg.validate();
    PriorSource priors;
    if (!priors_dir.empty()) {
      auto fixed = load_priors(priors_dir);
      priors = [fixed](std::uint64_t) { return fixed; };
    } else {
      priors = trained_priors(l.domain, l.emb, g.schedule);
    }
    meta_eval(cfg, l.domain, l.emb, priors);
    std::cout << (fs::path(cfg.out_dir) / "curve.csv").string() << "\n";
  } else if (*attr_cmd) {
    if (g.domain.empty()) throw Error(ErrorCode::ValidationError, "--domain is required");
    const DomainConfig domain = load_domain(g.domain);
    const AttributeEval r = attribute_generalization(domain, g.sigma, g.seed, holdouts);
    std::string text = "attribute,candidate,negated,seen_agreement,accuracy\n";
    char buf[256];
    for (const auto& m : r.accuracy.per_attribute) {
      std::snprintf(buf, sizeof buf, "%s,%s,%d,%.6f,%.6f\n", m.attribute.c_str(),
                    m.candidate.empty() ? "-" : m.candidate.c_str(), m.negated ? 1 : 0, m.seen_agreement,
                    m.accuracy);
      text += buf;
    }
    std::snprintf(buf, sizeof buf, "mean,,,,%.6f\n", r.accuracy.mean);
    text += buf;
    emit(g, "attributes.csv", text);
  } else if (*dot_cmd) {
    ParamGraph graph;
    if (!graph_path.empty()) {
      graph = load_graph(graph_path);
    } else {
      if (g.domain.empty()) throw Error(ErrorCode::ValidationError, "export-dot needs a graph file or --domain");
      const DomainConfig domain = load_domain(g.domain);
      for (const auto& t : domain.options) graph.options[t.sig] = OptionModel{t.precondition, t.effect};
    }
    emit(g, "graph.dot", export_dot(graph));
  } else if (*plan_cmd) {
    const Loaded l = load(g);
    const TaskInstance task = sample_task(l.domain, parse_pool(pool_name), g.seed);
    std::size_t goal = task.reward_subtask;
    if (!target.empty()) {
      bool found = false;
      for (std::size_t s = 0; s < task.num_subtasks() && !found; ++s)
        if (task.space.subtasks()[s].str() == target) {
          goal = s;
          found = true;
        }
      if (!found) throw Error(ErrorCode::ValidationError, "no ground subtask '" + target + "' in this task");
    }
    const PlanResult plan = exact_plan(task.truth_model, Bits(task.num_subtasks()), goal);
    std::string text = "target " + task.space.subtasks()[goal].str() + "\n";
    if (plan.found()) {
      for (auto o : plan.options) text += task.space.options()[o].str() + "\n";
    } else {
      text += plan.status == PlanStatus::Unreachable ? "unreachable\n" : "search cap reached\n";
    }
    emit(g, "plan.txt", text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::ValidationError:
      case ErrorCode::ParseError:
      case ErrorCode::InvalidArgument:
        return 1;
      default:
        return 2;
    }
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
