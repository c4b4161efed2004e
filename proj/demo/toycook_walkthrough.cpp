// ToyCook end to end: explore, infer the graph, compare with the truth,
// then act on the inferred graph.
#include <cstdio>
#include <iostream>

#include "psgi/psgi.hpp"

using namespace psgi;

int main(int argc, char** argv) {
  const std::string path = argc > 1 ? argv[1] : PSGI_DOMAIN_DIR "/toycook.domain.json";
  const DomainConfig domain = load_domain(path);
  const TaskInstance task = sample_task(domain, Pool::Train, 1);
  std::printf("task: %zu subtasks, %zu options, reward on %s\n", task.num_subtasks(), task.num_options(),
              task.space.subtasks()[task.reward_subtask].str().c_str());

  CountBasedPolicy explore(7);
  const Trajectory traj = run_adaptation(task, std::ref(explore), 50);

  const EmbeddingTable emb = synth_embeddings(domain, 0.0, 0);
  const AttributeSet attrs = generate_candidate_attributes(task.entities, emb);
  std::cout << "candidate attributes:\n" << dump_candidates(attrs);

  const ParamGraph g = infer_psg(traj, task, &attrs, InferenceMode::PSGI, &emb);
  for (const auto& [sig, m] : g.options) std::printf("  %-4s <- %s\n", sig.str().c_str(), m.precondition.str().c_str());

  const GraphError err = semantic_graph_error(g, task, emb);
  std::printf("prec_error=%.4f eff_error=%.4f over %zu probes\n", err.prec_error, err.eff_error, err.probes);

  const CompiledGraph model = compile_graph(g, task.space, lookup_for(g, emb, task.truth_lookup()));
  const auto reward = reward_vector(task, &g, {});
  Rng rng(3);
  GRPropConfig cfg;
  const TestResult r = run_test_phase(
      task, [&](const EnvState& s, int) { return grprop_select(grprop_scores(model, s.x, reward, cfg), s.e, cfg.temperature, rng); },
      task.budgets.test_horizon);
  std::printf("test episode: success=%d return=%.1f\n", r.success ? 1 : 0, r.ret);

  std::cout << export_dot(g);
}
