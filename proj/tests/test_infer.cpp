#include <gtest/gtest.h>

#include "support.hpp"

using namespace psgi;
using namespace psgi::testing;

namespace {

PrecondTable table(std::vector<std::string> rows, std::vector<int> labels, std::vector<std::size_t> mult = {}) {
  PrecondTable t;
  t.sig = VerbSignature{"t", 0};
  for (std::size_t i = 0; i < rows[0].size(); ++i) t.features.push_back(feature(static_cast<int>(i)));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    t.rows.push_back(Bits::from_string(rows[r]));
    t.labels.push_back(static_cast<char>(labels[r]));
    t.multiplicity.push_back(mult.empty() ? 1 : mult[r]);
  }
  return t;
}

struct ToyCookFixture : ::testing::Test {
  TaskInstance task = toycook_task();
  EmbeddingTable emb = synth_embeddings(toycook_domain(), 0.0, 0);
  Trajectory traj = count_based_rollout(task, 50, 0);
  AttributeSet attrs = generate_candidate_attributes(task.entities, emb);
};

}  // namespace

TEST_F(ToyCookFixture, RolloutVisitsEveryReachableOption) {
  std::set<std::size_t> executed;
  for (const auto& r : traj.records)
    if (r.e.test(r.option)) executed.insert(r.option);
  // E(e0) needs B(e0), and collecting B(e0) ends the episode.
  EXPECT_FALSE(executed.count(option_index(task, "E(e0)")));
  for (const char* o : {"C(e0)", "C(e1)", "D(e0)"}) EXPECT_TRUE(executed.count(option_index(task, o))) << o;
}

TEST_F(ToyCookFixture, PreconditionTableColumns) {
  const PrecondTable t = build_precondition_table(traj, task, VerbSignature{"D", 1}, &attrs, &emb);
  ASSERT_EQ(t.features.size(), 3u);
  EXPECT_EQ(t.features[0].str(), "A(p1)");
  EXPECT_EQ(t.features[1].str(), "B(p1)");
  EXPECT_EQ(t.features[2].str(), "attr_0(p1)");
  EXPECT_EQ(t.inconsistencies, 0u);
  // Every row is labelled by A(p1) and the f-indicator candidate ({e0}).
  for (std::size_t r = 0; r < t.size(); ++r) EXPECT_EQ(t.labels[r], t.rows[r].test(0) && t.rows[r].test(2)) << r;
  std::size_t total = 0;
  for (auto m : t.multiplicity) total += m;
  // Two ground options of D/1 per observed (x, e), records plus final state.
  EXPECT_EQ(total, 2 * (traj.size() + 1));
}

TEST_F(ToyCookFixture, PreconditionTableWithoutAttributes) {
  const PrecondTable t = build_precondition_table(traj, task, VerbSignature{"D", 1}, nullptr);
  ASSERT_EQ(t.features.size(), 2u);
  // f cannot be expressed: (A=1, B=0) occurs eligible for e0, ineligible for e1.
  EXPECT_GT(t.inconsistencies, 0u);
}

TEST_F(ToyCookFixture, GroundTableAlignsWithSubtasks) {
  const std::size_t d0 = option_index(task, "D(e0)");
  const PrecondTable t = build_ground_option_table(traj, task, d0);
  ASSERT_EQ(t.features.size(), 4u);
  EXPECT_EQ(t.features[0].str(), "A(e0)");
  EXPECT_EQ(t.features[2].str(), "B(e0)");
  for (std::size_t r = 0; r < t.size(); ++r) EXPECT_EQ(t.labels[r], t.rows[r].test(0));
}

TEST_F(ToyCookFixture, PsgiRecoversGraph) {
  const ParamGraph g = infer_psg(traj, task, &attrs, InferenceMode::PSGI, &emb);
  EXPECT_EQ(g.provenance, Provenance::InferredPSGI);
  const GraphError err = semantic_graph_error(g, task, emb);
  EXPECT_EQ(err.prec_error, 0.0);
  EXPECT_EQ(err.eff_error, 0.0);
  EXPECT_TRUE(err.exhaustive);
  EXPECT_EQ(g.options.at(VerbSignature{"C", 1}).precondition, Expr::truth());
  EXPECT_TRUE(g.options.at(VerbSignature{"E", 1}).precondition.is_false());
  EXPECT_TRUE(equivalent_by_truth_table(g.options.at(VerbSignature{"D", 1}).precondition,
                                        Expr::all_of({Expr::literal(sub("A")), Expr::literal(attr("attr_0"))})));
  ASSERT_TRUE(g.attributes.has_value());
  EXPECT_EQ(g.attributes->size(), 1u);
}

TEST_F(ToyCookFixture, MsgiFitsEveryGroundOption) {
  const ParamGraph g = infer_psg(traj, task, nullptr, InferenceMode::MSGIPlus, &emb);
  EXPECT_EQ(g.provenance, Provenance::InferredMSGI);
  EXPECT_EQ(g.ground_options.size(), 6u);
  const GroundItem d1{VerbSignature{"D", 1}, {"e1"}};
  EXPECT_TRUE(g.ground_options.at(d1).precondition.is_false());
  EXPECT_TRUE(g.ground_options.at(d1).effect.empty());
  const GroundItem d0{VerbSignature{"D", 1}, {"e0"}};
  const Expr a0 = Expr::literal(FeaturePattern::completion(VerbSignature{"A", 1}, {Arg::constant("e0")}));
  EXPECT_EQ(to_dnf(g.ground_options.at(d0).precondition), to_dnf(a0)) << g.ground_options.at(d0).precondition.str();
  const GraphError err = semantic_graph_error(g, task, emb);
  EXPECT_EQ(err.prec_error, 0.0);
  EXPECT_EQ(err.eff_error, 0.0);
}

TEST_F(ToyCookFixture, Effects) {
  const EffectDelta d = infer_effects(traj, task, VerbSignature{"D", 1});
  EXPECT_EQ(d, (EffectDelta{EffectEntry{sub("B"), +1}}));
  const EffectDelta e = infer_effects(traj, task, VerbSignature{"E", 1});
  EXPECT_TRUE(e.empty());
  const EffectDelta c = infer_effects(traj, task, VerbSignature{"C", 1});
  EXPECT_EQ(c, (EffectDelta{EffectEntry{sub("A"), +1}}));
}

TEST_F(ToyCookFixture, EffectsIgnoreRecordOrder) {
  Trajectory shuffled = traj;
  Rng rng(3);
  rng.shuffle(shuffled.records);
  for (const char* v : {"C", "D", "E"})
    EXPECT_EQ(infer_effects(traj, task, VerbSignature{v, 1}), infer_effects(shuffled, task, VerbSignature{v, 1}));
  const ParamGraph a = infer_psg(traj, task, &attrs, InferenceMode::PSGI, &emb);
  const ParamGraph b = infer_psg(shuffled, task, &attrs, InferenceMode::PSGI, &emb);
  EXPECT_EQ(graph_to_json(a).dump(), graph_to_json(b).dump());
}

TEST(Effects, ConflictingObservationsAreDropped) {
  const TaskInstance task = toycook_task();
  const std::size_t c0 = option_index(task, "C(e0)");
  Trajectory traj;
  Bits e(task.num_options());
  e.set(c0);
  traj.records.push_back({bits_of(task, {}), e, c0, 0.0, false, bits_of(task, {"A(e0)"})});
  traj.records.push_back({bits_of(task, {"A(e0)"}), e, c0, 0.0, false, bits_of(task, {})});
  std::vector<std::string> conflicts;
  EXPECT_TRUE(infer_effects(traj, task, VerbSignature{"C", 1}, &conflicts).empty());
  EXPECT_EQ(conflicts, (std::vector<std::string>{"A(p1)"}));
}

TEST_F(ToyCookFixture, Rewards) {
  const auto r = infer_rewards(traj, task);
  const std::size_t b0 = subtask_index(task, "B(e0)");
  ASSERT_GT(r[b0].count, 0u);
  EXPECT_DOUBLE_EQ(r[b0].mean, 1.0);
  EXPECT_GT(r[subtask_index(task, "A(e0)")].count, 0u);
  EXPECT_DOUBLE_EQ(r[subtask_index(task, "A(e0)")].mean, 0.0);
  EXPECT_EQ(r[subtask_index(task, "B(e1)")].count, 0u);
}

TEST(Infer, EmptyTrajectoryGivesFalsePreconditions) {
  const TaskInstance task = toycook_task();
  const ParamGraph g = infer_psg(Trajectory{}, task, nullptr, InferenceMode::PSGI);
  for (const auto& [sig, m] : g.options) {
    EXPECT_TRUE(m.precondition.is_false()) << sig.str();
    EXPECT_TRUE(m.effect.empty());
  }
  EXPECT_TRUE(g.rewards.empty());
}

TEST(Tree, PureTableIsLeaf) {
  const DecisionTree t = fit_decision_tree(table({"00", "01", "11"}, {0, 0, 0}));
  EXPECT_EQ(t.nodes.size(), 1u);
  EXPECT_TRUE(tree_to_expr(t).is_false());
  const DecisionTree u = fit_decision_tree(table({"00", "01"}, {1, 1}));
  EXPECT_TRUE(tree_to_expr(u).is_true());
}

TEST(Tree, ContradictoryRowsTakeWeightedMajority) {
  EXPECT_TRUE(tree_to_expr(fit_decision_tree(table({"1", "1"}, {0, 1}, {2, 1}))).is_false());
  EXPECT_TRUE(tree_to_expr(fit_decision_tree(table({"1", "1"}, {0, 1}, {1, 2}))).is_true());
  // Ties go to false.
  EXPECT_TRUE(tree_to_expr(fit_decision_tree(table({"1", "1"}, {0, 1}, {1, 1}))).is_false());
}

TEST(Tree, SingleFeature) {
  const Expr e = tree_to_expr(fit_decision_tree(table({"10", "11", "00", "01"}, {0, 0, 1, 1})));
  EXPECT_EQ(to_dnf(e), to_dnf(Expr::literal(feature(0), false))) << e.str();
}

TEST(Tree, EmptyTableThrows) {
  PrecondTable t;
  try {
    fit_decision_tree(t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyTable);
  }
  EXPECT_TRUE(infer_precondition(t).is_false());
}

TEST(Tree, XorNeedsZeroGainSplit) {
  const PrecondTable t = table({"00", "01", "10", "11"}, {0, 1, 1, 0});
  const Expr e = tree_to_expr(fit_decision_tree(t));
  EXPECT_TRUE(expr_reproduces_table(e, t));
}

TEST(Tree, RandomConsistentTablesAreReproduced) {
  Rng rng(2024);
  for (int i = 0; i < 200; ++i) {
    const int n = 2 + static_cast<int>(rng.uniform_index(9));
    const PrecondTable t = random_table(rng, n, 5 + rng.uniform_index(60));
    const DecisionTree tree = fit_decision_tree(t);
    const Expr e = tree_to_expr(tree);
    ASSERT_TRUE(expr_reproduces_table(e, t)) << "table " << i << " -> " << e.str();
    // The extracted expression agrees with the tree on every assignment.
    for (std::uint64_t m = 0; m < (1ULL << n); ++m) {
      Bits row(static_cast<std::size_t>(n));
      for (int f = 0; f < n; ++f)
        if ((m >> f) & 1ULL) row.set(static_cast<std::size_t>(f));
      const bool v = evaluate(e, [&](const FeaturePattern& p) {
        return row.test(static_cast<std::size_t>(std::stoi(p.subtask.verb.substr(1))));
      });
      ASSERT_EQ(v, tree.predict(row)) << "table " << i;
    }
  }
}

// With exact attributes every table is consistent, so the inferred graph
// reproduces every observed eligibility vector and every executed
// transition of the trajectory.
TEST(Infer, ReproducesTrajectoryOnRandomDomains) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const DomainConfig d = random_domain(seed);
    const TaskInstance task = sample_task(d, Pool::Train, seed);
    const EmbeddingTable emb = synth_embeddings(d, 0.0, seed);
    const AttributeSet attrs = generate_candidate_attributes(task.entities, emb);
    const Trajectory traj = count_based_rollout(task, 120, seed);
    InferenceDiagnostics diag;
    for (InferenceMode mode : {InferenceMode::PSGI, InferenceMode::MSGIPlus}) {
      const ParamGraph g = infer_psg(traj, task, mode == InferenceMode::PSGI ? &attrs : nullptr, mode, &emb, &diag);
      EXPECT_TRUE(diag.inconsistent_rows.empty()) << seed;
      EXPECT_TRUE(diag.effect_conflicts.empty()) << seed;
      const CompiledGraph model = compile_graph(g, task.space, lookup_for(g, emb, task.truth_lookup()));
      for (const auto& r : traj.records) {
        ASSERT_EQ(model.eligibility(r.x), r.e) << "seed " << seed << " mode " << to_string(mode);
        if (r.e.test(r.option)) {
          ASSERT_EQ(model.apply(r.option, r.x), r.next_x) << "seed " << seed;
        }
      }
      EXPECT_EQ(model.eligibility(traj.final_x), traj.final_e);
    }
  }
}

TEST(Infer, PsgiSharesAcrossBindings) {
  // Executing C on e0 alone is enough for PSGI to predict C(e1)'s effect.
  const TaskInstance task = toycook_task();
  const std::size_t c0 = option_index(task, "C(e0)");
  const Bits x0 = bits_of(task, {});
  Trajectory traj;
  traj.records.push_back({x0, compute_eligibility(task, x0), c0, 0.0, false, bits_of(task, {"A(e0)"})});
  traj.final_x = bits_of(task, {"A(e0)"});
  traj.final_e = compute_eligibility(task, traj.final_x);
  const ParamGraph psgi = infer_psg(traj, task, nullptr, InferenceMode::PSGI);
  const ParamGraph msgi = infer_psg(traj, task, nullptr, InferenceMode::MSGIPlus);
  const auto& space = task.space;
  const std::size_t c1 = option_index(task, "C(e1)");
  EXPECT_EQ(apply_effect(psgi, space, c1, x0), bits_of(task, {"A(e1)"}));
  EXPECT_EQ(apply_effect(msgi, space, c1, x0), x0);
}
