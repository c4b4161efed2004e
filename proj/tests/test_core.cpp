#include <gtest/gtest.h>

#include "support.hpp"

using namespace psgi;
using namespace psgi::testing;

namespace {

FeaturePattern A() { return sub("A"); }
FeaturePattern f() { return attr("f"); }

Expr lit(const FeaturePattern& p, bool pos = true) { return Expr::literal(p, pos); }

}  // namespace

TEST(EvalExpr, Constants) {
  EXPECT_TRUE(eval_expr(Expr::truth(), {}));
  EXPECT_FALSE(eval_expr(Expr::falsity(), {}));
}

TEST(EvalExpr, Conjunction) {
  const Expr e = Expr::all_of({lit(A()), lit(f())});
  EXPECT_TRUE(eval_expr(e, {{A(), true}, {f(), true}}));
  EXPECT_FALSE(eval_expr(e, {{A(), true}, {f(), false}}));
}

TEST(EvalExpr, MissingFeatureThrows) {
  const Expr e = Expr::all_of({lit(A()), lit(f())});
  try {
    eval_expr(e, {{f(), true}});
    FAIL() << "expected MissingFeature";
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::MissingFeature);
  }
}

TEST(EvalExpr, NegationPushesThrough) {
  const Expr e = Expr::any_of({lit(A()), lit(f(), false)});
  const Expr n = e.negated();
  for (bool a : {false, true})
    for (bool b : {false, true}) {
      const Assignment as{{A(), a}, {f(), b}};
      EXPECT_NE(eval_expr(e, as), eval_expr(n, as));
    }
}

TEST(GroundEligibility, ToyCookD) {
  const TaskInstance t = toycook_task();
  const Bits x = bits_of(t, {"A(e0)"});
  EXPECT_TRUE(ground_eligibility(t.truth, t.space, option_index(t, "D(e0)"), x, t.truth_lookup()));
  EXPECT_FALSE(ground_eligibility(t.truth, t.space, option_index(t, "D(e1)"), bits_of(t, {"A(e1)"}), t.truth_lookup()));
}

TEST(GroundEligibility, VacuousPrecondition) {
  const TaskInstance t = toycook_task();
  EXPECT_TRUE(ground_eligibility(t.truth, t.space, option_index(t, "C(e1)"), Bits(4), t.truth_lookup()));
}

TEST(GroundEligibility, UnknownSignature) {
  const TaskInstance t = toycook_task();
  ParamGraph g;
  try {
    ground_eligibility(g, t.space, 0, Bits(4), t.truth_lookup());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownSignature);
  }
}

TEST(GroundEligibility, AbsentSubtaskReadsFalse) {
  const TaskInstance t = toycook_task();
  ParamGraph g = t.truth;
  const FeaturePattern ghost = FeaturePattern::completion(VerbSignature{"Z", 1}, {Arg::param(1)});
  g.options[VerbSignature{"C", 1}].precondition = lit(ghost);
  EXPECT_FALSE(ground_eligibility(g, t.space, option_index(t, "C(e0)"), Bits(4), t.truth_lookup()));
  g.options[VerbSignature{"C", 1}].precondition = lit(ghost, false);
  EXPECT_TRUE(ground_eligibility(g, t.space, option_index(t, "C(e0)"), Bits(4), t.truth_lookup()));
  const CompiledGraph cg = compile_graph(g, t.space, t.truth_lookup());
  EXPECT_TRUE(cg.eligible(option_index(t, "C(e0)"), Bits(4)));
}

TEST(GroundEligibility, UnreferencedBitsDoNotMatter) {
  const TaskInstance t = toycook_task();
  const std::size_t d0 = option_index(t, "D(e0)");
  for (unsigned m = 0; m < 16; ++m) {
    Bits x(4);
    for (std::size_t s = 0; s < 4; ++s) x.set(s, (m >> s) & 1U);
    const bool base = ground_eligibility(t.truth, t.space, d0, x, t.truth_lookup());
    for (const char* other : {"A(e1)", "B(e0)", "B(e1)"}) {
      Bits y = x;
      const std::size_t s = subtask_index(t, other);
      y.set(s, !y.test(s));
      EXPECT_EQ(ground_eligibility(t.truth, t.space, d0, y, t.truth_lookup()), base);
    }
  }
}

TEST(ApplyEffect, ToyCook) {
  const TaskInstance t = toycook_task();
  EXPECT_EQ(apply_effect(t.truth, t.space, option_index(t, "C(e0)"), Bits(4)), bits_of(t, {"A(e0)"}));
  EXPECT_EQ(apply_effect(t.truth, t.space, option_index(t, "E(e0)"), bits_of(t, {"A(e0)", "B(e0)"})),
            bits_of(t, {"B(e0)"}));
}

TEST(ApplyEffect, EmptyDeltaIsIdentityAndReapplyIsIdempotent) {
  const TaskInstance t = toycook_task();
  ParamGraph g = t.truth;
  g.options[VerbSignature{"D", 1}].effect.clear();
  const Bits x = bits_of(t, {"A(e0)", "B(e1)"});
  EXPECT_EQ(apply_effect(g, t.space, option_index(t, "D(e0)"), x), x);
  for (std::size_t o = 0; o < t.num_options(); ++o) {
    const Bits once = apply_effect(t.truth, t.space, o, x);
    EXPECT_EQ(apply_effect(t.truth, t.space, o, once), once);
  }
}

TEST(ToDnf, AlreadyDnf) {
  const Expr e = to_dnf(lit(A()));
  ASSERT_EQ(e.op(), Expr::Op::Or);
  ASSERT_EQ(e.children().size(), 1u);
  EXPECT_EQ(e.children()[0].op(), Expr::Op::And);
  EXPECT_EQ(e.children()[0].children()[0], lit(A()));
}

TEST(ToDnf, Distribution) {
  const auto a = feature(0), b = feature(1), c = feature(2);
  const Expr e = to_dnf(Expr::all_of({lit(a), Expr::any_of({lit(b), lit(c)})}));
  const Expr want = Expr::any_of({Expr::all_of({lit(a), lit(b)}), Expr::all_of({lit(a), lit(c)})});
  EXPECT_EQ(e, want);
}

TEST(ToDnf, Absorption) {
  const auto a = feature(0), b = feature(1);
  const Expr e = to_dnf(Expr::any_of({Expr::all_of({lit(a)}), Expr::all_of({lit(a), lit(b)})}));
  EXPECT_EQ(e, Expr::any_of({Expr::all_of({lit(a)})}));
}

TEST(ToDnf, ConstantsAndContradictions) {
  const auto a = feature(0);
  EXPECT_TRUE(to_dnf(Expr::any_of({lit(a), lit(a, false)})).is_true());
  EXPECT_TRUE(to_dnf(Expr::all_of({lit(a), lit(a, false)})).is_false());
}

TEST(ToDnf, CanonicalLiteralOrder) {
  const FeaturePattern s2 = FeaturePattern::completion(VerbSignature{"B", 2}, {Arg::param(2), Arg::param(1)});
  const Expr e = to_dnf(Expr::all_of({lit(f()), lit(s2), lit(A())}));
  const auto& term = e.children()[0].children();
  ASSERT_EQ(term.size(), 3u);
  EXPECT_EQ(term[0].lit().pattern, A());
  EXPECT_EQ(term[1].lit().pattern, s2);
  EXPECT_EQ(term[2].lit().pattern, f());
}

TEST(ToDnf, ExhaustiveEquivalenceUpTo12Features) {
  Rng rng(11);
  for (int i = 0; i < 300; ++i) {
    const int n = 1 + static_cast<int>(rng.uniform_index(12));
    const Expr e = random_expr(rng, n, 4);
    const Expr d = to_dnf(e);
    std::set<FeaturePattern> pats = e.patterns();
    ASSERT_LE(pats.size(), 12u);
    const std::vector<FeaturePattern> order(pats.begin(), pats.end());
    for (std::uint32_t m = 0; m < (1U << order.size()); ++m) {
      Assignment as;
      for (std::size_t k = 0; k < order.size(); ++k) as[order[k]] = (m >> k) & 1U;
      for (const auto& p : d.patterns())
        if (!as.count(p)) as[p] = false;
      ASSERT_EQ(eval_expr(d, as), eval_expr(e, as)) << e.str() << " vs " << d.str();
    }
  }
}

TEST(ToDnf, TooManyFeaturesForTruthTable) {
  std::vector<Expr> lits;
  for (int i = 0; i < 21; ++i) lits.push_back(lit(feature(i)));
  const Expr e = Expr::all_of(lits);
  EXPECT_EQ(to_dnf(e).children().size(), 1u);
  try {
    equivalent_by_truth_table(e, to_dnf(e));
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::TooManyFeatures);
  }
}

TEST(SemanticGraphError, IdentityIsZero) {
  const TaskInstance t = toycook_task();
  const EmbeddingTable emb = synth_embeddings(toycook_domain(), 0.0, 0);
  const GraphError e = semantic_graph_error(t.truth, t.truth, t, emb);
  EXPECT_EQ(e.prec_error, 0.0);
  EXPECT_EQ(e.eff_error, 0.0);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const DomainConfig d = random_domain(s);
    const TaskInstance rt = sample_task(d, Pool::Train, s);
    const GraphError r = semantic_graph_error(rt.truth, rt.truth, rt, synth_embeddings(d, 0.0, 0));
    EXPECT_EQ(r.prec_error, 0.0);
    EXPECT_EQ(r.eff_error, 0.0);
  }
}

TEST(SemanticGraphError, DroppedAttributeOverAllCompletions) {
  const TaskInstance t = toycook_task();
  ParamGraph hat = t.truth;
  hat.options[VerbSignature{"D", 1}].precondition = lit(A());
  // Brute force over all 16 completions straight from the expressions.
  std::size_t bad = 0, pairs = 0;
  std::vector<Bits> all;
  for (unsigned m = 0; m < 16; ++m) {
    Bits x(4);
    for (std::size_t s = 0; s < 4; ++s) x.set(s, (m >> s) & 1U);
    all.push_back(x);
    for (std::size_t o = 0; o < t.num_options(); ++o) {
      ++pairs;
      bad += ground_eligibility(hat, t.space, o, x, t.truth_lookup()) !=
             ground_eligibility(t.truth, t.space, o, x, t.truth_lookup());
    }
  }
  EXPECT_EQ(bad, 8u);
  const GraphError e = compare_compiled(compile_graph(hat, t.space, t.truth_lookup()), t.truth_model, all);
  EXPECT_DOUBLE_EQ(e.prec_error, static_cast<double>(bad) / static_cast<double>(pairs));
  EXPECT_DOUBLE_EQ(e.prec_error, 1.0 / 12.0);
  EXPECT_EQ(e.eff_error, 0.0);
}

TEST(SemanticGraphError, DroppedAttributeOverReachableCompletions) {
  const TaskInstance t = toycook_task();
  const EmbeddingTable emb = synth_embeddings(toycook_domain(), 0.0, 0);
  ParamGraph hat = t.truth;
  hat.options[VerbSignature{"D", 1}].precondition = lit(A());
  // Decision states by stepping the environment breadth-first; an episode
  // ends when the reward is collected.
  std::set<Bits> seen{Bits(4)};
  std::vector<Bits> frontier{Bits(4)};
  while (!frontier.empty()) {
    std::vector<Bits> next;
    for (const auto& x : frontier)
      for (std::size_t o = 0; o < t.num_options(); ++o) {
        EnvState s{x, compute_eligibility(t, x), 5, 0};
        const StepResult r = step(t, s, o, Phase::Test);
        if (r.reward > 0.0) continue;
        if (seen.insert(r.next_x).second) next.push_back(r.next_x);
      }
    frontier = std::move(next);
  }
  std::size_t bad = 0;
  for (const auto& x : seen)
    bad += ground_eligibility(hat, t.space, option_index(t, "D(e1)"), x, t.truth_lookup()) ? 1 : 0;
  const GraphError e = semantic_graph_error(hat, t, emb);
  EXPECT_TRUE(e.exhaustive);
  EXPECT_EQ(e.probes, seen.size());
  EXPECT_DOUBLE_EQ(e.prec_error, static_cast<double>(bad) / static_cast<double>(seen.size() * t.num_options()));
  EXPECT_GT(e.prec_error, 0.0);
}

TEST(SemanticGraphError, InvertedEffectSign) {
  const TaskInstance t = toycook_task();
  const EmbeddingTable emb = synth_embeddings(toycook_domain(), 0.0, 0);
  ParamGraph hat = t.truth;
  hat.options[VerbSignature{"D", 1}].effect = {EffectEntry{sub("B"), -1}};
  const GraphError e = semantic_graph_error(hat, t, emb);
  EXPECT_EQ(e.prec_error, 0.0);
  EXPECT_GT(e.eff_error, 0.0);
}

TEST(ProbeCompletions, ExhaustiveBelowCap) {
  const TaskInstance t = toycook_task();
  bool exhaustive = false;
  const auto p = probe_completions(t.truth_model, 10, GraphErrorOptions{}, &exhaustive, t.reward_subtask);
  EXPECT_TRUE(exhaustive);
  const auto all = reachable_completions(t.truth_model, 1000, t.reward_subtask);
  ASSERT_TRUE(all);
  EXPECT_EQ(all->size(), 4u);  // {}, {A(e0)}, {A(e1)}, {A(e0),A(e1)}
  EXPECT_EQ(p.size(), all->size());
}

TEST(ProbeCompletions, UniformSampleOfReachableSet) {
  const TaskInstance t = toycook_task();
  const auto all = reachable_completions(t.truth_model, 1000);
  std::set<Bits> reach(all->begin(), all->end());
  GraphErrorOptions opt;
  opt.reachable_cap = 2;
  opt.enumerate_cap = 1000;
  opt.probes = 3;
  bool exhaustive = true;
  const auto p = probe_completions(t.truth_model, 10, opt, &exhaustive);
  EXPECT_FALSE(exhaustive);
  EXPECT_EQ(p.size(), 3u);
  EXPECT_EQ(std::set<Bits>(p.begin(), p.end()).size(), 3u);
  for (const auto& x : p) EXPECT_TRUE(reach.count(x));
}

TEST(ProbeCompletions, RolloutsBeyondEnumerationCap) {
  const TaskInstance t = toycook_task();
  const auto all = reachable_completions(t.truth_model, 1000);
  std::set<Bits> reach(all->begin(), all->end());
  GraphErrorOptions opt;
  opt.reachable_cap = 1;
  opt.enumerate_cap = 2;
  opt.probes = 50;
  const auto p = probe_completions(t.truth_model, 4, opt);
  EXPECT_EQ(p.size(), 50u);
  for (const auto& x : p) EXPECT_TRUE(reach.count(x));
}

TEST(ProbeCompletions, UniformBitvectorsMode) {
  const TaskInstance t = toycook_task();
  GraphErrorOptions opt;
  opt.mode = ProbeMode::Uniform;
  opt.probes = 200;
  const auto p = probe_completions(t.truth_model, 4, opt);
  EXPECT_EQ(p.size(), 200u);
  EXPECT_GT(std::set<Bits>(p.begin(), p.end()).size(), 12u);
}

TEST(ProbeCompletions, DeterministicPerSeed) {
  const DomainConfig d = load_domain(domain_path("mining.domain.json"));
  const TaskInstance t = sample_task(d, Pool::Eval, 3);
  GraphErrorOptions opt;
  opt.seed = 5;
  EXPECT_EQ(probe_completions(t.truth_model, 50, opt), probe_completions(t.truth_model, 50, opt));
}
