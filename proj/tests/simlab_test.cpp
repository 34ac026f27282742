#include "sequoia/simlab.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "sequoia/io.hpp"
#include "testutil.hpp"

namespace sequoia {
namespace {

TEST(MakeModelPair, ZeroDivergenceGivesIdenticalModels) {
  const ModelPair pair = make_model_pair({5, 1, 0.0, 0.8, 3});
  for (std::size_t c = 0; c < pair.target.conditionals().size(); ++c) {
    EXPECT_EQ(pair.draft.conditionals()[c], pair.target.conditionals()[c]);
  }
  EXPECT_EQ(pair.draft.marginal(), pair.target.marginal());
}

TEST(MakeModelPair, FullDivergenceGivesDisjointSupports) {
  const ModelPair pair = make_model_pair({5, 1, 1.0, 1.0, 4});
  for (std::size_t c = 0; c < pair.target.conditionals().size(); ++c) {
    const auto& t = pair.target.conditionals()[c];
    const auto& d = pair.draft.conditionals()[c];
    for (TokenId x = 0; x < 5; ++x) {
      EXPECT_EQ(t[x] > 0.0 && d[x] > 0.0, false);
    }
    EXPECT_DOUBLE_EQ(tv_distance(t, d), 1.0);
  }
}

TEST(MakeModelPair, DivergenceIsExactPerContext) {
  const ModelPair pair = make_model_pair({6, 1, 0.3, 1.0, 5});
  for (std::size_t c = 0; c < pair.target.conditionals().size(); ++c) {
    EXPECT_NEAR(tv_distance(pair.target.conditionals()[c], pair.draft.conditionals()[c]),
                0.3, 1e-12);
  }
  const double mean = mean_pair_divergence(pair);
  EXPECT_GE(mean, 0.25);
  EXPECT_LE(mean, 0.35);
}

TEST(MakeModelPair, Validation) {
  EXPECT_THROW(make_model_pair({1, 0, 0.5, 1.0, 0}), UnreachableDivergence);
  EXPECT_THROW(make_model_pair({4, 0, 1.5, 1.0, 0}), UnreachableDivergence);
  EXPECT_THROW(make_model_pair({4, 0, 0.5, 0.0, 0}), Error);
  EXPECT_NO_THROW(make_model_pair({1, 0, 0.0, 1.0, 0}));
}

TEST(MakeModelPair, DeterministicGivenConfigAndSeed) {
  const ModelPairConfig config{4, 2, 0.4, 0.5, 12};
  const ModelPair a = make_model_pair(config);
  const ModelPair b = make_model_pair(config);
  EXPECT_EQ(a.target.conditionals().size(), 16u);
  for (std::size_t c = 0; c < 16; ++c) {
    EXPECT_EQ(a.target.conditionals()[c], b.target.conditionals()[c]);
    EXPECT_EQ(a.draft.conditionals()[c], b.draft.conditionals()[c]);
  }
}

TEST(ToyLM, ShortPrefixFallsBackToMarginal) {
  const ModelPair pair = make_model_pair({4, 2, 0.2, 1.0, 6});
  const std::vector<TokenId> one{2};
  EXPECT_EQ(pair.target.next_dist({}), pair.target.marginal());
  EXPECT_EQ(pair.target.next_dist(one), pair.target.marginal());
  const std::vector<TokenId> two{2, 1};
  EXPECT_NE(pair.target.next_dist(two), pair.target.marginal());
}

// ---------------------------------------------------------------------------
// Estimation
// ---------------------------------------------------------------------------

TEST(Estimate, EqualModelsAcceptFirstChildAlways) {
  Rng rng(71);
  const ModelPair pair = make_model_pair({5, 1, 0.0, 1.0, 7});
  const auto prompts = rollout_prompts(pair.target, 32, rng);
  const auto report = estimate_acceptance_vector(pair.draft, pair.target,
                                                 VerifierKind::kSequoia, prompts, 4, 0, rng);
  EXPECT_NEAR(report.acceptance[0], 1.0, 1e-12);
  for (std::size_t i = 1; i < report.acceptance.size(); ++i) {
    EXPECT_NEAR(report.acceptance[i], 0.0, 1e-12);
  }
  EXPECT_FALSE(report.power_law_exponent.has_value());
  ASSERT_TRUE(report.cover_rank.has_value());
  EXPECT_EQ(*report.cover_rank, 1);
}

TEST(Estimate, FullDivergenceKillsFirstRank) {
  Rng rng(72);
  const ModelPair pair = make_model_pair({6, 1, 1.0, 1.0, 8});
  const auto prompts = rollout_prompts(pair.target, 32, rng);
  const auto report = estimate_acceptance_vector(pair.draft, pair.target,
                                                 VerifierKind::kSequoia, prompts, 1, 0, rng);
  EXPECT_NEAR(report.acceptance[0], 0.0, 1e-12);
}

TEST(Estimate, MassBoundAndSequoiaDominatesSpecInfer) {
  Rng rng(73);
  const ModelPair pair = make_model_pair({6, 1, 0.35, 0.6, 9});
  const auto prompts = rollout_prompts(pair.target, 48, rng);
  const auto sequoia = estimate_acceptance_vector(pair.draft, pair.target,
                                                  VerifierKind::kSequoia, prompts, 6, 0, rng);
  const auto specinfer = estimate_acceptance_vector(
      pair.draft, pair.target, VerifierKind::kSpecInfer, prompts, 6, 0, rng);
  double mass = 0.0;
  for (double a : sequoia.acceptance) mass += a;
  EXPECT_LE(mass, 1.0 + 1e-9);
  for (std::size_t k = 0; k < 6; ++k) {
    EXPECT_LE(sequoia.rejection[k], specinfer.rejection[k] + 1e-12) << "k=" << k + 1;
  }
  // Cover realization: kmax = vocab drives the Sequoia rejection to zero.
  EXPECT_NEAR(sequoia.rejection[5], 0.0, 1e-12);
}

TEST(Estimate, MonteCarloAgreesWithExactOnLargeVocab) {
  // vocab 12 exceeds the enumeration limit, forcing the Monte Carlo path;
  // compare against a hand-built exact computation on the same contexts.
  Rng rng(74);
  const ModelPair pair = make_model_pair({12, 1, 0.3, 1.0, 10});
  const auto prompts = rollout_prompts(pair.target, 8, rng);
  Rng mc_rng(75);
  const auto mc = estimate_acceptance_vector(pair.draft, pair.target, VerifierKind::kSequoia,
                                             prompts, 3, 4000, mc_rng);
  std::vector<double> exact(3, 0.0);
  for (const auto& prompt : prompts) {
    const auto nd = exact_node_distribution(pair.target.next_dist(prompt),
                                            pair.draft.next_dist(prompt), 3,
                                            VerifierKind::kSequoia, 100000000);
    for (std::size_t i = 0; i < 3; ++i) exact[i] += nd.acceptance_by_rank[i] / 8.0;
  }
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(mc.acceptance[i], exact[i], 0.03) << "rank " << i + 1;
  }
}

TEST(FitPowerLaw, ExactAndNoisy) {
  std::vector<double> exact{1.0, 0.25, 1.0 / 9, 1.0 / 16};
  EXPECT_NEAR(fit_power_law(exact), 2.0, 1e-9);

  std::vector<double> with_zero{0.5, 0.2, 0.0};
  try {
    fit_power_law(with_zero);
    FAIL() << "expected DegenerateFit";
  } catch (const DegenerateFit& e) {
    EXPECT_EQ(e.cover_rank, 3);
  }

  EXPECT_THROW(fit_power_law(std::vector<double>{0.5, 0.4}), Error);

  Rng rng(76);
  std::vector<double> noisy;
  for (int k = 1; k <= 8; ++k) {
    noisy.push_back((1.0 / k) * (0.95 + 0.1 * rng.uniform()));
  }
  const double b = fit_power_law(noisy);
  EXPECT_GT(b, 0.9);
  EXPECT_LT(b, 1.1);
}

// ---------------------------------------------------------------------------
// Growth and decoding
// ---------------------------------------------------------------------------

TEST(GrowTree, DraftPassCounting) {
  Rng rng(77);
  const ModelPair pair = make_model_pair({5, 1, 0.2, 1.0, 11});
  EXPECT_EQ(grow_tree(pair.draft, {}, TreeTopology::single_node(), VerifierKind::kSequoia,
                      rng)
                .draft_passes,
            0);
  const TreeTopology chain({-1, 0, 1, 2}, {0, 1, 1, 1});
  EXPECT_EQ(grow_tree(pair.draft, {}, chain, VerifierKind::kSequoia, rng).draft_passes, 3);
}

TEST(GrowTree, SequoiaChildrenDistinct) {
  Rng rng(78);
  const ModelPair pair = make_model_pair({5, 1, 0.2, 1.0, 12});
  const TreeTopology star({-1, 0, 0, 0}, {0, 1, 2, 3});
  for (int i = 0; i < 50; ++i) {
    const GrownTree grown = grow_tree(pair.draft, {}, star, VerifierKind::kSequoia, rng);
    EXPECT_NE(grown.tokens[1], grown.tokens[2]);
    EXPECT_NE(grown.tokens[1], grown.tokens[3]);
    EXPECT_NE(grown.tokens[2], grown.tokens[3]);
  }
  const TreeTopology too_wide({-1, 0, 0, 0, 0, 0, 0}, {0, 1, 2, 3, 4, 5, 6});
  EXPECT_THROW(grow_tree(pair.draft, {}, too_wide, VerifierKind::kSequoia, rng),
               InsufficientSupport);
}

TEST(RunDecode, EqualModelsChainYieldsDepthPlusOne) {
  Rng rng(79);
  const ModelPair pair = make_model_pair({4, 1, 0.0, 1.0, 13});
  const TreeTopology chain({-1, 0, 1}, {0, 1, 1});
  const DecodeStats stats =
      run_decode_steps(pair.draft, pair.target, chain, VerifierKind::kSequoia, {}, 100, rng);
  for (int g : stats.per_step_generated) EXPECT_EQ(g, 3);
  EXPECT_DOUBLE_EQ(stats.tokens_per_step, 3.0);
}

TEST(RunDecode, RootOnlyYieldsOneTokenPerStep) {
  Rng rng(80);
  const ModelPair pair = make_model_pair({4, 1, 0.4, 1.0, 14});
  const DecodeStats stats = run_decode(pair.draft, pair.target, TreeTopology::single_node(),
                                       VerifierKind::kSequoia, {}, 50, rng);
  EXPECT_DOUBLE_EQ(stats.tokens_per_step, 1.0);
  EXPECT_GE(stats.tokens.size(), 50u);
}

TEST(RunDecode, StreamMatchesDirectTargetSampling) {
  // Unigram comparison of the decoded stream against direct autoregressive
  // target sampling (two-sample chi-square).
  Rng rng(81);
  const ModelPair pair = make_model_pair({4, 1, 0.35, 0.8, 15});
  const TreeTopology topo = testutil::random_topology(6, 2, rng);
  for (VerifierKind kind : {VerifierKind::kSequoia, VerifierKind::kSpecInfer,
                            VerifierKind::kTopKNaive}) {
    const DecodeStats stats =
        run_decode(pair.draft, pair.target, topo, kind, {}, 30000, rng);
    const auto direct = pair.target.generate({}, 30000, rng);
    std::vector<long> decoded_counts(4, 0), direct_counts(4, 0);
    for (TokenId t : stats.tokens) decoded_counts[static_cast<std::size_t>(t)] += 1;
    for (TokenId t : direct) direct_counts[static_cast<std::size_t>(t)] += 1;
    EXPECT_GT(testutil::chi_square_two_sample_p(decoded_counts, direct_counts), 0.001)
        << verifier_name(kind);
  }
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

TEST(ParseStructure, AcceptsTheSpecGrammar) {
  EXPECT_TRUE(parse_structure("sequoia").is_sequoia);
  const StructureSpec ki = parse_structure("k_independent:16");
  EXPECT_FALSE(ki.is_sequoia);
  EXPECT_EQ(ki.kind, StructureKind::kIndependentSequences);
  EXPECT_EQ(ki.k, 16);
  EXPECT_EQ(parse_structure("binary").kind, StructureKind::kBinary);
  EXPECT_EQ(parse_structure("k_ary:4").k, 4);
  EXPECT_THROW(parse_structure("k_ary"), ParseError);
  EXPECT_THROW(parse_structure("k_independent:x"), ParseError);
  EXPECT_THROW(parse_structure("medusa"), ParseError);
}

TEST(ScalingExperiment, CurvesBehave) {
  Rng rng(82);
  const ModelPair pair = make_model_pair({6, 1, 0.25, 0.7, 16});
  const std::vector<int> budgets{4, 8, 16, 32};
  const std::vector<StructureSpec> structures{parse_structure("sequoia"),
                                              parse_structure("k_independent:3"),
                                              parse_structure("sequence")};
  const auto result = scaling_experiment(pair, VerifierKind::kSequoia, budgets, structures,
                                         400, 6, 48, 0, rng);
  ASSERT_EQ(result.rows.size(), budgets.size() * structures.size());

  // Planned-curve monotonicity in the budget (deterministic), measured
  // values within Monte Carlo error of the prediction.
  double prev = 0.0;
  for (const auto& row : result.rows) {
    if (row.structure == "sequoia") {
      EXPECT_GE(row.predicted_tokens, prev - 1e-12);
      prev = row.predicted_tokens;
    }
    EXPECT_NEAR(row.tokens_per_step, row.predicted_tokens,
                3.0 / 1.96 * row.ci95 + 0.05);
  }

  // k-independent rows stay below their closed-form ceiling.
  const AcceptanceVector p = result.estimate.sorted_vector();
  const double bound =
      structure_upper_bound(StructureKind::kIndependentSequences, p, 3);
  for (const auto& row : result.rows) {
    if (row.structure == "k_independent:3") {
      EXPECT_LE(row.predicted_tokens, bound + 1e-9);
    }
  }
}

TEST(ScalingExperiment, DeterministicAndThreadInvariant) {
  const ModelPair pair = make_model_pair({5, 1, 0.3, 1.0, 17});
  const std::vector<int> budgets{4, 12};
  const std::vector<StructureSpec> structures{parse_structure("sequoia"),
                                              parse_structure("sequence")};
  auto run = [&](int threads) {
    Rng rng(4242);
    return scaling_experiment(pair, VerifierKind::kSequoia, budgets, structures, 200, 5, 32,
                              0, rng, CostModel::flat(), threads);
  };
  const auto a = run(1);
  const auto b = run(1);
  const auto c = run(4);
  EXPECT_EQ(experiment_rows_to_csv(a.rows), experiment_rows_to_csv(b.rows));
  EXPECT_EQ(experiment_rows_to_csv(a.rows), experiment_rows_to_csv(c.rows));
}

TEST(SpeedupExperiment, OptimizerRowDominatesOnPredictedSpeedup) {
  Rng rng(83);
  const ModelPair pair = make_model_pair({6, 1, 0.3, 0.8, 18});
  const CostModel cost = CostModel::from_samples({{1.0, 1.0}, {16.0, 1.5}, {64.0, 4.0}}, 0.03);
  const std::vector<int> budgets{2, 4, 8, 16, 32};
  const auto result = speedup_experiment(pair, VerifierKind::kSequoia, cost, budgets, 300, 6,
                                         48, 0, rng);
  ASSERT_EQ(result.rows.size(), budgets.size() + 1);
  const auto& opt = result.rows.back();
  EXPECT_EQ(opt.structure, "optimizer");
  for (std::size_t i = 0; i + 1 < result.rows.size(); ++i) {
    EXPECT_GE(opt.predicted_speedup, result.rows[i].predicted_speedup - 1e-12);
  }
}

TEST(SpeedupExperiment, FlatCostRanksLikeScaling) {
  Rng rng(84);
  const ModelPair pair = make_model_pair({5, 1, 0.25, 1.0, 19});
  const std::vector<int> budgets{2, 8, 24};
  const auto result = speedup_experiment(pair, VerifierKind::kSequoia, CostModel::flat(),
                                         budgets, 200, 5, 32, 0, rng);
  // With t == 1 and c = 0 the predicted speedup equals predicted tokens.
  for (const auto& row : result.rows) {
    EXPECT_NEAR(row.predicted_speedup, row.predicted_tokens, 1e-12);
  }
}

}  // namespace
}  // namespace sequoia
