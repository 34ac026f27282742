#include "sequoia/optimizer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "testutil.hpp"

namespace sequoia {
namespace {

CostModel example_model() {
  return CostModel::from_samples({{1.0, 1.0}, {64.0, 1.0}, {256.0, 4.0}}, 0.0);
}

TEST(TOf, InterpolationAndExtrapolation) {
  const CostModel m = example_model();
  EXPECT_DOUBLE_EQ(t_of(m, 64.0), 1.0);
  EXPECT_DOUBLE_EQ(t_of(m, 160.0), 2.5);
  // Final segment slope 3/192 per token beyond 256.
  EXPECT_DOUBLE_EQ(t_of(m, 512.0), 8.0);
  EXPECT_DOUBLE_EQ(t_of(m, 0.5), 1.0);
}

TEST(Speedup, Arithmetic) {
  // Ideal hardware: flat t, free drafts -> speedup equals G.
  EXPECT_DOUBLE_EQ(speedup(CostModel::flat(), 4.0, 64, 7), 4.0);

  CostModel m = CostModel::from_samples({{1.0, 1.0}, {64.0, 1.1}}, 0.02);
  EXPECT_NEAR(speedup(m, 3.88, 64, 7), 3.88 / 1.24, 1e-12);

  // Batch 2 doubles the verify argument: t(2n) replaces t(n).
  CostModel batched = CostModel::from_samples({{1.0, 1.0}, {128.0, 2.0}}, 0.0, 2);
  EXPECT_DOUBLE_EQ(speedup(batched, 1.0, 64, 0), 1.0 / t_of(batched, 128.0));
  EXPECT_DOUBLE_EQ(t_of(batched, 128.0), 2.0);
}

TEST(Speedup, StrictlyDecreasingInDepth) {
  CostModel m = CostModel::from_samples({{1.0, 1.0}, {32.0, 1.5}}, 0.05);
  double prev = speedup(m, 3.0, 16, 1);
  for (int d = 2; d <= 10; ++d) {
    const double s = speedup(m, 3.0, 16, d);
    EXPECT_LT(s, prev);
    prev = s;
  }
}

TEST(LoadCostModel, NormalizesAndComputesDraftRatio) {
  std::istringstream csv("n,seconds\n1,0.020\n64,0.022\n");
  const CostModel m = load_cost_model(csv, 0.0004);
  EXPECT_DOUBLE_EQ(t_of(m, 64.0), 1.1);
  EXPECT_DOUBLE_EQ(m.draft_cost, 0.02);
  EXPECT_FALSE(m.isotonic_corrected);
}

TEST(LoadCostModel, ErrorsAndRecovery) {
  std::istringstream one_row("n,seconds\n1,0.02\n");
  EXPECT_THROW(load_cost_model(one_row, 0.001), MissingBaseline);

  std::istringstream no_baseline("n,seconds\n2,0.02\n64,0.03\n");
  EXPECT_THROW(load_cost_model(no_baseline, 0.001), MissingBaseline);

  std::istringstream bad_header("tokens,seconds\n1,0.02\n");
  EXPECT_THROW(load_cost_model(bad_header, 0.001), ParseError);

  std::istringstream bad_row("n,seconds\n1,0.02\nx,0.03\n");
  EXPECT_THROW(load_cost_model(bad_row, 0.001), ParseError);

  // Unsorted rows are sorted on load.
  std::istringstream unsorted("n,seconds\n64,0.022\n1,0.020\n");
  const CostModel m = load_cost_model(unsorted, 0.0004);
  EXPECT_DOUBLE_EQ(m.samples.front().first, 1.0);
  EXPECT_DOUBLE_EQ(t_of(m, 64.0), 1.1);
}

TEST(LoadCostModel, IsotonicCorrectionOnNoisyMeasurements) {
  std::istringstream csv("n,seconds\n1,0.020\n32,0.024\n64,0.022\n128,0.030\n");
  const CostModel m = load_cost_model(csv, 0.0004);
  EXPECT_TRUE(m.isotonic_corrected);
  for (std::size_t i = 1; i < m.samples.size(); ++i) {
    EXPECT_GE(m.samples[i].second, m.samples[i - 1].second);
  }
  // The violating pair is pooled to its average ratio.
  EXPECT_NEAR(m.samples[1].second, (1.2 + 1.1) / 2.0, 1e-12);
  EXPECT_NEAR(m.samples[2].second, (1.2 + 1.1) / 2.0, 1e-12);
}

TEST(Optimize, DegenerateCostPicksLargestBudget) {
  Rng rng(61);
  const AcceptanceVector p = testutil::random_acceptance(4, rng);
  const OptimizerResult r = optimize(p, CostModel::flat(), 24, 6);
  EXPECT_EQ(r.size, 24);
  EXPECT_NEAR(r.speedup, r.expected_tokens, 1e-12);
  EXPECT_NEAR(r.expected_tokens, best_tree_bounded(24, 7, p).value, 1e-12);
}

TEST(Optimize, SpeedupMatchesFormulaInvariant) {
  Rng rng(62);
  const AcceptanceVector p = testutil::random_acceptance(3, rng);
  CostModel m = CostModel::from_samples({{1.0, 1.0}, {16.0, 1.4}, {64.0, 3.0}}, 0.03);
  const OptimizerResult r = optimize(p, m, 40, 12);
  EXPECT_NEAR(r.speedup, speedup(m, r.expected_tokens, r.size, r.depth), 1e-12);
  EXPECT_NEAR(r.expected_tokens, expected_tokens(r.topology, p), 1e-9);
  EXPECT_LE(r.topology.depth(), r.depth);
}

TEST(Optimize, SingleSequenceReducesToPriorWorkObjective) {
  // With kmax = 1 and flat t, the grid argmax must reproduce the argmax of
  //   (1 - alpha^(gamma+1)) / ((1 - alpha) (1 + c*gamma))
  // over the speculation length gamma.
  for (double alpha : {0.6, 0.8, 0.95}) {
    for (double c : {0.005, 0.02, 0.1}) {
      const AcceptanceVector p({alpha});
      const int d_max = 40;
      const OptimizerResult r = optimize(p, CostModel::flat(c), d_max + 1, d_max, 1);

      int best_gamma = 1;
      double best = 0.0;
      for (int gamma = 1; gamma <= d_max; ++gamma) {
        const double value = (1.0 - std::pow(alpha, gamma + 1)) /
                             ((1.0 - alpha) * (1.0 + c * gamma));
        if (value > best) {
          best = value;
          best_gamma = gamma;
        }
      }
      EXPECT_EQ(r.depth, best_gamma) << "alpha=" << alpha << " c=" << c;
      EXPECT_EQ(r.size, best_gamma + 1) << "alpha=" << alpha << " c=" << c;
      EXPECT_NEAR(r.speedup, best, 1e-12);
    }
  }
}

TEST(Optimize, DominatesEveryFixedSizeRow) {
  Rng rng(63);
  const AcceptanceVector p = testutil::random_acceptance(4, rng);
  CostModel m = CostModel::from_samples({{1.0, 1.0}, {8.0, 1.2}, {32.0, 2.4}}, 0.04);
  const auto rows = optimize_per_size(p, m, 32, 10);
  const OptimizerResult best = optimize(p, m, 32, 10);
  for (const auto& row : rows) {
    EXPECT_GE(best.speedup, row.speedup - 1e-12);
  }
}

TEST(Optimize, SteeperCostCurveShrinksOptimalSize) {
  Rng rng(64);
  for (int i = 0; i < 5; ++i) {
    const AcceptanceVector p = testutil::random_acceptance(4, rng);
    // t doubling every 32 tokens vs a flat curve.
    std::vector<std::pair<double, double>> steep{{1.0, 1.0}};
    for (int n = 32; n <= 256; n += 32) {
      steep.emplace_back(n, 1.0 + static_cast<double>(n - 1) / 32.0);
    }
    const CostModel flat = CostModel::flat(0.01);
    const CostModel steep_m = CostModel::from_samples(std::move(steep), 0.01);
    const OptimizerResult with_flat = optimize(p, flat, 64, 16);
    const OptimizerResult with_steep = optimize(p, steep_m, 64, 16);
    EXPECT_LE(with_steep.size, with_flat.size);
  }
}

}  // namespace
}  // namespace sequoia
