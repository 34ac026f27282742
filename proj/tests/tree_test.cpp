#include "sequoia/tree.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "sequoia/io.hpp"
#include "testutil.hpp"

namespace sequoia {
namespace {

// root -> {rank1 child, rank2 child}, rank2 child -> {rank1..rank3}.
TreeTopology example_tree() {
  return TreeTopology({-1, 0, 0, 2, 2, 2}, {0, 1, 2, 1, 2, 3});
}

TEST(Topology, ValidatesBasicInvariants) {
  EXPECT_NO_THROW(TreeTopology::single_node());
  EXPECT_NO_THROW(example_tree());
  // Rank gap.
  EXPECT_THROW(TreeTopology({-1, 0}, {0, 2}), Error);
  // Two roots.
  EXPECT_THROW(TreeTopology::canonicalized({-1, -1}, {0, 0}), Error);
  // Parent after child is not breadth-first.
  EXPECT_THROW(TreeTopology({-1, 1}, {0, 1}), Error);
  // Depth-first node order rejected: chain child before root's second child.
  EXPECT_THROW(TreeTopology({-1, 0, 1, 0}, {0, 1, 1, 2}), Error);
}

TEST(Topology, CanonicalizedRelabelsToBreadthFirst) {
  // Same shape as example_tree but listed depth-first.
  const TreeTopology t =
      TreeTopology::canonicalized({-1, 0, 1, 1, 1, 0}, {0, 2, 3, 2, 1, 1});
  EXPECT_EQ(t, example_tree());
}

TEST(Topology, DepthAndChildren) {
  const TreeTopology t = example_tree();
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.depth(0), 0);
  EXPECT_EQ(t.depth(5), 2);
  EXPECT_EQ(t.depth(), 2);
  EXPECT_EQ(t.children(0).size(), 2u);
  EXPECT_EQ(t.children(2).size(), 3u);
}

TEST(Path, Examples) {
  const TreeTopology t = example_tree();
  EXPECT_TRUE(path(t, 0).empty());
  // Node 5 is the 3rd child of the root's 2nd child.
  EXPECT_EQ(path(t, 5), (std::vector<int>{2, 3}));
  EXPECT_EQ(path(t, 1), (std::vector<int>{1}));
}

TEST(Score, Examples) {
  const TreeTopology t = example_tree();
  const AcceptanceVector p({0.7, 0.2});
  EXPECT_DOUBLE_EQ(score(t, 0, p), 1.0);
  EXPECT_DOUBLE_EQ(score(t, 1, p), 0.7);
  EXPECT_DOUBLE_EQ(score(t, 3, p), 0.2 * 0.7);  // path [2,1]
  EXPECT_THROW(score(t, 5, p), RankOutOfRange);  // path [2,3] needs p_3
}

TEST(AcceptanceVectorChecks, MonotoneAndMass) {
  EXPECT_NO_THROW(AcceptanceVector({0.5, 0.3, 0.1}));
  EXPECT_THROW(AcceptanceVector({0.3, 0.5}), Error);
  EXPECT_THROW(AcceptanceVector({0.8, 0.8}), Error);
  EXPECT_THROW(AcceptanceVector({1.2}), Error);
  // unchecked keeps only the range check.
  EXPECT_NO_THROW(AcceptanceVector::unchecked({0.0, 0.5, 0.2}));
  EXPECT_NO_THROW(AcceptanceVector::unchecked({0.8, 0.4}));
  EXPECT_THROW(AcceptanceVector::unchecked({0.8, 1.4}), Error);
}

TEST(ExpectedTokens, HandValues) {
  const AcceptanceVector p({0.5, 0.25});
  EXPECT_DOUBLE_EQ(expected_tokens(TreeTopology::single_node(), p), 1.0);
  // Root + 2 children + grandchild under child 1: 1 + .5 + .25 + .25 = 2.
  const TreeTopology t({-1, 0, 0, 1}, {0, 1, 2, 1});
  EXPECT_DOUBLE_EQ(expected_tokens(t, p), 2.0);
}

TEST(ExpectedTokens, LeafAdditivity) {
  Rng rng(21);
  for (int i = 0; i < 30; ++i) {
    const int n = 2 + static_cast<int>(rng.below(7));
    const AcceptanceVector p = testutil::random_acceptance(4, rng);
    const TreeTopology t = testutil::random_topology(n, 4, rng);
    // Remove the last BFS node (always a leaf with the highest rank among
    // its siblings).
    std::vector<int> parents(t.parents().begin(), t.parents().end() - 1);
    std::vector<int> ranks(t.ranks().begin(), t.ranks().end() - 1);
    const TreeTopology smaller(std::move(parents), std::move(ranks));
    const double f_leaf = score(t, n - 1, p);
    EXPECT_NEAR(expected_tokens(t, p), expected_tokens(smaller, p) + f_leaf, 1e-12);
  }
}

TEST(ExpectedTokens, ChainMatchesGeometricFormula) {
  const double alpha = 0.8;
  const AcceptanceVector p({alpha});
  for (int n = 1; n <= 9; ++n) {
    std::vector<int> parents{-1};
    std::vector<int> ranks{0};
    for (int v = 1; v < n; ++v) {
      parents.push_back(v - 1);
      ranks.push_back(1);
    }
    const TreeTopology chain(std::move(parents), std::move(ranks));
    EXPECT_NEAR(expected_tokens(chain, p),
                (1.0 - std::pow(alpha, n)) / (1.0 - alpha), 1e-12);
  }
}

TEST(SimulateExpectedTokens, DegenerateCases) {
  Rng rng(22);
  const AcceptanceVector ones({1.0});
  const AcceptanceVector zeros = AcceptanceVector({0.0, 0.0});
  EXPECT_DOUBLE_EQ(
      simulate_expected_tokens(TreeTopology::single_node(), ones, 100, rng), 1.0);

  TreeTopology chain({-1, 0, 1, 2}, {0, 1, 1, 1});
  EXPECT_DOUBLE_EQ(simulate_expected_tokens(chain, ones, 100, rng), 4.0);

  const TreeTopology t = testutil::random_topology(7, 2, rng);
  EXPECT_DOUBLE_EQ(simulate_expected_tokens(t, zeros, 100, rng), 1.0);
}

TEST(SimulateExpectedTokens, AgreesWithClosedFormWithinThreeSigma) {
  Rng rng(23);
  const long trials = 100000;
  for (int i = 0; i < 10; ++i) {
    const AcceptanceVector p = testutil::random_acceptance(3, rng);
    const TreeTopology t = testutil::random_topology(7, 3, rng);
    const double exact = expected_tokens(t, p);
    const double mc = simulate_expected_tokens(t, p, trials, rng);
    // Per-trial count lies in [1, n]; bound the sd by the range.
    const double sigma_bound = static_cast<double>(t.size()) / std::sqrt(trials);
    EXPECT_NEAR(mc, exact, 3.0 * sigma_bound);
  }
}

TEST(Codec, FixedForms) {
  EXPECT_EQ(to_json(TreeTopology::single_node()).dump(),
            R"({"parents":[null],"ranks":[0]})");
  const TreeTopology chain({-1, 0}, {0, 1});
  EXPECT_EQ(to_json(chain).dump(), R"({"parents":[null,0],"ranks":[0,1]})");
  EXPECT_EQ(topology_from_json(parse_json(R"({"parents":[null,0],"ranks":[0,1]})", "t")),
            chain);
}

TEST(Codec, RoundTripIsIdentity) {
  Rng rng(24);
  for (int i = 0; i < 30; ++i) {
    const TreeTopology t =
        testutil::random_topology(1 + static_cast<int>(rng.below(12)), 3, rng);
    EXPECT_EQ(topology_from_json(to_json(t)), t);
  }
}

TEST(Codec, ParseErrors) {
  EXPECT_THROW(topology_from_json(parse_json(R"({"parents":[null]})", "t")), ParseError);
  EXPECT_THROW(topology_from_json(parse_json(R"({"parents":[null,0],"ranks":[0,2]})", "t")),
               ParseError);
  EXPECT_THROW(parse_json("{nope", "t"), ParseError);
}

}  // namespace
}  // namespace sequoia
