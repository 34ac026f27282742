#pragma once

// Token-tree topology with positional child ranks, the acceptance vector
// abstraction, the score function f(v), and the closed-form expected
// generated tokens F(T) = sum_v f(v) together with its Monte Carlo oracle.
// Topologies are immutable; trees are rebuilt, not edited.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sequoia/categorical.hpp"
#include "sequoia/errors.hpp"
#include "sequoia/rng.hpp"

namespace sequoia {

// ---------------------------------------------------------------------------
// TreeTopology
//
// Nodes are stored in canonical breadth-first order: node 0 is the root,
// every parent precedes its children, and the children of each node carry
// contiguous ranks 1..m in id order. depth(root) = 0.
// ---------------------------------------------------------------------------
class TreeTopology {
public:
  // Validating constructor; `parents` uses -1 for the root, `ranks` uses 0.
  // The node order must already be canonical breadth-first.
  TreeTopology(std::vector<int> parents, std::vector<int> ranks)
      : parents_(std::move(parents)), ranks_(std::move(ranks)) {
    validate_and_index();
  }

  static TreeTopology single_node() { return TreeTopology({-1}, {0}); }

  // Relabels an arbitrary parent/rank description (any node order, root
  // marked by parent -1) into canonical breadth-first form.
  static TreeTopology canonicalized(const std::vector<int>& parents,
                                    const std::vector<int>& ranks) {
    const std::size_t n = parents.size();
    if (ranks.size() != n || n == 0) {
      throw Error("TreeTopology: parents/ranks size mismatch");
    }
    int root = -1;
    std::vector<std::vector<std::pair<int, int>>> kids(n);  // (rank, node)
    for (std::size_t i = 0; i < n; ++i) {
      if (parents[i] < 0) {
        if (root >= 0) throw Error("TreeTopology: multiple roots");
        root = static_cast<int>(i);
      } else {
        if (parents[i] >= static_cast<int>(n)) {
          throw Error("TreeTopology: parent index out of range");
        }
        kids[static_cast<std::size_t>(parents[i])].emplace_back(ranks[i],
                                                                static_cast<int>(i));
      }
    }
    if (root < 0) throw Error("TreeTopology: no root");
    for (auto& k : kids) std::sort(k.begin(), k.end());

    std::vector<int> order;  // old ids in BFS order
    order.reserve(n);
    order.push_back(root);
    for (std::size_t head = 0; head < order.size(); ++head) {
      for (const auto& [rank, node] : kids[static_cast<std::size_t>(order[head])]) {
        (void)rank;
        order.push_back(node);
      }
    }
    if (order.size() != n) {
      throw Error("TreeTopology: disconnected or cyclic input");
    }
    std::vector<int> new_id(n);
    for (std::size_t i = 0; i < n; ++i) new_id[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
    std::vector<int> p(n), r(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int old = order[i];
      p[i] = parents[static_cast<std::size_t>(old)] < 0
                 ? -1
                 : new_id[static_cast<std::size_t>(parents[static_cast<std::size_t>(old)])];
      r[i] = parents[static_cast<std::size_t>(old)] < 0 ? 0 : ranks[static_cast<std::size_t>(old)];
    }
    return TreeTopology(std::move(p), std::move(r));
  }

  std::size_t size() const { return parents_.size(); }
  int parent(int v) const { return parents_[static_cast<std::size_t>(v)]; }
  int rank(int v) const { return ranks_[static_cast<std::size_t>(v)]; }
  int depth(int v) const { return depths_[static_cast<std::size_t>(v)]; }
  const std::vector<int>& children(int v) const { return children_[static_cast<std::size_t>(v)]; }
  const std::vector<int>& parents() const { return parents_; }
  const std::vector<int>& ranks() const { return ranks_; }

  // Maximum node depth; 0 for the root-only tree. One draft pass per layer
  // of speculated tokens, so this is also the draft-pass count.
  int depth() const { return max_depth_; }

  bool operator==(const TreeTopology& other) const {
    return parents_ == other.parents_ && ranks_ == other.ranks_;
  }

private:
  void validate_and_index() {
    const std::size_t n = parents_.size();
    if (n == 0 || ranks_.size() != n) {
      throw Error("TreeTopology: parents/ranks size mismatch");
    }
    if (parents_[0] != -1 || ranks_[0] != 0) {
      throw Error("TreeTopology: node 0 must be the root");
    }
    children_.assign(n, {});
    depths_.assign(n, 0);
    max_depth_ = 0;
    for (std::size_t i = 1; i < n; ++i) {
      const int p = parents_[i];
      if (p < 0 || p >= static_cast<int>(i)) {
        throw Error("TreeTopology: parents must precede children");
      }
      auto& sibs = children_[static_cast<std::size_t>(p)];
      if (ranks_[i] != static_cast<int>(sibs.size()) + 1) {
        throw Error("TreeTopology: child ranks must be contiguous 1..m in id order");
      }
      sibs.push_back(static_cast<int>(i));
      depths_[i] = depths_[static_cast<std::size_t>(p)] + 1;
      max_depth_ = std::max(max_depth_, depths_[i]);
    }
    // Canonical breadth-first order: re-running BFS must visit 0..n-1 in id
    // order.
    std::vector<int> order;
    order.reserve(n);
    order.push_back(0);
    for (std::size_t head = 0; head < order.size(); ++head) {
      for (int c : children_[static_cast<std::size_t>(order[head])]) order.push_back(c);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (order[i] != static_cast<int>(i)) {
        throw Error("TreeTopology: node order is not breadth-first");
      }
    }
  }

  std::vector<int> parents_;
  std::vector<int> ranks_;
  std::vector<std::vector<int>> children_;
  std::vector<int> depths_;
  int max_depth_ = 0;
};

// ---------------------------------------------------------------------------
// AcceptanceVector
//
// Positional acceptance probabilities p_1..p_kmax. The events "child i is
// the first accepted" are disjoint, so every prefix sum must stay <= 1, and
// the checked constructor requires p nonincreasing (the planner's
// optimality argument leans on it). unchecked() keeps only the [0,1] range
// check, for formula-level vectors (the power-law family has p_1 = 0);
// operations that need the probabilistic semantics re-validate what they
// use.
// ---------------------------------------------------------------------------
class AcceptanceVector {
public:
  explicit AcceptanceVector(std::vector<double> p) : AcceptanceVector(std::move(p), true) {}

  static AcceptanceVector unchecked(std::vector<double> p) {
    return AcceptanceVector(std::move(p), false);
  }

  std::size_t max_rank() const { return p_.size(); }
  // 1-based rank access.
  double operator[](int rank) const { return p_[static_cast<std::size_t>(rank - 1)]; }
  const std::vector<double>& probs() const { return p_; }

  // P_k = sum of the first k entries.
  double prefix_sum(int k) const {
    double s = 0.0;
    for (int i = 1; i <= k; ++i) s += (*this)[i];
    return s;
  }

  bool is_nonincreasing() const {
    for (std::size_t i = 1; i < p_.size(); ++i) {
      if (p_[i] > p_[i - 1]) return false;
    }
    return true;
  }

private:
  AcceptanceVector(std::vector<double> p, bool strict) : p_(std::move(p)) {
    if (p_.empty()) throw Error("AcceptanceVector: empty");
    double cum = 0.0;
    for (double v : p_) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw Error("AcceptanceVector: entries must lie in [0,1]");
      }
      cum += v;
      if (strict && cum > 1.0 + kProbSumTolerance) {
        throw Error("AcceptanceVector: cumulative acceptance exceeds 1");
      }
    }
    if (strict && !is_nonincreasing()) {
      throw Error("AcceptanceVector: entries must be nonincreasing; sort explicitly if intended");
    }
  }

  std::vector<double> p_;
};

// ---------------------------------------------------------------------------
// Score function and expected generated tokens
// ---------------------------------------------------------------------------

// Child ranks along the path root -> v; empty for the root.
inline std::vector<int> path(const TreeTopology& t, int v) {
  std::vector<int> out;
  while (t.parent(v) >= 0) {
    out.push_back(t.rank(v));
    v = t.parent(v);
  }
  std::reverse(out.begin(), out.end());
  return out;
}

namespace detail {
// f(v) for every node in one pass; f(root) = 1, f(child) = f(parent) * p_rank.
inline std::vector<double> score_all(const TreeTopology& t, const AcceptanceVector& p) {
  std::vector<double> f(t.size());
  f[0] = 1.0;
  for (std::size_t v = 1; v < t.size(); ++v) {
    const int r = t.rank(static_cast<int>(v));
    if (r > static_cast<int>(p.max_rank())) {
      throw RankOutOfRange("child rank " + std::to_string(r) +
                           " exceeds acceptance vector of length " +
                           std::to_string(p.max_rank()));
    }
    f[v] = f[static_cast<std::size_t>(t.parent(static_cast<int>(v)))] * p[r];
  }
  return f;
}
}  // namespace detail

// f(v): product of acceptance probabilities along Path(v); f(root) = 1.
inline double score(const TreeTopology& t, int v, const AcceptanceVector& p) {
  double f = 1.0;
  for (int r : path(t, v)) {
    if (r > static_cast<int>(p.max_rank())) {
      throw RankOutOfRange("child rank " + std::to_string(r) +
                           " exceeds acceptance vector of length " +
                           std::to_string(p.max_rank()));
    }
    f *= p[r];
  }
  return f;
}

// F(T) = sum_v f(v): expected generated tokens (speculated acceptances plus
// the guaranteed bonus token) under positional acceptance.
inline double expected_tokens(const TreeTopology& t, const AcceptanceVector& p) {
  const auto f = detail::score_all(t, p);
  return std::accumulate(f.begin(), f.end(), 0.0);
}

// Monte Carlo estimate of F(T): walks the positional acceptance process
// (accept the rank-i child with probability p_i, disjointly) from the root
// and counts accepted nodes + 1 per trial.
inline double simulate_expected_tokens(const TreeTopology& t, const AcceptanceVector& p,
                                       long trials, Rng& rng) {
  if (trials < 1) throw Error("simulate_expected_tokens: trials must be >= 1");
  // Validate ranks up front so errors do not depend on the random walk, and
  // insist on the disjoint-events semantics the walk relies on.
  (void)detail::score_all(t, p);
  if (p.prefix_sum(static_cast<int>(p.max_rank())) > 1.0 + kProbSumTolerance) {
    throw Error("simulate_expected_tokens: acceptance mass exceeds 1");
  }
  long total = 0;
  for (long trial = 0; trial < trials; ++trial) {
    int node = 0;
    int accepted = 0;
    while (!t.children(node).empty()) {
      const double u = rng.uniform();
      double cum = 0.0;
      int next = -1;
      for (int c : t.children(node)) {
        cum += p[t.rank(c)];
        if (u < cum) {
          next = c;
          break;
        }
      }
      if (next < 0) break;
      ++accepted;
      node = next;
    }
    total += accepted + 1;
  }
  return static_cast<double>(total) / static_cast<double>(trials);
}

}  // namespace sequoia
