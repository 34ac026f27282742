#pragma once

// Optimal token-tree construction under a size budget.
//
//   - best_tree_unbounded: the c_L recurrence
//       c_1(n)   = 1 + p_1 c(n-1)
//       c_L(n)   = max_x c_{L-1}(x) + p_L c(n-x)
//       c(n)     = max_L c_L(n)
//     in O(n^2 k) time, with backpointers for reconstruction.
//   - best_tree_bounded: the R/T tables over (size, depth-in-layers,
//     first-branch count), with G(n, d) = max_{m <= n, b} T(m, d, b).
//   - brute_force_best_tree: exhaustive enumeration oracle for desk-scale
//     budgets.
//   - structure_upper_bound / fixed_structure_*: the closed-form ceilings
//     and handcrafted baseline shapes (sequence, k independent sequences,
//     binary, k-ary).
//
// Depth below always counts layers: the root-only tree has depth 1.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sequoia/errors.hpp"
#include "sequoia/tree.hpp"

namespace sequoia {

struct PlanResult {
  double value = 1.0;
  TreeTopology topology = TreeTopology::single_node();
  int budget_used = 1;
};

namespace detail {

// Incrementally built linked tree; canonicalized once at the end.
struct TreeSink {
  std::vector<int> parents;
  std::vector<int> ranks;
  int add(int parent, int rank) {
    parents.push_back(parent);
    ranks.push_back(rank);
    return static_cast<int>(parents.size()) - 1;
  }
  TreeTopology finish() const { return TreeTopology::canonicalized(parents, ranks); }
};

inline int resolve_kmax(int kmax, const AcceptanceVector& p) {
  if (kmax < 0) return static_cast<int>(p.max_rank());
  if (kmax < 1 || kmax > static_cast<int>(p.max_rank())) {
    throw RankOutOfRange("kmax " + std::to_string(kmax) +
                         " outside acceptance vector of length " +
                         std::to_string(p.max_rank()));
  }
  return kmax;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Unbounded-depth DP
// ---------------------------------------------------------------------------

class UnboundedPlanTable {
public:
  UnboundedPlanTable(int max_size, const AcceptanceVector& p, int kmax = -1)
      : n_(max_size), k_(detail::resolve_kmax(kmax, p)) {
    if (n_ < 1) throw Error("plan: budget must be >= 1");
    c_.assign(static_cast<std::size_t>(n_) + 1, 0.0);
    best_branches_.assign(static_cast<std::size_t>(n_) + 1, 0);
    split_.assign(static_cast<std::size_t>(k_) + 1,
                  std::vector<int>(static_cast<std::size_t>(n_) + 1, 0));
    c_[1] = 1.0;

    // cl[L] holds c_L(n) for the current sweep; filled level by level.
    std::vector<std::vector<double>> cl(
        static_cast<std::size_t>(k_) + 1,
        std::vector<double>(static_cast<std::size_t>(n_) + 1,
                            -std::numeric_limits<double>::infinity()));
    for (int n = 2; n <= n_; ++n) {
      double best = -std::numeric_limits<double>::infinity();
      int best_l = 0;
      for (int l = 1; l <= std::min(k_, n - 1); ++l) {
        double v;
        if (l == 1) {
          v = 1.0 + p[1] * c_[static_cast<std::size_t>(n - 1)];
        } else {
          v = -std::numeric_limits<double>::infinity();
          int best_x = 0;
          for (int x = l; x <= n - 1; ++x) {
            const double cand = cl[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(x)] +
                                p[l] * c_[static_cast<std::size_t>(n - x)];
            if (cand > v) {
              v = cand;
              best_x = x;
            }
          }
          split_[static_cast<std::size_t>(l)][static_cast<std::size_t>(n)] = best_x;
        }
        cl[static_cast<std::size_t>(l)][static_cast<std::size_t>(n)] = v;
        if (v > best) {
          best = v;
          best_l = l;
        }
      }
      c_[static_cast<std::size_t>(n)] = best;
      best_branches_[static_cast<std::size_t>(n)] = best_l;
    }
  }

  int max_size() const { return n_; }
  int kmax() const { return k_; }
  double value(int n) const { return c_[static_cast<std::size_t>(n)]; }

  PlanResult plan(int n) const {
    if (n < 1 || n > n_) throw Error("plan: budget outside table");
    detail::TreeSink sink;
    emit(n, -1, 0, sink);
    return {value(n), sink.finish(), n};
  }

private:
  void emit(int n, int parent, int rank, detail::TreeSink& sink) const {
    const int root = sink.add(parent, rank);
    if (n == 1) return;
    const int branches = best_branches_[static_cast<std::size_t>(n)];
    std::vector<int> branch_size(static_cast<std::size_t>(branches) + 1, 0);
    int cur = n;
    for (int l = branches; l >= 2; --l) {
      const int x = split_[static_cast<std::size_t>(l)][static_cast<std::size_t>(cur)];
      branch_size[static_cast<std::size_t>(l)] = cur - x;
      cur = x;
    }
    branch_size[1] = cur - 1;
    for (int l = 1; l <= branches; ++l) {
      emit(branch_size[static_cast<std::size_t>(l)], root, l, sink);
    }
  }

  int n_;
  int k_;
  std::vector<double> c_;
  std::vector<int> best_branches_;
  std::vector<std::vector<int>> split_;  // split_[L][n]: size kept by root + branches 1..L-1
};

// Tree of size exactly n maximizing F, any depth, at most kmax children per
// node. Since every f(v) >= 0, this also equals the best value over sizes
// <= n.
inline PlanResult best_tree_unbounded(int n, const AcceptanceVector& p, int kmax = -1) {
  return UnboundedPlanTable(n, p, kmax).plan(n);
}

// ---------------------------------------------------------------------------
// Feasibility table R(m, l, b)
// ---------------------------------------------------------------------------

// R(m, l, b) = 1 iff some tree has exactly m nodes, at most l layers, and
// exactly b root branches.
class FeasibilityTable {
public:
  FeasibilityTable(int max_size, int max_depth, int max_branch)
      : m_(max_size), l_(max_depth), k_(max_branch) {
    if (m_ < 1 || l_ < 1 || k_ < 0) throw Error("FeasibilityTable: bad dimensions");
    table_.assign(static_cast<std::size_t>(m_) * static_cast<std::size_t>(l_) *
                      static_cast<std::size_t>(k_ + 1),
                  0);
    for (int l = 1; l <= l_; ++l) set(1, l, 0, 1);
    for (int m = 2; m <= m_; ++m) {
      for (int l = 2; l <= l_; ++l) {
        if (k_ >= 1) {
          int any = 0;
          for (int j = 0; j <= k_; ++j) any = std::max(any, get(m - 1, l - 1, j));
          set(m, l, 1, any);
        }
        for (int b = 2; b <= k_; ++b) {
          int ok = 0;
          for (int y = 1; y <= m - 1 && !ok; ++y) {
            if (!get(y, l, b - 1)) continue;
            for (int j = 0; j <= k_; ++j) {
              if (get(m - y, l - 1, j)) {
                ok = 1;
                break;
              }
            }
          }
          set(m, l, b, ok);
        }
      }
    }
  }

  bool feasible(int m, int l, int b) const {
    if (m < 1 || m > m_ || l < 1 || l > l_ || b < 0 || b > k_) return false;
    return get(m, l, b) != 0;
  }

private:
  std::size_t idx(int m, int l, int b) const {
    return (static_cast<std::size_t>(m - 1) * static_cast<std::size_t>(l_) +
            static_cast<std::size_t>(l - 1)) *
               static_cast<std::size_t>(k_ + 1) +
           static_cast<std::size_t>(b);
  }
  int get(int m, int l, int b) const { return table_[idx(m, l, b)]; }
  void set(int m, int l, int b, int v) { table_[idx(m, l, b)] = static_cast<char>(v); }

  int m_, l_, k_;
  std::vector<char> table_;
};

inline FeasibilityTable feasibility_table(int max_size, int max_depth, int max_branch) {
  return FeasibilityTable(max_size, max_depth, max_branch);
}

// ---------------------------------------------------------------------------
// Bounded-depth DP (T table with backpointers)
// ---------------------------------------------------------------------------

// One sweep serves every (n <= M, d <= L) query, which is what the grid
// optimizer relies on.
class BoundedPlanTable {
public:
  BoundedPlanTable(int max_size, int max_depth, const AcceptanceVector& p, int kmax = -1)
      : m_(max_size), l_(max_depth), k_(std::min(detail::resolve_kmax(kmax, p),
                                                 std::max(max_size - 1, 0))) {
    if (m_ < 1 || l_ < 1) throw Error("BoundedPlanTable: bad dimensions");
    const double ninf = -std::numeric_limits<double>::infinity();
    t_.assign(cells(), ninf);
    back_y_.assign(cells(), 0);
    back_j_.assign(cells(), 0);
    for (int l = 1; l <= l_; ++l) t(1, l, 0) = 1.0;

    for (int m = 2; m <= m_; ++m) {
      for (int l = 2; l <= l_; ++l) {
        if (k_ >= 1) {
          const auto [bv, bj] = best_branch(m - 1, l - 1);
          if (bv > ninf) {
            t(m, l, 1) = 1.0 + p[1] * bv;
            back_j(m, l, 1) = bj;
          }
        }
        for (int b = 2; b <= k_; ++b) {
          double best = ninf;
          int best_y = 0, best_j = 0;
          for (int y = b; y <= m - 1; ++y) {
            const double left = t(y, l, b - 1);
            if (!(left > ninf)) continue;
            const auto [bv, bj] = best_branch(m - y, l - 1);
            if (!(bv > ninf)) continue;
            const double cand = left + p[b] * bv;
            if (cand > best) {
              best = cand;
              best_y = y;
              best_j = bj;
            }
          }
          if (best > ninf) {
            t(m, l, b) = best;
            back_y(m, l, b) = best_y;
            back_j(m, l, b) = best_j;
          }
        }
      }
    }

    // G(n, l) = max_{m <= n, b} T(m, l, b), with argmaxes for reconstruction.
    best_value_.assign(static_cast<std::size_t>(l_) * static_cast<std::size_t>(m_ + 1), ninf);
    best_m_.assign(best_value_.size(), 0);
    best_b_.assign(best_value_.size(), 0);
    for (int l = 1; l <= l_; ++l) {
      double run = ninf;
      int run_m = 0, run_b = 0;
      for (int n = 1; n <= m_; ++n) {
        for (int b = 0; b <= k_; ++b) {
          if (t(n, l, b) > run) {
            run = t(n, l, b);
            run_m = n;
            run_b = b;
          }
        }
        best_value_[g_idx(n, l)] = run;
        best_m_[g_idx(n, l)] = run_m;
        best_b_[g_idx(n, l)] = run_b;
      }
    }
  }

  int max_size() const { return m_; }
  int max_depth() const { return l_; }
  int kmax() const { return k_; }

  double table_value(int m, int l, int b) const {
    if (m < 1 || m > m_ || l < 1 || l > l_ || b < 0 || b > k_) {
      return -std::numeric_limits<double>::infinity();
    }
    return t_[idx(m, l, b)];
  }

  // Best F over trees of size <= n with at most `depth` layers.
  double best_value(int n, int depth) const {
    check_query(n, depth);
    return best_value_[g_idx(n, depth)];
  }

  PlanResult plan(int n, int depth) const {
    check_query(n, depth);
    const int m = best_m_[g_idx(n, depth)];
    const int b = best_b_[g_idx(n, depth)];
    if (m == 0) throw Infeasible("plan: no tree satisfies the constraints");
    detail::TreeSink sink;
    emit(m, depth, b, -1, 0, sink);
    return {best_value(n, depth), sink.finish(), m};
  }

private:
  std::size_t cells() const {
    return static_cast<std::size_t>(m_) * static_cast<std::size_t>(l_) *
           static_cast<std::size_t>(k_ + 1);
  }
  std::size_t idx(int m, int l, int b) const {
    return (static_cast<std::size_t>(m - 1) * static_cast<std::size_t>(l_) +
            static_cast<std::size_t>(l - 1)) *
               static_cast<std::size_t>(k_ + 1) +
           static_cast<std::size_t>(b);
  }
  std::size_t g_idx(int n, int l) const {
    return static_cast<std::size_t>(l - 1) * static_cast<std::size_t>(m_ + 1) +
           static_cast<std::size_t>(n);
  }
  double& t(int m, int l, int b) { return t_[idx(m, l, b)]; }
  double t(int m, int l, int b) const { return t_[idx(m, l, b)]; }
  int& back_y(int m, int l, int b) { return back_y_[idx(m, l, b)]; }
  int& back_j(int m, int l, int b) { return back_j_[idx(m, l, b)]; }

  void check_query(int n, int depth) const {
    if (n < 1 || n > m_ || depth < 1 || depth > l_) {
      throw Error("plan: query outside table dimensions");
    }
  }

  // max_j T(m, l, j), preferring the smaller branch count on ties.
  std::pair<double, int> best_branch(int m, int l) const {
    double best = -std::numeric_limits<double>::infinity();
    int best_j = 0;
    for (int j = 0; j <= k_; ++j) {
      if (t(m, l, j) > best) {
        best = t(m, l, j);
        best_j = j;
      }
    }
    return {best, best_j};
  }

  void emit(int m, int l, int b, int parent, int rank, detail::TreeSink& sink) const {
    if (b == 0) {
      sink.add(parent, rank);
      return;
    }
    if (b == 1) {
      const int root = sink.add(parent, rank);
      emit(m - 1, l - 1, back_j_[idx(m, l, 1)], root, 1, sink);
      return;
    }
    const int y = back_y_[idx(m, l, b)];
    const int before = static_cast<int>(sink.parents.size());
    emit(y, l, b - 1, parent, rank, sink);
    const int root = before;  // emit() creates this subtree's root first
    emit(m - y, l - 1, back_j_[idx(m, l, b)], root, b, sink);
  }

  int m_, l_, k_;
  std::vector<double> t_;
  std::vector<int> back_y_;
  std::vector<int> back_j_;
  std::vector<double> best_value_;
  std::vector<int> best_m_;
  std::vector<int> best_b_;
};

// Best tree with at most n nodes and at most `depth` layers (root-only tree
// has depth 1).
inline PlanResult best_tree_bounded(int n, int depth, const AcceptanceVector& p,
                                    int kmax = -1) {
  return BoundedPlanTable(n, depth, p, kmax).plan(n, depth);
}

// ---------------------------------------------------------------------------
// Brute-force enumeration oracle
// ---------------------------------------------------------------------------

namespace detail {

struct Shape {
  std::vector<int> kids;  // indices into the arena
};

struct ShapeArena {
  std::vector<Shape> shapes;
  // (size, layers) -> shapes with exactly `size` nodes and <= `layers` layers
  std::map<std::pair<int, int>, std::vector<int>> memo;
  int kmax;

  const std::vector<int>& enumerate(int size, int layers) {
    const auto key = std::make_pair(size, layers);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::vector<int> out;
    if (layers >= 1) {
      if (size == 1) {
        shapes.push_back(Shape{});
        out.push_back(static_cast<int>(shapes.size()) - 1);
      } else if (layers >= 2) {
        const int max_b = std::min(kmax, size - 1);
        std::vector<int> parts;
        for (int b = 1; b <= max_b; ++b) {
          parts.assign(static_cast<std::size_t>(b), 0);
          compose(size - 1, b, 0, layers - 1, parts, out);
        }
      }
    }
    return memo.emplace(key, std::move(out)).first->second;
  }

private:
  // Distributes `remaining` nodes over branches [at..b), then takes the
  // cartesian product of per-branch shapes.
  void compose(int remaining, int b, int at, int sub_layers, std::vector<int>& parts,
               std::vector<int>& out) {
    if (at == b - 1) {
      parts[static_cast<std::size_t>(at)] = remaining;
      product(parts, sub_layers, 0, {}, out);
      return;
    }
    for (int take = 1; take <= remaining - (b - 1 - at); ++take) {
      parts[static_cast<std::size_t>(at)] = take;
      compose(remaining - take, b, at + 1, sub_layers, parts, out);
    }
  }

  void product(const std::vector<int>& parts, int sub_layers, std::size_t at,
               std::vector<int> chosen, std::vector<int>& out) {
    if (at == parts.size()) {
      shapes.push_back(Shape{std::move(chosen)});
      out.push_back(static_cast<int>(shapes.size()) - 1);
      return;
    }
    // enumerate() may reallocate the memo vectors; copy the index list.
    const std::vector<int> options = enumerate(parts[at], sub_layers);
    for (int opt : options) {
      auto next = chosen;
      next.push_back(opt);
      product(parts, sub_layers, at + 1, std::move(next), out);
    }
  }
};

inline double shape_value(const ShapeArena& arena, int shape, const AcceptanceVector& p) {
  double v = 1.0;
  const auto& kids = arena.shapes[static_cast<std::size_t>(shape)].kids;
  for (std::size_t i = 0; i < kids.size(); ++i) {
    v += p[static_cast<int>(i) + 1] * shape_value(arena, kids[i], p);
  }
  return v;
}

inline void shape_emit(const ShapeArena& arena, int shape, int parent, int rank,
                       TreeSink& sink) {
  const int node = sink.add(parent, rank);
  const auto& kids = arena.shapes[static_cast<std::size_t>(shape)].kids;
  for (std::size_t i = 0; i < kids.size(); ++i) {
    shape_emit(arena, kids[i], node, static_cast<int>(i) + 1, sink);
  }
}

}  // namespace detail

// Enumerates every rooted tree with contiguous child ranks, size <= n,
// at most kmax children per node, and optionally at most `depth` layers;
// returns the argmax of F. Exact but exponential; guarded at n <= 9.
inline PlanResult brute_force_best_tree(int n, const AcceptanceVector& p, int kmax = -1,
                                        std::optional<int> depth = std::nullopt) {
  if (n < 1) throw Error("brute_force_best_tree: budget must be >= 1");
  if (n > 9) throw TooLarge("brute_force_best_tree: budget " + std::to_string(n) +
                            " exceeds the enumeration limit of 9");
  const int k = detail::resolve_kmax(kmax, p);
  const int layers = depth.value_or(n);
  if (layers < 1) throw Error("brute_force_best_tree: depth must be >= 1");

  detail::ShapeArena arena;
  arena.kmax = k;
  double best = -std::numeric_limits<double>::infinity();
  int best_shape = -1;
  int best_size = 0;
  for (int size = 1; size <= n; ++size) {
    for (int s : arena.enumerate(size, layers)) {
      const double v = detail::shape_value(arena, s, p);
      if (v > best) {
        best = v;
        best_shape = s;
        best_size = size;
      }
    }
  }
  detail::TreeSink sink;
  detail::shape_emit(arena, best_shape, -1, 0, sink);
  return {best, sink.finish(), best_size};
}

// ---------------------------------------------------------------------------
// Handcrafted structures and their ceilings
// ---------------------------------------------------------------------------

enum class StructureKind { kSequence, kIndependentSequences, kBinary, kKAry };

inline std::optional<StructureKind> parse_structure_kind(std::string_view name) {
  if (name == "sequence") return StructureKind::kSequence;
  if (name == "k_independent") return StructureKind::kIndependentSequences;
  if (name == "binary") return StructureKind::kBinary;
  if (name == "k_ary") return StructureKind::kKAry;
  return std::nullopt;
}

// Closed-form ceilings on expected generated tokens per step for the
// handcrafted structures; P with unit mass makes the bound +inf.
inline double structure_upper_bound(StructureKind kind, const AcceptanceVector& p, int k = 1) {
  const auto inv = [](double denom) {
    return denom <= 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / denom;
  };
  switch (kind) {
    case StructureKind::kSequence:
      return inv(1.0 - p.prefix_sum(1));
    case StructureKind::kIndependentSequences: {
      if (k < 1 || k > static_cast<int>(p.max_rank())) {
        throw RankOutOfRange("structure_upper_bound: k outside acceptance vector");
      }
      const double denom = 1.0 - p.prefix_sum(1);
      if (denom <= 0.0) return std::numeric_limits<double>::infinity();
      return 1.0 + p.prefix_sum(k) / denom;
    }
    case StructureKind::kBinary:
      if (p.max_rank() < 2) {
        throw RankOutOfRange("structure_upper_bound: binary needs two acceptance entries");
      }
      return inv(1.0 - p.prefix_sum(2));
    case StructureKind::kKAry:
      if (k < 1 || k > static_cast<int>(p.max_rank())) {
        throw RankOutOfRange("structure_upper_bound: k outside acceptance vector");
      }
      return inv(1.0 - p.prefix_sum(k));
  }
  throw Error("structure_upper_bound: unknown structure");
}

// The handcrafted topology of size <= n: a chain, k chains of length
// floor((n-1)/k) branching from the root, or a k-ary tree filled
// breadth-first to exactly n nodes.
inline TreeTopology fixed_structure_topology(StructureKind kind, int n, int k = 1) {
  if (n < 1) throw Error("fixed_structure_topology: size must be >= 1");
  detail::TreeSink sink;
  switch (kind) {
    case StructureKind::kSequence: {
      int prev = sink.add(-1, 0);
      for (int i = 1; i < n; ++i) prev = sink.add(prev, 1);
      break;
    }
    case StructureKind::kIndependentSequences: {
      if (k < 1) throw Error("fixed_structure_topology: k must be >= 1");
      const int root = sink.add(-1, 0);
      const int len = (n - 1) / k;
      for (int i = 1; i <= k && len > 0; ++i) {
        int prev = sink.add(root, i);
        for (int j = 1; j < len; ++j) prev = sink.add(prev, 1);
      }
      break;
    }
    case StructureKind::kBinary:
    case StructureKind::kKAry: {
      const int arity = kind == StructureKind::kBinary ? 2 : k;
      if (arity < 1) throw Error("fixed_structure_topology: k must be >= 1");
      sink.add(-1, 0);
      std::vector<int> kid_count(static_cast<std::size_t>(n), 0);
      int attach = 0;
      for (int i = 1; i < n; ++i) {
        while (kid_count[static_cast<std::size_t>(attach)] == arity) ++attach;
        const int rank = ++kid_count[static_cast<std::size_t>(attach)];
        sink.add(attach, rank);
      }
      break;
    }
  }
  return sink.finish();
}

// Exact F of the handcrafted structure (never exceeds the matching
// structure_upper_bound).
inline double fixed_structure_value(StructureKind kind, int n, const AcceptanceVector& p,
                                    int k = 1) {
  return expected_tokens(fixed_structure_topology(kind, n, k), p);
}

}  // namespace sequoia
