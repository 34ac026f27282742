#pragma once

// Simulation laboratory: seedable draft/target model pairs with exact
// per-context divergence, acceptance-vector estimation, token-tree growth,
// end-to-end speculative decoding, and the scaling/speedup experiment
// runners. Everything is deterministic given (config, master seed);
// experiment cells carry derived seeds so thread count never changes
// results.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sequoia/categorical.hpp"
#include "sequoia/errors.hpp"
#include "sequoia/optimizer.hpp"
#include "sequoia/planner.hpp"
#include "sequoia/rng.hpp"
#include "sequoia/toylm.hpp"
#include "sequoia/tree.hpp"
#include "sequoia/verifiers.hpp"

namespace sequoia {

// Vocabularies up to this size are estimated by exhaustive enumeration
// instead of Monte Carlo.
inline constexpr int kExactVocabLimit = 8;

// ---------------------------------------------------------------------------
// Model pairs
// ---------------------------------------------------------------------------

struct ModelPairConfig {
  int vocab = 4;
  int order = 1;
  double divergence = 0.2;   // exact per-context TV distance draft <-> target
  double temperature = 1.0;  // sharpening: weights raised to 1/temperature
  std::uint64_t seed = 0;
};

struct ModelPair {
  ToyLM draft;
  ToyLM target;
  ModelPairConfig config;
};

namespace detail {

// Dirichlet(1)-style weights on `support`, sharpened by exponent
// 1/temperature; everything off-support is exactly zero.
inline std::vector<double> sharpened_dirichlet(std::size_t vocab,
                                               std::span<const TokenId> support,
                                               double temperature, Rng& rng) {
  std::vector<double> w(vocab, 0.0);
  double max_w = 0.0;
  for (TokenId t : support) {
    const double e = rng.exponential();
    w[static_cast<std::size_t>(t)] = e;
    max_w = std::max(max_w, e);
  }
  double sum = 0.0;
  for (TokenId t : support) {
    auto& v = w[static_cast<std::size_t>(t)];
    v = std::pow(v / max_w, 1.0 / temperature);
    sum += v;
  }
  for (TokenId t : support) w[static_cast<std::size_t>(t)] /= sum;
  return w;
}

}  // namespace detail

// Target conditionals live on a random half of the vocabulary; the draft is
// (1 - divergence) * target + divergence * noise with the noise supported on
// the complementary tokens, so TV(draft, target) equals the configured
// divergence exactly at every context.
inline ModelPair make_model_pair(const ModelPairConfig& config) {
  if (config.vocab < 1) throw Error("make_model_pair: vocab must be >= 1");
  if (config.order < 0) throw Error("make_model_pair: order must be >= 0");
  if (!(config.temperature > 0.0)) throw Error("make_model_pair: temperature must be > 0");
  if (!(config.divergence >= 0.0 && config.divergence <= 1.0)) {
    throw UnreachableDivergence("make_model_pair: divergence must lie in [0, 1]");
  }
  if (config.divergence > 0.0 && config.vocab < 2) {
    throw UnreachableDivergence(
        "make_model_pair: nonzero divergence needs at least two tokens");
  }
  std::size_t contexts = 1;
  for (int i = 0; i < config.order; ++i) {
    contexts *= static_cast<std::size_t>(config.vocab);
    if (contexts > (std::size_t{1} << 24)) {
      throw Error("make_model_pair: context table too large");
    }
  }

  const Rng master(config.seed);
  const std::size_t vocab = static_cast<std::size_t>(config.vocab);
  const double delta = config.divergence;

  auto build_pair_dist = [&](std::uint64_t salt) -> std::pair<Categorical, Categorical> {
    Rng rng = master.child(salt);
    std::vector<TokenId> perm(vocab);
    for (std::size_t t = 0; t < vocab; ++t) perm[t] = static_cast<TokenId>(t);
    for (std::size_t i = 0; i + 1 < vocab; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(vocab - i));
      std::swap(perm[i], perm[j]);
    }
    const std::size_t target_support = vocab < 2 ? 1 : (vocab + 1) / 2;
    std::span<const TokenId> target_tokens(perm.data(), target_support);
    std::span<const TokenId> noise_tokens(perm.data() + target_support,
                                          vocab - target_support);

    std::vector<double> target_w =
        detail::sharpened_dirichlet(vocab, target_tokens, config.temperature, rng);
    std::vector<double> draft_w(vocab, 0.0);
    if (delta > 0.0) {
      const std::vector<double> noise_w =
          detail::sharpened_dirichlet(vocab, noise_tokens, config.temperature, rng);
      for (std::size_t t = 0; t < vocab; ++t) {
        draft_w[t] = (1.0 - delta) * target_w[t] + delta * noise_w[t];
      }
    } else {
      draft_w = target_w;
    }
    return {Categorical(std::move(target_w)), Categorical(std::move(draft_w))};
  };

  std::vector<Categorical> target_table;
  std::vector<Categorical> draft_table;
  target_table.reserve(contexts);
  draft_table.reserve(contexts);
  for (std::size_t ctx = 0; ctx < contexts; ++ctx) {
    auto [t, d] = build_pair_dist(ctx);
    target_table.push_back(std::move(t));
    draft_table.push_back(std::move(d));
  }
  auto [marginal_t, marginal_d] = build_pair_dist(contexts);

  return ModelPair{
      ToyLM(config.order, config.vocab, std::move(draft_table), std::move(marginal_d)),
      ToyLM(config.order, config.vocab, std::move(target_table), std::move(marginal_t)),
      config};
}

// Mean TV distance between draft and target conditionals (all contexts plus
// the marginal).
inline double mean_pair_divergence(const ModelPair& pair) {
  double acc = tv_distance(pair.draft.marginal(), pair.target.marginal());
  const auto& dt = pair.draft.conditionals();
  const auto& tt = pair.target.conditionals();
  for (std::size_t i = 0; i < dt.size(); ++i) acc += tv_distance(dt[i], tt[i]);
  return acc / static_cast<double>(dt.size() + 1);
}

// ---------------------------------------------------------------------------
// Acceptance-vector estimation
// ---------------------------------------------------------------------------

// Least-squares slope of log r_k against log k, negated. Requires at least
// three strictly positive rejection rates; a zero rate means the cover was
// reached and the fit is degenerate.
inline double fit_power_law(std::span<const double> rejection) {
  for (std::size_t i = 0; i < rejection.size(); ++i) {
    if (!(rejection[i] > 0.0)) {
      throw DegenerateFit("fit_power_law: rejection rate hit zero at rank " +
                              std::to_string(i + 1),
                          static_cast<int>(i + 1));
    }
  }
  if (rejection.size() < 3) {
    throw Error("fit_power_law: need at least three points");
  }
  const std::size_t n = rejection.size();
  double sx = 0.0, sy = 0.0;
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = std::log(static_cast<double>(i + 1));
    ys[i] = std::log(rejection[i]);
    sx += xs[i];
    sy += ys[i];
  }
  const double mx = sx / static_cast<double>(n);
  const double my = sy / static_cast<double>(n);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (xs[i] - mx) * (ys[i] - my);
    den += (xs[i] - mx) * (xs[i] - mx);
  }
  return -num / den;
}

struct EstimationReport {
  // Mean unconditional acceptance probability per child rank (may be
  // non-monotone for individual model pairs).
  std::vector<double> acceptance;
  // r_k = 1 - sum_{i<=k} acceptance_i; nonincreasing.
  std::vector<double> rejection;
  // Across-context variance of the per-rank acceptance.
  std::vector<double> variance;
  // Evaluations contributing per rank.
  std::vector<long> samples;
  std::optional<double> power_law_exponent;
  std::optional<int> cover_rank;
  bool monotone = true;

  // Checked acceptance vector; throws if the estimate is non-monotone.
  AcceptanceVector monotone_vector() const { return AcceptanceVector(acceptance); }

  // Descending-sorted copy for planning on non-monotone estimates. Never
  // applied silently; callers opt in.
  AcceptanceVector sorted_vector() const {
    std::vector<double> sorted = acceptance;
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    return AcceptanceVector(std::move(sorted));
  }
};

// Per-rank acceptance probabilities under the positional acceptance
// abstraction, averaged over the trailing contexts of `prompts`. Exact
// (enumeration) for vocabularies up to kExactVocabLimit, Monte Carlo with
// `trials` node simulations per context otherwise.
inline EstimationReport estimate_acceptance_vector(const ToyLM& draft, const ToyLM& target,
                                                   VerifierKind kind,
                                                   std::span<const std::vector<TokenId>> prompts,
                                                   int kmax, int trials, Rng& rng) {
  if (draft.vocab() != target.vocab() || draft.order() != target.order()) {
    throw Error("estimate_acceptance_vector: draft/target shape mismatch");
  }
  if (kmax < 1 || kmax > draft.vocab()) {
    throw Error("estimate_acceptance_vector: kmax must lie in [1, vocab]");
  }
  if (prompts.empty()) throw Error("estimate_acceptance_vector: no prompts");
  const bool exact = draft.vocab() <= kExactVocabLimit;
  if (!exact && trials < 1) {
    throw Error("estimate_acceptance_vector: trials must be >= 1 for Monte Carlo");
  }

  const std::size_t ranks = static_cast<std::size_t>(kmax);
  std::vector<double> mean(ranks, 0.0), m2(ranks, 0.0);
  Rng base = rng.split();
  long count = 0;
  for (const auto& prompt : prompts) {
    const Categorical& p = target.next_dist(prompt);
    const Categorical& q = draft.next_dist(prompt);
    std::vector<double> a(ranks, 0.0);
    if (exact) {
      a = exact_node_distribution(p, q, kmax, kind).acceptance_by_rank;
    } else {
      Rng ctx_rng = base.child(static_cast<std::uint64_t>(count));
      std::vector<long> hits(ranks, 0);
      for (int trial = 0; trial < trials; ++trial) {
        const auto children = speculate_children(kind, q, kmax, ctx_rng);
        const NodeOutcome outcome = node_verify(kind, p, q, children, ctx_rng);
        if (outcome.accepted_child_rank.has_value()) {
          ++hits[static_cast<std::size_t>(*outcome.accepted_child_rank - 1)];
        }
      }
      for (std::size_t i = 0; i < ranks; ++i) {
        a[i] = static_cast<double>(hits[i]) / static_cast<double>(trials);
      }
    }
    ++count;
    for (std::size_t i = 0; i < ranks; ++i) {
      const double delta = a[i] - mean[i];
      mean[i] += delta / static_cast<double>(count);
      m2[i] += delta * (a[i] - mean[i]);
    }
  }

  EstimationReport report;
  report.acceptance = mean;
  report.variance.assign(ranks, 0.0);
  report.samples.assign(ranks, exact ? count : count * trials);
  for (std::size_t i = 0; i < ranks; ++i) {
    report.variance[i] = m2[i] / static_cast<double>(count);
  }
  double cum = 0.0;
  report.rejection.resize(ranks);
  for (std::size_t i = 0; i < ranks; ++i) {
    cum += mean[i];
    report.rejection[i] = std::max(0.0, 1.0 - cum);
  }
  report.monotone = true;
  for (std::size_t i = 1; i < ranks; ++i) {
    if (mean[i] > mean[i - 1]) report.monotone = false;
  }
  try {
    report.power_law_exponent = fit_power_law(report.rejection);
  } catch (const DegenerateFit& e) {
    report.cover_rank = e.cover_rank;
  } catch (const Error&) {
    // Too few points to fit; leave both fields empty.
  }
  return report;
}

// Trailing contexts drawn from a seeded target-model rollout; the standard
// way to produce estimation prompts.
inline std::vector<std::vector<TokenId>> rollout_prompts(const ToyLM& model, int count,
                                                         Rng& rng) {
  if (count < 1) throw Error("rollout_prompts: count must be >= 1");
  const auto stream = model.generate({}, count + model.order(), rng);
  std::vector<std::vector<TokenId>> prompts;
  prompts.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const auto end = stream.begin() + model.order() + i;
    const auto begin = end - model.order();
    prompts.emplace_back(begin, end);
  }
  return prompts;
}

// ---------------------------------------------------------------------------
// Tree growth and end-to-end decoding
// ---------------------------------------------------------------------------

struct GrownTree {
  // tokens[0] anchors the prefix tail and is never verified.
  std::vector<TokenId> tokens;
  std::vector<Categorical> draft_dists;
  int draft_passes = 0;  // one per speculated layer = depth(topology)
};

// Fills the topology layer by layer from the draft model: each node's
// children are drawn by the kind's speculation rule from the draft
// conditional at that node's prefix.
inline GrownTree grow_tree(const ToyLM& draft, std::span<const TokenId> prefix,
                           const TreeTopology& topology, VerifierKind kind, Rng& rng) {
  const std::size_t n = topology.size();
  GrownTree grown;
  grown.tokens.assign(n, prefix.empty() ? TokenId{0} : prefix.back());
  grown.draft_passes = topology.depth();

  Rng base = rng.split();
  std::vector<std::vector<TokenId>> contexts(n);
  contexts[0].assign(prefix.begin(), prefix.end());
  grown.draft_dists.reserve(n);
  for (std::size_t v = 0; v < n; ++v) {
    const Categorical& q = draft.next_dist(contexts[v]);
    grown.draft_dists.push_back(q);
    const auto& kids = topology.children(static_cast<int>(v));
    if (kids.empty()) continue;
    if (kids.size() > static_cast<std::size_t>(draft.vocab())) {
      throw InsufficientSupport("grow_tree: node has more children than the vocabulary");
    }
    Rng node_rng = base.child(v);
    const auto child_tokens =
        speculate_children(kind, q, static_cast<int>(kids.size()), node_rng);
    for (std::size_t i = 0; i < kids.size(); ++i) {
      const auto c = static_cast<std::size_t>(kids[i]);
      grown.tokens[c] = child_tokens[i];
      contexts[c] = contexts[v];
      contexts[c].push_back(child_tokens[i]);
    }
  }
  return grown;
}

// Target conditionals at every node of a grown tree (one "verify pass").
inline std::vector<Categorical> target_dists_for(const ToyLM& target,
                                                 std::span<const TokenId> prefix,
                                                 const TreeTopology& topology,
                                                 std::span<const TokenId> node_tokens) {
  const std::size_t n = topology.size();
  std::vector<std::vector<TokenId>> contexts(n);
  contexts[0].assign(prefix.begin(), prefix.end());
  std::vector<Categorical> dists;
  dists.reserve(n);
  for (std::size_t v = 0; v < n; ++v) {
    dists.push_back(target.next_dist(contexts[v]));
    for (int c : topology.children(static_cast<int>(v))) {
      contexts[static_cast<std::size_t>(c)] = contexts[v];
      contexts[static_cast<std::size_t>(c)].push_back(node_tokens[static_cast<std::size_t>(c)]);
    }
  }
  return dists;
}

struct DecodeStats {
  std::vector<TokenId> tokens;
  int steps = 0;
  std::vector<int> per_step_generated;
  double tokens_per_step = 0.0;
};

// Exactly `num_steps` grow + verify iterations.
inline DecodeStats run_decode_steps(const ToyLM& draft, const ToyLM& target,
                                    const TreeTopology& topology, VerifierKind kind,
                                    std::span<const TokenId> prompt, int num_steps, Rng& rng) {
  if (num_steps < 1) throw Error("run_decode_steps: need at least one step");
  DecodeStats stats;
  std::vector<TokenId> ctx(prompt.begin(), prompt.end());
  for (int step = 0; step < num_steps; ++step) {
    const GrownTree grown = grow_tree(draft, ctx, topology, kind, rng);
    const auto targets = target_dists_for(target, ctx, topology, grown.tokens);
    const VerifiedResult result =
        verify_tree(topology, grown.tokens, grown.draft_dists, targets, kind, rng);
    for (TokenId t : result.accepted_path) ctx.push_back(t);
    ctx.push_back(result.bonus_token);
    stats.tokens.insert(stats.tokens.end(), ctx.end() - result.tokens_generated, ctx.end());
    stats.per_step_generated.push_back(result.tokens_generated);
    stats.steps += 1;
  }
  stats.tokens_per_step =
      static_cast<double>(stats.tokens.size()) / static_cast<double>(stats.steps);
  return stats;
}

// Grow + verify until at least `length` tokens have been generated. The
// emitted stream is distributed exactly as autoregressive target sampling.
inline DecodeStats run_decode(const ToyLM& draft, const ToyLM& target,
                              const TreeTopology& topology, VerifierKind kind,
                              std::span<const TokenId> prompt, int length, Rng& rng) {
  if (length < 1) throw Error("run_decode: length must be >= 1");
  DecodeStats stats;
  std::vector<TokenId> ctx(prompt.begin(), prompt.end());
  while (static_cast<int>(stats.tokens.size()) < length) {
    const GrownTree grown = grow_tree(draft, ctx, topology, kind, rng);
    const auto targets = target_dists_for(target, ctx, topology, grown.tokens);
    const VerifiedResult result =
        verify_tree(topology, grown.tokens, grown.draft_dists, targets, kind, rng);
    for (TokenId t : result.accepted_path) ctx.push_back(t);
    ctx.push_back(result.bonus_token);
    stats.tokens.insert(stats.tokens.end(), ctx.end() - result.tokens_generated, ctx.end());
    stats.per_step_generated.push_back(result.tokens_generated);
    stats.steps += 1;
  }
  stats.tokens_per_step =
      static_cast<double>(stats.tokens.size()) / static_cast<double>(stats.steps);
  return stats;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct StructureSpec {
  bool is_sequoia = true;  // planned by the DP rather than handcrafted
  StructureKind kind = StructureKind::kSequence;
  int k = 1;
  std::string label = "sequoia";
};

// "sequoia" | "sequence" | "binary" | "k_independent:K" | "k_ary:K"
inline StructureSpec parse_structure(std::string_view text) {
  StructureSpec spec;
  spec.label = std::string(text);
  if (text == "sequoia") {
    spec.is_sequoia = true;
    return spec;
  }
  spec.is_sequoia = false;
  std::string_view head = text;
  int k = 1;
  if (const auto colon = text.find(':'); colon != std::string_view::npos) {
    head = text.substr(0, colon);
    const std::string tail(text.substr(colon + 1));
    try {
      std::size_t used = 0;
      k = std::stoi(tail, &used);
      if (used != tail.size() || k < 1) throw std::invalid_argument(tail);
    } catch (const std::exception&) {
      throw ParseError("structure: bad branch count in '" + std::string(text) + "'");
    }
  }
  const auto kind = parse_structure_kind(head);
  if (!kind.has_value()) {
    throw ParseError("structure: unknown kind '" + std::string(text) + "'");
  }
  if ((*kind == StructureKind::kIndependentSequences || *kind == StructureKind::kKAry) &&
      text.find(':') == std::string_view::npos) {
    throw ParseError("structure: '" + std::string(head) + "' needs a :K suffix");
  }
  spec.kind = *kind;
  spec.k = k;
  return spec;
}

struct ExperimentRow {
  int budget = 1;
  std::string structure;
  double tokens_per_step = 0.0;
  double ci95 = 0.0;
  double simulated_speedup = 0.0;
  // Extra diagnostics (not part of the CSV contract).
  int tree_size = 1;
  int tree_depth = 0;  // draft passes
  double predicted_tokens = 1.0;
  double predicted_speedup = 1.0;
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;
  EstimationReport estimate;
};

namespace detail {

inline void parallel_for(int threads, std::size_t count,
                         const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const int workers = std::min<int>(threads, static_cast<int>(count));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = static_cast<std::size_t>(w); i < count;
           i += static_cast<std::size_t>(workers)) {
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

inline double ci95_of(std::span<const int> per_step) {
  if (per_step.size() < 2) return 0.0;
  double mean = 0.0;
  for (int v : per_step) mean += v;
  mean /= static_cast<double>(per_step.size());
  double var = 0.0;
  for (int v : per_step) var += (v - mean) * (v - mean);
  var /= static_cast<double>(per_step.size() - 1);
  return 1.96 * std::sqrt(var / static_cast<double>(per_step.size()));
}

inline ExperimentRow measure_cell(const ModelPair& pair, VerifierKind kind,
                                  const TreeTopology& topology, int budget,
                                  std::string label, int steps, const CostModel& cost,
                                  Rng cell_rng) {
  const DecodeStats stats =
      run_decode_steps(pair.draft, pair.target, topology, kind, {}, steps, cell_rng);
  ExperimentRow row;
  row.budget = budget;
  row.structure = std::move(label);
  row.tokens_per_step = stats.tokens_per_step;
  row.ci95 = ci95_of(stats.per_step_generated);
  row.tree_size = static_cast<int>(topology.size());
  row.tree_depth = topology.depth();
  row.simulated_speedup = speedup(cost, stats.tokens_per_step, row.tree_size, row.tree_depth);
  return row;
}

}  // namespace detail

// Tokens/step for every (budget, structure) cell. Sequoia cells are planned
// by the DP on the estimated (sorted) acceptance vector; the others use the
// handcrafted shapes. Cells are measured on derived seeds and aggregated in
// canonical (budget-major) order, so output is byte-stable for any thread
// count.
inline ExperimentResult scaling_experiment(const ModelPair& pair, VerifierKind kind,
                                           std::span<const int> budgets,
                                           std::span<const StructureSpec> structures,
                                           int steps, int kmax, int est_contexts, int est_trials,
                                           Rng& rng, const CostModel& cost = CostModel::flat(),
                                           int threads = 1) {
  if (budgets.empty() || structures.empty()) {
    throw Error("scaling_experiment: need at least one budget and structure");
  }
  if (!std::is_sorted(budgets.begin(), budgets.end())) {
    throw Error("scaling_experiment: budgets must be sorted");
  }
  if (steps < 2) throw Error("scaling_experiment: need at least two steps");

  Rng est_rng = rng.child(0x65737431);
  Rng prompt_rng = est_rng.child(1);
  const auto prompts = rollout_prompts(pair.target, est_contexts, prompt_rng);
  ExperimentResult result;
  result.estimate = estimate_acceptance_vector(pair.draft, pair.target, kind, prompts, kmax,
                                               est_trials, est_rng);
  const AcceptanceVector p = result.estimate.sorted_vector();

  const int max_budget = budgets.back();
  const UnboundedPlanTable table(max_budget, p);

  struct Cell {
    int budget;
    const StructureSpec* spec;
    TreeTopology topology;
    double predicted;
  };
  std::vector<Cell> cells;
  for (int budget : budgets) {
    for (const auto& spec : structures) {
      if (spec.is_sequoia) {
        PlanResult plan = table.plan(budget);
        cells.push_back({budget, &spec, std::move(plan.topology), plan.value});
      } else {
        TreeTopology topo = fixed_structure_topology(spec.kind, budget, spec.k);
        const double predicted = expected_tokens(topo, p);
        cells.push_back({budget, &spec, std::move(topo), predicted});
      }
    }
  }

  Rng base = rng.child(0x63656c6c);
  result.rows.resize(cells.size());
  detail::parallel_for(threads, cells.size(), [&](std::size_t i) {
    const Cell& cell = cells[i];
    ExperimentRow row = detail::measure_cell(pair, kind, cell.topology, cell.budget,
                                             cell.spec->label, steps, cost,
                                             base.child(static_cast<std::uint64_t>(i)));
    row.predicted_tokens = cell.predicted;
    row.predicted_speedup = speedup(cost, cell.predicted, row.tree_size, row.tree_depth);
    result.rows[i] = std::move(row);
  });
  return result;
}

// Simulated wall-clock speedups for budget-maximal trees plus the
// hardware-aware optimizer's pick (labelled "optimizer"). The optimizer's
// predicted speedup dominates every fixed-budget row by construction; the
// simulated columns carry Monte Carlo noise.
inline ExperimentResult speedup_experiment(const ModelPair& pair, VerifierKind kind,
                                           const CostModel& cost, std::span<const int> budgets,
                                           int steps, int kmax, int est_contexts, int est_trials,
                                           Rng& rng, int threads = 1) {
  if (budgets.empty()) throw Error("speedup_experiment: need at least one budget");
  if (!std::is_sorted(budgets.begin(), budgets.end())) {
    throw Error("speedup_experiment: budgets must be sorted");
  }
  if (steps < 2) throw Error("speedup_experiment: need at least two steps");

  Rng est_rng = rng.child(0x65737432);
  Rng prompt_rng = est_rng.child(1);
  const auto prompts = rollout_prompts(pair.target, est_contexts, prompt_rng);
  ExperimentResult result;
  result.estimate = estimate_acceptance_vector(pair.draft, pair.target, kind, prompts, kmax,
                                               est_trials, est_rng);
  const AcceptanceVector p = result.estimate.sorted_vector();

  const int max_budget = budgets.back();
  const UnboundedPlanTable table(max_budget, p);

  struct Cell {
    int budget;
    std::string label;
    TreeTopology topology;
    double predicted;
  };
  std::vector<Cell> cells;
  for (int budget : budgets) {
    PlanResult plan = table.plan(budget);
    cells.push_back({budget, "sequoia", std::move(plan.topology), plan.value});
  }
  OptimizerResult opt =
      optimize(p, cost, max_budget, std::max(1, max_budget - 1));
  cells.push_back({opt.size, "optimizer", std::move(opt.topology), opt.expected_tokens});

  Rng base = rng.child(0x73706565);
  result.rows.resize(cells.size());
  detail::parallel_for(threads, cells.size(), [&](std::size_t i) {
    const Cell& cell = cells[i];
    ExperimentRow row = detail::measure_cell(pair, kind, cell.topology, cell.budget, cell.label,
                                             steps, cost, base.child(static_cast<std::uint64_t>(i)));
    row.predicted_tokens = cell.predicted;
    row.predicted_speedup = speedup(cost, cell.predicted, row.tree_size, row.tree_depth);
    result.rows[i] = std::move(row);
  });
  return result;
}

}  // namespace sequoia
