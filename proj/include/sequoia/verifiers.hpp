#pragma once

// Node-level sampling/verification algorithms and the recursive tree
// verification loop.
//
//   - sequoia_node_verify:   without-replacement speculation; on rejection
//                            the residual shrinks and the drafted token is
//                            removed from the draft distribution, switching
//                            to uniform-over-non-rejected once the draft
//                            support is exhausted.
//   - specinfer_node_verify: i.i.d. speculation; the draft distribution is
//                            never modified.
//   - topk_node_verify:      samples from the target and accepts on a hit
//                            among the speculated children.
//
// exact_node_distribution enumerates every draw sequence and accept/reject
// branch with the uniform thresholds integrated analytically; it is the
// oracle the distribution-preservation and robustness claims are checked
// against.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sequoia/categorical.hpp"
#include "sequoia/errors.hpp"
#include "sequoia/rng.hpp"
#include "sequoia/toylm.hpp"
#include "sequoia/tree.hpp"

namespace sequoia {

enum class VerifierKind { kSequoia, kSpecInfer, kTopKNaive };

inline std::optional<VerifierKind> parse_verifier(std::string_view name) {
  if (name == "sequoia") return VerifierKind::kSequoia;
  if (name == "specinfer") return VerifierKind::kSpecInfer;
  if (name == "topk") return VerifierKind::kTopKNaive;
  return std::nullopt;
}

inline std::string_view verifier_name(VerifierKind kind) {
  switch (kind) {
    case VerifierKind::kSequoia: return "sequoia";
    case VerifierKind::kSpecInfer: return "specinfer";
    case VerifierKind::kTopKNaive: return "topk";
  }
  return "?";
}

// Outcome of verifying one node's speculated children. accepted_child_rank
// is 1-based; nullopt means the token came from the residual (or target),
// not from a speculated child.
struct NodeOutcome {
  TokenId accepted = 0;
  std::optional<int> accepted_child_rank;
  int draws_used = 0;
};

namespace detail {

inline void check_same_vocab(const Categorical& p, const Categorical& q) {
  if (p.vocab_size() != q.vocab_size()) {
    throw Error("verify: draft/target vocabulary mismatch");
  }
}

inline void check_children(std::span<const TokenId> children, std::size_t vocab,
                           bool require_distinct) {
  std::vector<bool> seen(vocab, false);
  for (TokenId c : children) {
    if (c < 0 || static_cast<std::size_t>(c) >= vocab) {
      throw MismatchedChildren("child token out of vocabulary");
    }
    if (require_distinct) {
      if (seen[static_cast<std::size_t>(c)]) {
        throw MismatchedChildren("children must be distinct");
      }
      seen[static_cast<std::size_t>(c)] = true;
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Node verifiers
// ---------------------------------------------------------------------------

// children must be the ordered without-replacement draws from `draft`
// (uniform-over-remaining once the draft support is exhausted).
inline NodeOutcome sequoia_node_verify(const Categorical& target, const Categorical& draft,
                                       std::span<const TokenId> children, Rng& rng) {
  detail::check_same_vocab(target, draft);
  detail::check_children(children, target.vocab_size(), /*require_distinct=*/true);
  const std::size_t vocab = target.vocab_size();

  std::vector<double> r = target.probs();
  std::vector<double> d = draft.probs();
  std::vector<TokenId> rejected;
  for (std::size_t i = 0; i < children.size(); ++i) {
    const TokenId x = children[i];
    const double dx = d[static_cast<std::size_t>(x)];
    if (dx <= 0.0) {
      throw MismatchedChildren("child " + std::to_string(x) +
                               " has zero draft probability at draw " + std::to_string(i + 1));
    }
    const double accept_p = std::min(1.0, r[static_cast<std::size_t>(x)] / dx);
    if (rng.uniform() < accept_p) {
      return {x, static_cast<int>(i) + 1, static_cast<int>(i) + 1};
    }
    // Rejected: shrink the residual, drop x from the draft.
    double rsum = 0.0;
    for (std::size_t t = 0; t < vocab; ++t) {
      r[t] = std::max(r[t] - d[t], 0.0);
      rsum += r[t];
    }
    if (rsum <= kDegenerateEps) {
      // R = D up to rounding: the rejection had probability 0 in exact
      // arithmetic, so the drafted token is accepted.
      return {x, static_cast<int>(i) + 1, static_cast<int>(i) + 1};
    }
    for (double& v : r) v /= rsum;

    rejected.push_back(x);
    d[static_cast<std::size_t>(x)] = 0.0;
    double dsum = 0.0;
    for (double v : d) dsum += v;
    if (dsum <= kDegenerateEps) {
      // Draft support exhausted: uniform over the non-rejected set.
      std::fill(d.begin(), d.end(), 1.0);
      for (TokenId t : rejected) d[static_cast<std::size_t>(t)] = 0.0;
      dsum = 0.0;
      for (double v : d) dsum += v;
      if (dsum <= 0.0) {
        throw Error("sequoia_node_verify: no tokens left while residual mass remains");
      }
    }
    for (double& v : d) v /= dsum;
  }
  Categorical residual_dist{std::vector<double>(r)};
  return {sample(residual_dist, rng), std::nullopt, static_cast<int>(children.size())};
}

// children are i.i.d. draws from `draft`; the draft distribution is never
// modified between iterations.
inline NodeOutcome specinfer_node_verify(const Categorical& target, const Categorical& draft,
                                         std::span<const TokenId> children, Rng& rng) {
  detail::check_same_vocab(target, draft);
  detail::check_children(children, target.vocab_size(), /*require_distinct=*/false);
  const std::size_t vocab = target.vocab_size();

  std::vector<double> r = target.probs();
  for (std::size_t i = 0; i < children.size(); ++i) {
    const TokenId x = children[i];
    const double dx = draft[x];
    const double rx = r[static_cast<std::size_t>(x)];
    const double accept_p = dx <= 0.0 ? (rx > 0.0 ? 1.0 : 0.0) : std::min(1.0, rx / dx);
    if (rng.uniform() < accept_p) {
      return {x, static_cast<int>(i) + 1, static_cast<int>(i) + 1};
    }
    double rsum = 0.0;
    for (std::size_t t = 0; t < vocab; ++t) {
      r[t] = std::max(r[t] - draft.probs()[t], 0.0);
      rsum += r[t];
    }
    if (rsum <= kDegenerateEps) {
      return {x, static_cast<int>(i) + 1, static_cast<int>(i) + 1};
    }
    for (double& v : r) v /= rsum;
  }
  Categorical residual_dist{std::vector<double>(r)};
  return {sample(residual_dist, rng), std::nullopt, static_cast<int>(children.size())};
}

// children are the k highest-probability draft tokens. Samples from the
// target and accepts on membership; the output distribution is trivially
// the target's.
inline NodeOutcome topk_node_verify(const Categorical& target,
                                    std::span<const TokenId> children, Rng& rng) {
  detail::check_children(children, target.vocab_size(), /*require_distinct=*/true);
  const TokenId x = sample(target, rng);
  for (std::size_t i = 0; i < children.size(); ++i) {
    if (children[i] == x) {
      return {x, static_cast<int>(i) + 1, static_cast<int>(children.size())};
    }
  }
  return {x, std::nullopt, static_cast<int>(children.size())};
}

inline NodeOutcome node_verify(VerifierKind kind, const Categorical& target,
                               const Categorical& draft, std::span<const TokenId> children,
                               Rng& rng) {
  switch (kind) {
    case VerifierKind::kSequoia: return sequoia_node_verify(target, draft, children, rng);
    case VerifierKind::kSpecInfer: return specinfer_node_verify(target, draft, children, rng);
    case VerifierKind::kTopKNaive: return topk_node_verify(target, children, rng);
  }
  throw Error("node_verify: unknown verifier kind");
}

// Draws the k child tokens a node speculates under each method: ordered
// without-replacement draws for Sequoia (continuing uniformly over the
// never-drawn tokens once the draft support runs out, matching the
// verifier's uniform substitution), i.i.d. draws for SpecInfer, and the k
// highest-probability tokens for top-k.
inline std::vector<TokenId> speculate_children(VerifierKind kind, const Categorical& draft,
                                               int k, Rng& rng) {
  if (k < 0) throw Error("speculate_children: k must be >= 0");
  const std::size_t vocab = draft.vocab_size();
  switch (kind) {
    case VerifierKind::kSequoia: {
      if (static_cast<std::size_t>(k) > vocab) {
        throw InsufficientSupport("speculate_children: k exceeds vocabulary");
      }
      const std::size_t in_support = std::min<std::size_t>(draft.support_size(),
                                                           static_cast<std::size_t>(k));
      std::vector<TokenId> out = sample_without_replacement(draft, in_support, rng);
      if (out.size() < static_cast<std::size_t>(k)) {
        std::vector<TokenId> rest;
        std::vector<bool> drawn(vocab, false);
        for (TokenId t : out) drawn[static_cast<std::size_t>(t)] = true;
        for (std::size_t t = 0; t < vocab; ++t) {
          if (!drawn[t]) rest.push_back(static_cast<TokenId>(t));
        }
        // Fisher-Yates: each tail draw is uniform over the remaining tokens.
        for (std::size_t i = 0; i + 1 < rest.size(); ++i) {
          const std::size_t j = i + static_cast<std::size_t>(rng.below(rest.size() - i));
          std::swap(rest[i], rest[j]);
        }
        out.insert(out.end(), rest.begin(),
                   rest.begin() + (static_cast<std::size_t>(k) - out.size()));
      }
      return out;
    }
    case VerifierKind::kSpecInfer: {
      std::vector<TokenId> out;
      out.reserve(static_cast<std::size_t>(k));
      for (int i = 0; i < k; ++i) out.push_back(sample(draft, rng));
      return out;
    }
    case VerifierKind::kTopKNaive: {
      if (static_cast<std::size_t>(k) > vocab) {
        throw InsufficientSupport("speculate_children: k exceeds vocabulary");
      }
      std::vector<std::pair<double, TokenId>> order;
      order.reserve(vocab);
      for (std::size_t t = 0; t < vocab; ++t) {
        order.emplace_back(-draft.probs()[t], static_cast<TokenId>(t));
      }
      std::sort(order.begin(), order.end());
      std::vector<TokenId> out;
      out.reserve(static_cast<std::size_t>(k));
      for (int i = 0; i < k; ++i) out.push_back(order[static_cast<std::size_t>(i)].second);
      return out;
    }
  }
  throw Error("speculate_children: unknown verifier kind");
}

// ---------------------------------------------------------------------------
// Tree verification
// ---------------------------------------------------------------------------

// One decoding step's yield: the accepted root-to-leaf token path plus the
// final residual/target sample. tokens_generated = |accepted_path| + 1.
struct VerifiedResult {
  std::vector<TokenId> accepted_path;
  TokenId bonus_token = 0;
  int tokens_generated = 1;
};

// Walks the speculated tree from the root, verifying each accepted node's
// children until a rejection or a leaf, then emits the bonus token. Per-node
// randomness comes from substreams keyed by node id, so the result does not
// depend on traversal bookkeeping.
inline VerifiedResult verify_tree(const TreeTopology& topology,
                                  std::span<const TokenId> node_tokens,
                                  std::span<const Categorical> draft_dists,
                                  std::span<const Categorical> target_dists,
                                  VerifierKind kind, Rng& rng) {
  if (node_tokens.size() != topology.size() || draft_dists.size() != topology.size() ||
      target_dists.size() != topology.size()) {
    throw TopologyMismatch("verify_tree: per-node data does not match topology size");
  }
  Rng base = rng.split();
  VerifiedResult result;
  int node = 0;
  for (;;) {
    Rng node_rng = base.child(static_cast<std::uint64_t>(node));
    const auto& child_nodes = topology.children(node);
    std::vector<TokenId> child_tokens;
    child_tokens.reserve(child_nodes.size());
    for (int c : child_nodes) child_tokens.push_back(node_tokens[static_cast<std::size_t>(c)]);

    const NodeOutcome outcome = node_verify(kind, target_dists[static_cast<std::size_t>(node)],
                                            draft_dists[static_cast<std::size_t>(node)],
                                            child_tokens, node_rng);
    if (!outcome.accepted_child_rank.has_value()) {
      result.bonus_token = outcome.accepted;
      break;
    }
    const int next = child_nodes[static_cast<std::size_t>(*outcome.accepted_child_rank - 1)];
    result.accepted_path.push_back(outcome.accepted);
    node = next;
  }
  result.tokens_generated = static_cast<int>(result.accepted_path.size()) + 1;
  return result;
}

// ---------------------------------------------------------------------------
// Sequence-based speculative decoding (the classic single-chain baseline)
// ---------------------------------------------------------------------------

struct SequenceDecodeResult {
  std::vector<TokenId> tokens;
  int steps = 0;
  std::vector<int> per_step_generated;
  double tokens_per_step() const {
    return steps == 0 ? 0.0
                      : static_cast<double>(tokens.size()) / static_cast<double>(steps);
  }
};

// Runs `num_steps` iterations of the accept/reject chain with residual
// sampling at the first rejection and a guaranteed bonus token per step.
inline SequenceDecodeResult sequence_spec_decode(const ToyLM& draft, const ToyLM& target,
                                                 std::span<const TokenId> prefix, int gamma,
                                                 int num_steps, Rng& rng) {
  if (gamma < 1) throw Error("sequence_spec_decode: gamma must be >= 1");
  if (draft.vocab() != target.vocab()) {
    throw Error("sequence_spec_decode: draft/target vocabulary mismatch");
  }
  SequenceDecodeResult result;
  std::vector<TokenId> ctx(prefix.begin(), prefix.end());
  for (int step = 0; step < num_steps; ++step) {
    Rng step_rng = rng.split();
    // Draft gamma tokens autoregressively.
    std::vector<TokenId> speculated;
    std::vector<TokenId> local = ctx;
    for (int i = 0; i < gamma; ++i) {
      const TokenId t = sample(draft.next_dist(local), step_rng);
      speculated.push_back(t);
      local.push_back(t);
    }
    // Accept the longest prefix that survives the ratio test.
    int accepted = 0;
    for (; accepted < gamma; ++accepted) {
      std::span<const TokenId> seen(local.data(), ctx.size() + static_cast<std::size_t>(accepted));
      const Categorical& p = target.next_dist(seen);
      const Categorical& q = draft.next_dist(seen);
      const TokenId x = speculated[static_cast<std::size_t>(accepted)];
      const double qx = q[x];
      const double accept_p = qx <= 0.0 ? (p[x] > 0.0 ? 1.0 : 0.0) : std::min(1.0, p[x] / qx);
      if (!(step_rng.uniform() < accept_p)) break;
    }
    for (int i = 0; i < accepted; ++i) ctx.push_back(speculated[static_cast<std::size_t>(i)]);

    TokenId bonus;
    if (accepted < gamma) {
      const Categorical& p = target.next_dist(ctx);
      const Categorical& q = draft.next_dist(ctx);
      if (auto res = residual(p, q)) {
        bonus = sample(*res, step_rng);
      } else {
        // Residual degenerate (p = q up to rounding): the rejection had
        // probability 0; keep the drafted token.
        bonus = speculated[static_cast<std::size_t>(accepted)];
      }
    } else {
      bonus = sample(target.next_dist(ctx), step_rng);
    }
    ctx.push_back(bonus);
    const int generated = accepted + 1;
    result.per_step_generated.push_back(generated);
    result.steps += 1;
    result.tokens.insert(result.tokens.end(), ctx.end() - generated, ctx.end());
  }
  return result;
}

// ---------------------------------------------------------------------------
// Exact node distribution (enumeration oracle)
// ---------------------------------------------------------------------------

struct NodeDistribution {
  Categorical output;
  // acceptance_by_rank[i] = P(first acceptance happens at child i+1).
  std::vector<double> acceptance_by_rank;
  double total_acceptance = 0.0;
};

namespace detail {

struct SequoiaEnumerator {
  int k = 0;
  std::size_t vocab = 0;
  std::size_t budget = 0;
  std::size_t visited = 0;
  std::vector<double> out;
  std::vector<double> acc;

  void run(double mass, std::vector<double> r, std::vector<double> d,
           std::uint64_t rejected, int iter) {
    if (++visited > budget) {
      throw TooLarge("exact_node_distribution: enumeration budget exceeded");
    }
    if (iter > k) {
      for (std::size_t t = 0; t < vocab; ++t) out[t] += mass * r[t];
      return;
    }
    for (std::size_t x = 0; x < vocab; ++x) {
      const double dx = d[x];
      if (dx <= 0.0) continue;
      const double accept_p = std::min(1.0, r[x] / dx);
      const double p_accept = mass * dx * accept_p;
      if (p_accept > 0.0) {
        out[x] += p_accept;
        acc[static_cast<std::size_t>(iter - 1)] += p_accept;
      }
      const double p_reject = mass * dx * (1.0 - accept_p);
      if (p_reject <= 0.0) continue;

      std::vector<double> r2(vocab);
      double rsum = 0.0;
      for (std::size_t t = 0; t < vocab; ++t) {
        r2[t] = std::max(r[t] - d[t], 0.0);
        rsum += r2[t];
      }
      if (rsum <= kDegenerateEps) {
        // Mirrors the runtime rule: rejection with a degenerate residual
        // accepts the drafted token.
        out[x] += p_reject;
        acc[static_cast<std::size_t>(iter - 1)] += p_reject;
        continue;
      }
      for (double& v : r2) v /= rsum;

      std::vector<double> d2 = d;
      d2[x] = 0.0;
      const std::uint64_t rejected2 = rejected | (std::uint64_t{1} << x);
      double dsum = 0.0;
      for (double v : d2) dsum += v;
      if (dsum <= kDegenerateEps) {
        for (std::size_t t = 0; t < vocab; ++t) {
          d2[t] = (rejected2 >> t) & 1 ? 0.0 : 1.0;
        }
        dsum = 0.0;
        for (double v : d2) dsum += v;
        if (dsum <= 0.0) {
          throw Error("exact_node_distribution: empty draw set with residual mass left");
        }
      }
      for (double& v : d2) v /= dsum;
      run(p_reject, std::move(r2), std::move(d2), rejected2, iter + 1);
    }
  }
};

}  // namespace detail

// Exhaustive enumeration of a single node's verification process: exact
// output distribution and unconditional per-rank acceptance probabilities.
// Feasible for small vocabularies (the recursion budget guards the rest).
inline NodeDistribution exact_node_distribution(const Categorical& target,
                                                const Categorical& draft, int k,
                                                VerifierKind kind,
                                                std::size_t state_budget = 1'000'000) {
  detail::check_same_vocab(target, draft);
  const std::size_t vocab = target.vocab_size();
  if (k < 0) throw Error("exact_node_distribution: k must be >= 0");
  if (static_cast<std::size_t>(k) > vocab) {
    throw Error("exact_node_distribution: k exceeds vocabulary");
  }
  if (vocab > 64) {
    throw TooLarge("exact_node_distribution: vocabulary too large to enumerate");
  }

  std::vector<double> out(vocab, 0.0);
  std::vector<double> acc(static_cast<std::size_t>(k), 0.0);

  switch (kind) {
    case VerifierKind::kSequoia: {
      detail::SequoiaEnumerator e;
      e.k = k;
      e.vocab = vocab;
      e.budget = state_budget;
      e.out.assign(vocab, 0.0);
      e.acc.assign(static_cast<std::size_t>(k), 0.0);
      e.run(1.0, target.probs(), draft.probs(), 0, 1);
      out = std::move(e.out);
      acc = std::move(e.acc);
      break;
    }
    case VerifierKind::kSpecInfer: {
      // The residual after i rejections does not depend on which tokens were
      // rejected, so the enumeration collapses to a linear recurrence.
      std::vector<double> r = target.probs();
      double reach = 1.0;
      for (int i = 1; i <= k && reach > 0.0; ++i) {
        double accept_total = 0.0;
        for (std::size_t t = 0; t < vocab; ++t) {
          const double a = std::min(draft.probs()[t], r[t]);
          out[t] += reach * a;
          accept_total += a;
        }
        acc[static_cast<std::size_t>(i - 1)] += reach * accept_total;

        std::vector<double> r2(vocab);
        double rsum = 0.0;
        for (std::size_t t = 0; t < vocab; ++t) {
          r2[t] = std::max(r[t] - draft.probs()[t], 0.0);
          rsum += r2[t];
        }
        if (rsum <= kDegenerateEps) {
          // Degenerate residual: remaining rejection mass accepts the drawn
          // token (runtime rule); it is at most kDegenerateEps anyway.
          for (std::size_t t = 0; t < vocab; ++t) {
            const double rej = reach * std::max(draft.probs()[t] - r[t], 0.0);
            out[t] += rej;
            acc[static_cast<std::size_t>(i - 1)] += rej;
          }
          reach = 0.0;
          break;
        }
        for (double& v : r2) v /= rsum;
        reach *= 1.0 - accept_total;
        r = std::move(r2);
      }
      if (reach > 0.0) {
        for (std::size_t t = 0; t < vocab; ++t) out[t] += reach * r[t];
      }
      break;
    }
    case VerifierKind::kTopKNaive: {
      std::vector<std::pair<double, TokenId>> order;
      order.reserve(vocab);
      for (std::size_t t = 0; t < vocab; ++t) {
        order.emplace_back(-draft.probs()[t], static_cast<TokenId>(t));
      }
      std::sort(order.begin(), order.end());
      out = target.probs();
      for (int i = 0; i < k; ++i) {
        acc[static_cast<std::size_t>(i)] =
            target[order[static_cast<std::size_t>(i)].second];
      }
      break;
    }
  }

  NodeDistribution result{Categorical(std::move(out)), std::move(acc), 0.0};
  for (double a : result.acceptance_by_rank) result.total_acceptance += a;
  return result;
}

}  // namespace sequoia
