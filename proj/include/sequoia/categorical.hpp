#pragma once

// Finite categorical distributions over dense token ids 0..V-1, residual
// arithmetic, and the sampling primitives (with and without replacement)
// that every verifier builds on. Values are immutable after construction
// and safe to share across threads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sequoia/errors.hpp"
#include "sequoia/rng.hpp"

namespace sequoia {

using TokenId = std::int32_t;

// Mass below this is treated as zero when normalizing.
inline constexpr double kDegenerateEps = 1e-12;
// Tolerance on sum-to-one at construction.
inline constexpr double kProbSumTolerance = 1e-9;

class Categorical {
public:
  explicit Categorical(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) {
      throw Error("Categorical: vocabulary must be nonempty");
    }
    double sum = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0)) {
        throw Error("Categorical: negative or NaN probability");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kProbSumTolerance) {
      throw Error("Categorical: probabilities sum to " + std::to_string(sum) +
                  ", expected 1 within 1e-9");
    }
  }

  std::size_t vocab_size() const { return probs_.size(); }
  double operator[](TokenId t) const { return probs_[static_cast<std::size_t>(t)]; }
  const std::vector<double>& probs() const { return probs_; }

  std::size_t support_size() const {
    return static_cast<std::size_t>(
        std::count_if(probs_.begin(), probs_.end(), [](double p) { return p > 0.0; }));
  }

  bool operator==(const Categorical& other) const { return probs_ == other.probs_; }

private:
  std::vector<double> probs_;
};

// Scales a nonnegative weight vector to unit mass. Throws DegenerateVector
// when the total mass is at or below kDegenerateEps; the caller owns the
// fallback rule (verifiers accept the current token, Alg-style uniform
// substitution, ...).
inline Categorical normalize(std::span<const double> weights) {
  if (weights.empty()) {
    throw Error("normalize: empty weight vector");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) {
      throw Error("normalize: negative or NaN weight");
    }
    sum += w;
  }
  if (sum <= kDegenerateEps) {
    throw DegenerateVector("normalize: total mass " + std::to_string(sum));
  }
  std::vector<double> out(weights.begin(), weights.end());
  for (double& w : out) w /= sum;
  return Categorical(std::move(out));
}

inline Categorical normalize(const std::vector<double>& weights) {
  return normalize(std::span<const double>(weights));
}

// Entrywise max(R - D, 0), renormalized. Empty when R <= D entrywise (up to
// the degeneracy epsilon), which in exact arithmetic happens only for R = D.
inline std::optional<Categorical> residual(const Categorical& r, const Categorical& d) {
  if (r.vocab_size() != d.vocab_size()) {
    throw Error("residual: vocabulary size mismatch");
  }
  std::vector<double> diff(r.vocab_size());
  double sum = 0.0;
  for (std::size_t i = 0; i < diff.size(); ++i) {
    diff[i] = std::max(r.probs()[i] - d.probs()[i], 0.0);
    sum += diff[i];
  }
  if (sum <= kDegenerateEps) {
    return std::nullopt;
  }
  for (double& w : diff) w /= sum;
  return Categorical(std::move(diff));
}

// Total variation distance, (1/2) * sum |P_i - Q_i|, in [0, 1].
inline double tv_distance(const Categorical& p, const Categorical& q) {
  if (p.vocab_size() != q.vocab_size()) {
    throw Error("tv_distance: vocabulary size mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < p.vocab_size(); ++i) {
    acc += std::abs(p.probs()[i] - q.probs()[i]);
  }
  return 0.5 * acc;
}

// One draw from dist.
inline TokenId sample(const Categorical& dist, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  TokenId last_positive = 0;
  for (std::size_t i = 0; i < dist.vocab_size(); ++i) {
    const double p = dist.probs()[i];
    if (p <= 0.0) continue;
    last_positive = static_cast<TokenId>(i);
    cum += p;
    if (u < cum) return last_positive;
  }
  // Rounding pushed the cumulative sum below u; the last positive atom wins.
  return last_positive;
}

// Ordered sample of m distinct tokens, distributed as sequential draws that
// remove the drawn token and renormalize. Implemented with exponential-sort
// keys (Exp(1)/w_i, ascending) so the whole sample costs one sort.
inline std::vector<TokenId> sample_without_replacement(const Categorical& dist,
                                                       std::size_t m, Rng& rng) {
  std::vector<std::pair<double, TokenId>> keys;
  keys.reserve(dist.vocab_size());
  for (std::size_t i = 0; i < dist.vocab_size(); ++i) {
    const double w = dist.probs()[i];
    if (w <= 0.0) continue;
    keys.emplace_back(rng.exponential() / w, static_cast<TokenId>(i));
  }
  if (m > keys.size()) {
    throw InsufficientSupport("sample_without_replacement: requested " +
                              std::to_string(m) + " tokens from support of size " +
                              std::to_string(keys.size()));
  }
  std::sort(keys.begin(), keys.end());
  std::vector<TokenId> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) out.push_back(keys[i].second);
  return out;
}

// Uniform distribution over the tokens of a V-sized vocabulary that are not
// in `excluded`.
inline Categorical uniform_over(std::size_t vocab, std::span<const TokenId> excluded) {
  std::vector<double> w(vocab, 1.0);
  for (TokenId t : excluded) {
    w[static_cast<std::size_t>(t)] = 0.0;
  }
  const double count =
      std::accumulate(w.begin(), w.end(), 0.0);
  if (count <= 0.0) {
    throw EmptySupport("uniform_over: excluded set covers the vocabulary");
  }
  for (double& x : w) x /= count;
  return Categorical(std::move(w));
}

inline Categorical uniform_over(std::size_t vocab, const std::vector<TokenId>& excluded) {
  return uniform_over(vocab, std::span<const TokenId>(excluded));
}

}  // namespace sequoia
