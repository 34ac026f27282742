#pragma once

// Shared test utilities: random instance generators, chi-square goodness of
// fit (regularized incomplete gamma implemented here, independent of the
// library), and the sequential-renormalization oracle for
// without-replacement sampling.

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "sequoia/categorical.hpp"
#include "sequoia/rng.hpp"
#include "sequoia/tree.hpp"

namespace testutil {

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

inline sequoia::Categorical random_categorical(std::size_t vocab, sequoia::Rng& rng) {
  std::vector<double> w(vocab);
  double sum = 0.0;
  for (auto& v : w) {
    v = rng.exponential();
    sum += v;
  }
  for (auto& v : w) v /= sum;
  return sequoia::Categorical(std::move(w));
}

// Random categorical whose support is exactly `support` tokens.
inline sequoia::Categorical random_categorical_support(std::size_t vocab, std::size_t support,
                                                       sequoia::Rng& rng) {
  std::vector<sequoia::TokenId> perm(vocab);
  for (std::size_t i = 0; i < vocab; ++i) perm[i] = static_cast<sequoia::TokenId>(i);
  for (std::size_t i = 0; i + 1 < vocab; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(vocab - i));
    std::swap(perm[i], perm[j]);
  }
  std::vector<double> w(vocab, 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < support; ++i) {
    // Bounded away from zero so the support is unambiguous.
    const double v = 0.05 + rng.exponential();
    w[static_cast<std::size_t>(perm[i])] = v;
    sum += v;
  }
  for (auto& v : w) v /= sum;
  return sequoia::Categorical(std::move(w));
}

// Random nonincreasing acceptance vector with sum <= 1.
inline sequoia::AcceptanceVector random_acceptance(std::size_t kmax, sequoia::Rng& rng) {
  std::vector<double> p(kmax);
  double sum = 0.0;
  for (auto& v : p) {
    v = rng.exponential();
    sum += v;
  }
  // Scale the total acceptance to a random level in (0, 1).
  const double mass = 0.2 + 0.75 * rng.uniform();
  for (auto& v : p) v = v / sum * mass;
  std::sort(p.begin(), p.end(), std::greater<double>());
  return sequoia::AcceptanceVector(std::move(p));
}

// Random canonical topology with n nodes built by sequential attachment.
inline sequoia::TreeTopology random_topology(int n, int kmax, sequoia::Rng& rng) {
  std::vector<int> parents{-1};
  std::vector<int> ranks{0};
  std::vector<int> child_count{0};
  for (int v = 1; v < n; ++v) {
    std::vector<int> eligible;
    for (int u = 0; u < v; ++u) {
      if (child_count[static_cast<std::size_t>(u)] < kmax) eligible.push_back(u);
    }
    const int parent = eligible[static_cast<std::size_t>(rng.below(eligible.size()))];
    parents.push_back(parent);
    ranks.push_back(++child_count[static_cast<std::size_t>(parent)]);
    child_count.push_back(0);
  }
  return sequoia::TreeTopology::canonicalized(parents, ranks);
}

// ---------------------------------------------------------------------------
// Chi-square goodness of fit
// ---------------------------------------------------------------------------

// Regularized upper incomplete gamma Q(a, x) by series/continued fraction
// (Numerical Recipes style).
inline double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) return 1.0;
  if (x == 0.0) return 1.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    // Series for P(a, x); Q = 1 - P.
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return 1.0 - sum * std::exp(-x + a * std::log(x) - gln);
  }
  // Lentz continued fraction for Q(a, x).
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - gln) * h;
}

// p-value of a chi-square statistic against expected counts; bins with
// expected count below 1e-9 must be empty.
inline double chi_square_p(const std::vector<long>& observed,
                           const std::vector<double>& expected) {
  double stat = 0.0;
  int dof = -1;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (expected[i] <= 1e-9) {
      if (observed[i] != 0) return 0.0;
      continue;
    }
    const double diff = static_cast<double>(observed[i]) - expected[i];
    stat += diff * diff / expected[i];
    ++dof;
  }
  if (dof <= 0) return 1.0;
  return gamma_q(static_cast<double>(dof) / 2.0, stat / 2.0);
}

// Two-sample chi-square homogeneity test: are two count vectors draws from
// the same distribution?
inline double chi_square_two_sample_p(const std::vector<long>& a, const std::vector<long>& b) {
  double na = 0.0, nb = 0.0;
  for (long v : a) na += static_cast<double>(v);
  for (long v : b) nb += static_cast<double>(v);
  const double ka = std::sqrt(nb / na);
  const double kb = std::sqrt(na / nb);
  double stat = 0.0;
  int dof = -1;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double total = static_cast<double>(a[i] + b[i]);
    if (total <= 0.0) continue;
    const double diff = ka * static_cast<double>(a[i]) - kb * static_cast<double>(b[i]);
    stat += diff * diff / total;
    ++dof;
  }
  if (dof <= 0) return 1.0;
  return gamma_q(static_cast<double>(dof) / 2.0, stat / 2.0);
}

// ---------------------------------------------------------------------------
// Sequential-renormalization oracle for without-replacement orderings
// ---------------------------------------------------------------------------

// P(draw exactly this ordered sequence) when each draw removes the drawn
// token and renormalizes.
inline double wor_sequence_probability(const sequoia::Categorical& dist,
                                       const std::vector<sequoia::TokenId>& seq) {
  double remaining = 1.0;
  double prob = 1.0;
  std::vector<bool> used(dist.vocab_size(), false);
  for (sequoia::TokenId t : seq) {
    if (used[static_cast<std::size_t>(t)]) return 0.0;
    prob *= dist[t] / remaining;
    remaining -= dist[t];
    used[static_cast<std::size_t>(t)] = true;
  }
  return prob;
}

// All ordered m-subsets of the support with their probabilities.
inline std::map<std::vector<sequoia::TokenId>, double> wor_all_sequences(
    const sequoia::Categorical& dist, std::size_t m) {
  std::map<std::vector<sequoia::TokenId>, double> out;
  std::vector<sequoia::TokenId> seq;
  std::vector<bool> used(dist.vocab_size(), false);
  auto rec = [&](auto&& self) -> void {
    if (seq.size() == m) {
      out[seq] = wor_sequence_probability(dist, seq);
      return;
    }
    for (std::size_t t = 0; t < dist.vocab_size(); ++t) {
      if (used[t] || dist[static_cast<sequoia::TokenId>(t)] <= 0.0) continue;
      used[t] = true;
      seq.push_back(static_cast<sequoia::TokenId>(t));
      self(self);
      seq.pop_back();
      used[t] = false;
    }
  };
  rec(rec);
  return out;
}

}  // namespace testutil
