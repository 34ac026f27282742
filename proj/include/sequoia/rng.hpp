#pragma once

// Seedable random source with cheap substream derivation. Every stochastic
// operation in the library takes an Rng explicitly; nothing reads hidden
// entropy. Substreams derived via child() depend only on the parent's seed,
// not on how much of the parent stream has been consumed, so per-node /
// per-cell streams are reproducible regardless of traversal order.

#include <cmath>
#include <cstdint>
#include <random>

namespace sequoia {

// SplitMix64 finalizer; used both as a seed mixer and a hash.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  return splitmix64(seed ^ splitmix64(salt));
}

class Rng {
public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1) with 53 random bits; avoids
  // std::uniform_real_distribution so the stream is implementation-agnostic.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Exp(1) variate.
  double exponential() { return -std::log1p(-uniform()); }

  // Uniform integer in [0, n); n must be positive. Rejection sampling keeps
  // it exactly uniform.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Substream keyed by salt; independent of this stream's consumption.
  Rng child(std::uint64_t salt) const { return Rng(derive_seed(seed_, salt)); }

  // Fresh stream derived from the current engine state; advances this
  // stream, so successive splits differ.
  Rng split() { return Rng(splitmix64(engine_())); }

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace sequoia
