#pragma once

// Seedable order-m Markov toy language model: one categorical conditional
// per length-m context, plus an order-0 marginal used for prefixes shorter
// than m. Pure probability tables; no tokenizer, no state.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sequoia/categorical.hpp"
#include "sequoia/errors.hpp"
#include "sequoia/rng.hpp"

namespace sequoia {

class ToyLM {
public:
  // `conditionals` holds vocab^order tables indexed by the mixed-radix
  // context code (last token is the lowest digit).
  ToyLM(int order, int vocab, std::vector<Categorical> conditionals, Categorical marginal)
      : order_(order), vocab_(vocab), table_(std::move(conditionals)),
        marginal_(std::move(marginal)) {
    if (order_ < 0 || vocab_ < 1) {
      throw Error("ToyLM: order must be >= 0 and vocab >= 1");
    }
    std::size_t expected = 1;
    for (int i = 0; i < order_; ++i) expected *= static_cast<std::size_t>(vocab_);
    if (table_.size() != expected) {
      throw Error("ToyLM: expected " + std::to_string(expected) + " conditionals, got " +
                  std::to_string(table_.size()));
    }
    for (const auto& c : table_) {
      if (c.vocab_size() != static_cast<std::size_t>(vocab_)) {
        throw Error("ToyLM: conditional vocabulary mismatch");
      }
    }
    if (marginal_.vocab_size() != static_cast<std::size_t>(vocab_)) {
      throw Error("ToyLM: marginal vocabulary mismatch");
    }
  }

  int order() const { return order_; }
  int vocab() const { return vocab_; }
  const Categorical& marginal() const { return marginal_; }
  const std::vector<Categorical>& conditionals() const { return table_; }

  // Next-token distribution after `prefix`. Prefixes shorter than the model
  // order fall back to the order-0 marginal.
  const Categorical& next_dist(std::span<const TokenId> prefix) const {
    if (static_cast<int>(prefix.size()) < order_) {
      return marginal_;
    }
    std::size_t code = 0;
    for (int i = 0; i < order_; ++i) {
      const TokenId t = prefix[prefix.size() - static_cast<std::size_t>(order_ - i)];
      if (t < 0 || t >= vocab_) throw Error("ToyLM: token out of vocabulary");
      code = code * static_cast<std::size_t>(vocab_) + static_cast<std::size_t>(t);
    }
    return table_[code];
  }

  // Autoregressive sample of `length` tokens continuing `prefix`.
  std::vector<TokenId> generate(std::span<const TokenId> prefix, int length, Rng& rng) const {
    std::vector<TokenId> ctx(prefix.begin(), prefix.end());
    std::vector<TokenId> out;
    out.reserve(static_cast<std::size_t>(length));
    for (int i = 0; i < length; ++i) {
      const TokenId t = sample(next_dist(ctx), rng);
      ctx.push_back(t);
      out.push_back(t);
    }
    return out;
  }

private:
  int order_;
  int vocab_;
  std::vector<Categorical> table_;
  Categorical marginal_;
};

}  // namespace sequoia
