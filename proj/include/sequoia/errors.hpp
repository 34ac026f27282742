#pragma once

// Error taxonomy for the sequoia library. Everything a caller can trigger
// through bad inputs derives from sequoia::Error; anything else escaping the
// library is a bug.

#include <stdexcept>
#include <string>

namespace sequoia {

class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A weight vector whose total mass is below the degeneracy threshold; the
// caller must apply its documented fallback rule.
class DegenerateVector : public Error {
public:
  explicit DegenerateVector(const std::string& what) : Error(what) {}
};

// Asked to draw more distinct tokens than the distribution supports.
class InsufficientSupport : public Error {
public:
  explicit InsufficientSupport(const std::string& what) : Error(what) {}
};

// A uniform distribution was requested over an empty token set.
class EmptySupport : public Error {
public:
  explicit EmptySupport(const std::string& what) : Error(what) {}
};

// Speculated children are inconsistent with the stated sampling process
// (duplicates, or tokens the draft could not have proposed).
class MismatchedChildren : public Error {
public:
  explicit MismatchedChildren(const std::string& what) : Error(what) {}
};

// Per-node data does not line up with the tree topology.
class TopologyMismatch : public Error {
public:
  explicit TopologyMismatch(const std::string& what) : Error(what) {}
};

// A child rank exceeds the supplied acceptance vector.
class RankOutOfRange : public Error {
public:
  explicit RankOutOfRange(const std::string& what) : Error(what) {}
};

// An exhaustive computation would exceed its enumeration budget.
class TooLarge : public Error {
public:
  explicit TooLarge(const std::string& what) : Error(what) {}
};

// No tree satisfies the requested size/depth constraints.
class Infeasible : public Error {
public:
  explicit Infeasible(const std::string& what) : Error(what) {}
};

// Cost-model measurements lack the n=1 baseline row (or are too few to
// interpolate).
class MissingBaseline : public Error {
public:
  explicit MissingBaseline(const std::string& what) : Error(what) {}
};

// The requested draft/target divergence cannot be realized.
class UnreachableDivergence : public Error {
public:
  explicit UnreachableDivergence(const std::string& what) : Error(what) {}
};

// A power-law fit hit a zero rejection rate; carries the first rank where
// the rejection curve reached zero (the cover rank).
class DegenerateFit : public Error {
public:
  DegenerateFit(const std::string& what, int cover_rank)
      : Error(what), cover_rank(cover_rank) {}
  int cover_rank;
};

// Malformed serialized input (JSON topology, CSV cost table, ...).
class ParseError : public Error {
public:
  explicit ParseError(const std::string& what) : Error(what) {}
};

}  // namespace sequoia
