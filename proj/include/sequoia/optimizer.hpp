#pragma once

// Hardware-aware selection of tree size and depth. The cost model carries
// the measured verify-time ratio t(n) (piecewise linear, t(1) = 1), the
// draft/verify time ratio c, and the batch size b; the optimizer grid-scans
//
//     Speedup(n, d) = G(n, d) / (t(b*n) + d*c)
//
// where G comes from one bounded-depth DP sweep and d counts draft passes
// (a tree whose deepest speculated token sits j layers below the root costs
// j draft passes; the root-only tree costs none).

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sequoia/errors.hpp"
#include "sequoia/planner.hpp"
#include "sequoia/tree.hpp"

namespace sequoia {

// ---------------------------------------------------------------------------
// CostModel
// ---------------------------------------------------------------------------

struct CostModel {
  // (token count, verify-time ratio), sorted by strictly increasing n with
  // nondecreasing t and t(1) = 1 (up to 1e-6).
  std::vector<std::pair<double, double>> samples;
  double draft_cost = 0.0;  // c: draft-step time / verify-step time
  int batch = 1;            // b
  bool isotonic_corrected = false;

  static CostModel from_samples(std::vector<std::pair<double, double>> samples,
                                double draft_cost, int batch = 1,
                                bool isotonic_corrected = false) {
    if (samples.empty()) throw Error("CostModel: no samples");
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (!(samples[i].second >= 0.0)) throw Error("CostModel: negative time ratio");
      if (i > 0 && !(samples[i].first > samples[i - 1].first)) {
        throw Error("CostModel: sample token counts must be strictly increasing");
      }
      if (i > 0 && samples[i].second < samples[i - 1].second) {
        throw Error("CostModel: time ratios must be nondecreasing");
      }
    }
    if (samples.front().first == 1.0 && std::abs(samples.front().second - 1.0) > 1e-6) {
      throw Error("CostModel: t(1) must equal 1 after normalization");
    }
    if (!(draft_cost >= 0.0)) throw Error("CostModel: draft cost must be >= 0");
    if (batch < 1) throw Error("CostModel: batch size must be >= 1");
    return CostModel{std::move(samples), draft_cost, batch, isotonic_corrected};
  }

  // A flat model: t == 1 everywhere.
  static CostModel flat(double draft_cost = 0.0, int batch = 1) {
    return from_samples({{1.0, 1.0}}, draft_cost, batch);
  }
};

// Piecewise-linear interpolation of t(n): constant below the first sample,
// final-segment slope above the last.
inline double t_of(const CostModel& model, double n) {
  const auto& s = model.samples;
  if (n <= s.front().first) return s.front().second;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (n <= s[i].first) {
      const double w = (n - s[i - 1].first) / (s[i].first - s[i - 1].first);
      return s[i - 1].second + w * (s[i].second - s[i - 1].second);
    }
  }
  if (s.size() == 1) return s.back().second;
  const auto& a = s[s.size() - 2];
  const auto& b = s.back();
  const double slope = (b.second - a.second) / (b.first - a.first);
  return b.second + slope * (n - b.first);
}

// Speedup(n, d) with d = number of draft passes.
inline double speedup(const CostModel& model, double expected_tokens, int size, int depth) {
  return expected_tokens /
         (t_of(model, static_cast<double>(model.batch) * static_cast<double>(size)) +
          static_cast<double>(depth) * model.draft_cost);
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

struct OptimizerResult {
  int size = 1;
  int depth = 0;  // draft passes
  TreeTopology topology = TreeTopology::single_node();
  double expected_tokens = 1.0;  // G
  double speedup = 1.0;
};

// Best (depth, speedup) for each fixed tree size n in [1, n_max]; ties on
// speedup prefer the smaller depth. One DP sweep serves the whole grid.
inline std::vector<OptimizerResult> optimize_per_size(const AcceptanceVector& p,
                                                      const CostModel& model, int n_max,
                                                      int d_max, int kmax = -1) {
  if (n_max < 1 || d_max < 1) throw Error("optimize: n_max and d_max must be >= 1");
  const BoundedPlanTable table(n_max, d_max + 1, p, kmax);
  std::vector<OptimizerResult> rows;
  rows.reserve(static_cast<std::size_t>(n_max));
  for (int n = 1; n <= n_max; ++n) {
    double best = -std::numeric_limits<double>::infinity();
    int best_d = 1;
    for (int d = 1; d <= d_max; ++d) {
      const double g = table.best_value(n, d + 1);
      const double s = speedup(model, g, n, d);
      if (s > best) {
        best = s;
        best_d = d;
      }
    }
    PlanResult plan = table.plan(n, best_d + 1);
    rows.push_back({n, best_d, std::move(plan.topology), plan.value, best});
  }
  return rows;
}

// Full grid argmax of Speedup(n, d); ties prefer the smaller size, then the
// smaller depth.
inline OptimizerResult optimize(const AcceptanceVector& p, const CostModel& model, int n_max,
                                int d_max, int kmax = -1) {
  auto rows = optimize_per_size(p, model, n_max, d_max, kmax);
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].speedup > rows[best].speedup) best = i;
  }
  return std::move(rows[best]);
}

// ---------------------------------------------------------------------------
// Measurement ingestion
// ---------------------------------------------------------------------------

// Reads a `n,seconds` CSV of verify-time measurements plus the draft
// seconds-per-step, normalizes by the n=1 row, and applies an isotonic
// (pool-adjacent-violators) correction if the measurements are not
// monotone. Requires the n=1 baseline and at least two rows.
inline CostModel load_cost_model(std::istream& csv, double draft_seconds, int batch = 1) {
  std::string line;
  if (!std::getline(csv, line)) throw ParseError("cost model: empty input");
  // Tolerate a UTF-8 BOM and trailing CR.
  if (line.size() >= 3 && line.compare(0, 3, "\xef\xbb\xbf") == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "n,seconds") {
    throw ParseError("cost model: expected header 'n,seconds', got '" + line + "'");
  }
  std::vector<std::pair<double, double>> rows;
  while (std::getline(csv, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError("cost model: malformed row '" + line + "'");
    try {
      const double n = std::stod(line.substr(0, comma));
      const double seconds = std::stod(line.substr(comma + 1));
      if (!(n >= 1.0) || !(seconds > 0.0)) {
        throw ParseError("cost model: row '" + line + "' out of range");
      }
      rows.emplace_back(n, seconds);
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError("cost model: malformed row '" + line + "'");
    }
  }
  std::sort(rows.begin(), rows.end());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].first == rows[i - 1].first) {
      throw ParseError("cost model: duplicate token count " + std::to_string(rows[i].first));
    }
  }
  if (rows.size() < 2) throw MissingBaseline("cost model: need at least two rows");
  if (rows.front().first != 1.0) {
    throw MissingBaseline("cost model: missing the n=1 baseline row");
  }
  const double base = rows.front().second;

  std::vector<double> t(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) t[i] = rows[i].second / base;

  // Pool adjacent violators (measurement noise can make t dip).
  bool corrected = false;
  std::vector<double> level;
  std::vector<int> weight;
  for (double v : t) {
    level.push_back(v);
    weight.push_back(1);
    while (level.size() > 1 && level[level.size() - 2] > level.back()) {
      corrected = true;
      const double merged = (level[level.size() - 2] * weight[weight.size() - 2] +
                             level.back() * weight.back()) /
                            (weight[weight.size() - 2] + weight.back());
      weight[weight.size() - 2] += weight.back();
      level[level.size() - 2] = merged;
      level.pop_back();
      weight.pop_back();
    }
  }
  std::vector<std::pair<double, double>> samples;
  samples.reserve(rows.size());
  std::size_t block = 0;
  int used = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    samples.emplace_back(rows[i].first, level[block]);
    if (++used == weight[block]) {
      ++block;
      used = 0;
    }
  }
  // Re-pin the baseline exactly (the correction can move it within noise).
  samples.front().second = 1.0;
  for (std::size_t i = 1; i < samples.size(); ++i) {
    samples[i].second = std::max(samples[i].second, 1.0);
  }

  return CostModel::from_samples(std::move(samples), draft_seconds / base, batch, corrected);
}

}  // namespace sequoia
