#pragma once

// JSON/CSV wire formats:
//   Categorical            <-> JSON array of probabilities
//   AcceptanceVector       <-> JSON array
//   TreeTopology           <-> {"parents":[null,0,...], "ranks":[0,1,...]}
//   PlanResult              -> {"value","topology","n","d"}
//   OptimizerResult         -> {"n","d","speedup","G","topology"}
//   EstimationReport        -> {"p","r","b","cover_rank","variance","samples",...}
//   experiment rows         -> budget,structure,tokens_per_step,ci95,simulated_speedup
// Doubles are printed shortest-round-trip, so equal runs produce equal bytes.

#include <charconv>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sequoia/categorical.hpp"
#include "sequoia/errors.hpp"
#include "sequoia/optimizer.hpp"
#include "sequoia/planner.hpp"
#include "sequoia/simlab.hpp"
#include "sequoia/tree.hpp"

namespace sequoia {

using json = nlohmann::json;

// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Parsing helpers (wrap nlohmann errors into ParseError)
// ---------------------------------------------------------------------------

inline json parse_json(const std::string& text, const std::string& what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ParseError(what + ": invalid JSON");
  return j;
}

inline std::vector<double> doubles_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw ParseError(what + ": expected a nonempty array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw ParseError(what + ": expected numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Categorical / AcceptanceVector
// ---------------------------------------------------------------------------

inline json to_json(const Categorical& dist) { return json(dist.probs()); }

inline Categorical categorical_from_json(const json& j) {
  try {
    return Categorical(doubles_from_json(j, "categorical"));
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(std::string("categorical: ") + e.what());
  }
}

inline json to_json(const AcceptanceVector& p) { return json(p.probs()); }

inline AcceptanceVector acceptance_from_json(const json& j, bool sort_if_needed = false) {
  auto values = doubles_from_json(j, "acceptance vector");
  try {
    if (sort_if_needed) {
      std::sort(values.begin(), values.end(), std::greater<double>());
    }
    return AcceptanceVector(std::move(values));
  } catch (const Error& e) {
    throw ParseError(std::string("acceptance vector: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// TreeTopology
// ---------------------------------------------------------------------------

inline json to_json(const TreeTopology& t) {
  json parents = json::array();
  for (int p : t.parents()) {
    if (p < 0) {
      parents.push_back(nullptr);
    } else {
      parents.push_back(p);
    }
  }
  return json{{"parents", parents}, {"ranks", t.ranks()}};
}

inline TreeTopology topology_from_json(const json& j) {
  if (!j.is_object() || !j.contains("parents") || !j.contains("ranks")) {
    throw ParseError("topology: expected {\"parents\":[...],\"ranks\":[...]}");
  }
  const auto& jp = j.at("parents");
  const auto& jr = j.at("ranks");
  if (!jp.is_array() || !jr.is_array() || jp.size() != jr.size() || jp.empty()) {
    throw ParseError("topology: parents/ranks must be equal-length nonempty arrays");
  }
  std::vector<int> parents, ranks;
  parents.reserve(jp.size());
  ranks.reserve(jr.size());
  for (const auto& v : jp) {
    if (v.is_null()) {
      parents.push_back(-1);
    } else if (v.is_number_integer()) {
      parents.push_back(v.get<int>());
    } else {
      throw ParseError("topology: parents must be integers or null");
    }
  }
  for (const auto& v : jr) {
    if (!v.is_number_integer()) throw ParseError("topology: ranks must be integers");
    ranks.push_back(v.get<int>());
  }
  try {
    return TreeTopology(std::move(parents), std::move(ranks));
  } catch (const Error& e) {
    throw ParseError(std::string("topology: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

// n and d are the "(size, depth)" configuration, depth in layers.
inline json plan_result_to_json(const PlanResult& plan, int n, int d) {
  return json{{"value", plan.value}, {"topology", to_json(plan.topology)}, {"n", n}, {"d", d}};
}

inline json optimizer_result_to_json(const OptimizerResult& r) {
  return json{{"n", r.size},
              {"d", r.depth},
              {"speedup", r.speedup},
              {"G", r.expected_tokens},
              {"topology", to_json(r.topology)}};
}

inline json estimation_report_to_json(const EstimationReport& r) {
  json j{{"p", r.acceptance},
         {"r", r.rejection},
         {"variance", r.variance},
         {"samples", r.samples},
         {"monotone", r.monotone},
         {"p_sorted", r.sorted_vector().probs()}};
  j["b"] = r.power_law_exponent.has_value() ? json(*r.power_law_exponent) : json(nullptr);
  j["cover_rank"] = r.cover_rank.has_value() ? json(*r.cover_rank) : json(nullptr);
  return j;
}

inline json to_json(const ModelPairConfig& c) {
  return json{{"vocab", c.vocab},
              {"order", c.order},
              {"divergence", c.divergence},
              {"temperature", c.temperature},
              {"seed", c.seed}};
}

inline ModelPairConfig pair_config_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("model pair: expected an object");
  ModelPairConfig c;
  try {
    c.vocab = j.at("vocab").get<int>();
    c.order = j.at("order").get<int>();
    c.divergence = j.at("divergence").get<double>();
    c.temperature = j.at("temperature").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("model pair: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline std::string experiment_rows_to_csv(std::span<const ExperimentRow> rows) {
  std::string out = "budget,structure,tokens_per_step,ci95,simulated_speedup\n";
  for (const auto& row : rows) {
    out += std::to_string(row.budget);
    out += ',';
    out += row.structure;
    out += ',';
    out += format_double(row.tokens_per_step);
    out += ',';
    out += format_double(row.ci95);
    out += ',';
    out += format_double(row.simulated_speedup);
    out += '\n';
  }
  return out;
}

inline std::string rejection_curve_to_csv(const EstimationReport& report) {
  std::string out = "k,r\n";
  for (std::size_t i = 0; i < report.rejection.size(); ++i) {
    out += std::to_string(i + 1);
    out += ',';
    out += format_double(report.rejection[i]);
    out += '\n';
  }
  return out;
}

}  // namespace sequoia
