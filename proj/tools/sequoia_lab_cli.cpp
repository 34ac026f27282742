// sequoia-lab: command-line front end for tree planning, hardware-aware
// optimization, acceptance estimation, and speculative-decoding simulation.
//
// Commands: plan, optimize, estimate, simulate, scaling, selfcheck.
// Every command writes a manifest next to its outputs; a manifest doubles as
// a --config file, so re-running `sequoia-lab <command> --config <manifest>`
// reproduces the outputs byte for byte. All randomness flows from --seed.
//
// Exit codes: 0 success, 2 usage/input error, 3 internal invariant violation.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sequoia/io.hpp"
#include "sequoia/manifest.hpp"
#include "sequoia/optimizer.hpp"
#include "sequoia/planner.hpp"
#include "sequoia/simlab.hpp"
#include "sequoia/verifiers.hpp"
#include "sequoia/version.hpp"

namespace {

using namespace sequoia;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

std::vector<int> parse_budget_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw ParseError("budgets: empty entry in '" + text + "'");
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size() || v < 1) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ParseError("budgets: '" + item + "' is not a positive integer");
    }
  }
  if (out.empty()) throw ParseError("budgets: empty list");
  if (!std::is_sorted(out.begin(), out.end())) {
    throw ParseError("budgets: list must be sorted ascending");
  }
  return out;
}

std::vector<StructureSpec> parse_structure_list(const std::string& text) {
  std::vector<StructureSpec> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(parse_structure(item));
  }
  if (out.empty()) throw ParseError("structures: empty list");
  return out;
}

VerifierKind require_verifier(const std::string& name) {
  const auto kind = parse_verifier(name);
  if (!kind.has_value()) {
    throw ParseError("unsupported verifier '" + name + "' (expected sequoia|specinfer|topk)");
  }
  return *kind;
}

// Accepts a bare JSON array or an estimation report (its "p" field).
AcceptanceVector load_acceptance(const std::string& path, bool sort) {
  json j = parse_json(read_file(path), "acceptance file");
  if (j.is_object() && j.contains("p")) j = j.at("p");
  return acceptance_from_json(j, sort);
}

ModelPair load_pair(const std::string& path) {
  return make_model_pair(pair_config_from_json(parse_json(read_file(path), "pair file")));
}

CostModel load_cost(const std::string& path, double draft_seconds, int batch) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read cost model: " + path);
  return load_cost_model(in, draft_seconds, batch);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory: " + dir);
}

// Pre-pass over argv: expand `--config FILE` into the flags it stores,
// without overriding anything given explicitly. Accepts either a manifest
// ({"command":..., "parameters": {...}}) or a flat {"--flag": "value"}
// object.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    }
  }
  if (config_path.empty()) return args;

  const json j = parse_json(read_file(config_path), "config file");
  json params;
  if (j.contains("parameters")) {
    if (!args.empty() && j.contains("command") && j.at("command").is_string() &&
        j.at("command").get<std::string>() != args[0]) {
      throw ParseError("config file was recorded for command '" +
                       j.at("command").get<std::string>() + "', not '" + args[0] + "'");
    }
    params = j.at("parameters");
  } else {
    params = j;
  }
  if (!params.is_object()) throw ParseError("config file: parameters must be an object");
  for (const auto& [key, value] : params.items()) {
    if (key == "--config") continue;
    bool present = false;
    for (const auto& a : args) {
      if (a == key || a.rfind(key + "=", 0) == 0) {
        present = true;
        break;
      }
    }
    if (present) continue;
    const std::string text = value.is_string() ? value.get<std::string>() : value.dump();
    args.push_back(key + "=" + text);
  }
  return args;
}

struct ManifestBuilder {
  RunManifest m;
  explicit ManifestBuilder(std::string command) { m.command = std::move(command); }
  void param(const std::string& flag, const std::string& value) { m.parameters[flag] = value; }
  void param(const std::string& flag, long long value) {
    m.parameters[flag] = std::to_string(value);
  }
  void param(const std::string& flag, double value) { m.parameters[flag] = format_double(value); }
  void param_if(const std::string& flag, const std::optional<int>& value) {
    if (value.has_value()) m.parameters[flag] = std::to_string(*value);
  }
  void seed(std::uint64_t s) {
    m.seed = s;
    m.parameters["--seed"] = std::to_string(s);
  }
  void input(const std::string& path) { m.input_digests[path] = file_digest(path); }
};

// ---------------------------------------------------------------------------
// plan
// ---------------------------------------------------------------------------

struct PlanArgs {
  std::string acceptance;
  int budget = 1;
  std::optional<int> depth;
  std::optional<int> kmax;
  bool sort = false;
  std::string out;
};

int cmd_plan(const PlanArgs& a) {
  const AcceptanceVector p = load_acceptance(a.acceptance, a.sort);
  const int kmax = a.kmax.value_or(static_cast<int>(p.max_rank()));
  PlanResult plan = a.depth.has_value() ? best_tree_bounded(a.budget, *a.depth, p, kmax)
                                        : best_tree_unbounded(a.budget, p, kmax);
  const int shown_depth = a.depth.value_or(plan.topology.depth() + 1);

  ManifestBuilder mb("plan");
  mb.param("--acceptance", a.acceptance);
  mb.param("--budget", static_cast<long long>(a.budget));
  mb.param_if("--depth", a.depth);
  mb.param("--kmax", static_cast<long long>(kmax));
  mb.param("--sort", a.sort ? std::string("true") : std::string("false"));
  mb.param("--out", a.out);
  mb.input(a.acceptance);

  write_file(a.out, plan_result_to_json(plan, a.budget, shown_depth).dump(2) + "\n");
  mb.m.write(a.out + ".manifest.json");
  std::cout << "value=" << format_double(plan.value) << " config=(" << a.budget << ","
            << shown_depth << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// optimize
// ---------------------------------------------------------------------------

struct OptimizeArgs {
  std::string acceptance;
  std::string cost;
  double draft_seconds = 0.0;
  int batch = 1;
  int nmax = 1;
  int dmax = 1;
  std::optional<int> kmax;
  bool sort = false;
  std::string fixed_table;
  std::string out;
};

int cmd_optimize(const OptimizeArgs& a) {
  const AcceptanceVector p = load_acceptance(a.acceptance, a.sort);
  const int kmax = a.kmax.value_or(static_cast<int>(p.max_rank()));
  const CostModel model = load_cost(a.cost, a.draft_seconds, a.batch);
  if (model.isotonic_corrected) {
    std::cerr << "note: cost measurements were not monotone; isotonic correction applied\n";
  }
  const OptimizerResult result = optimize(p, model, a.nmax, a.dmax, kmax);

  ManifestBuilder mb("optimize");
  mb.param("--acceptance", a.acceptance);
  mb.param("--cost", a.cost);
  mb.param("--draft-seconds", a.draft_seconds);
  mb.param("--batch", static_cast<long long>(a.batch));
  mb.param("--nmax", static_cast<long long>(a.nmax));
  mb.param("--dmax", static_cast<long long>(a.dmax));
  mb.param("--kmax", static_cast<long long>(kmax));
  mb.param("--sort", a.sort ? std::string("true") : std::string("false"));
  mb.param("--out", a.out);
  if (!a.fixed_table.empty()) mb.param("--fixed-table", a.fixed_table);
  mb.input(a.acceptance);
  mb.input(a.cost);

  write_file(a.out, optimizer_result_to_json(result).dump(2) + "\n");
  if (!a.fixed_table.empty()) {
    std::string csv = "n,d,G,speedup\n";
    for (const auto& row : optimize_per_size(p, model, a.nmax, a.dmax, kmax)) {
      csv += std::to_string(row.size) + "," + std::to_string(row.depth) + "," +
             format_double(row.expected_tokens) + "," + format_double(row.speedup) + "\n";
    }
    write_file(a.fixed_table, csv);
  }
  mb.m.write(a.out + ".manifest.json");
  std::cout << "speedup=" << format_double(result.speedup) << " config=(" << result.size << ","
            << result.depth << ") G=" << format_double(result.expected_tokens) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

struct EstimateArgs {
  std::string pair;
  std::string verifier;
  int kmax = 4;
  int contexts = 200;
  int trials = 2000;
  std::uint64_t seed = 0;
  std::string curve;
  std::string out;
};

int cmd_estimate(const EstimateArgs& a) {
  const VerifierKind kind = require_verifier(a.verifier);
  const ModelPair pair = load_pair(a.pair);
  Rng rng(a.seed);
  Rng prompt_rng = rng.child(1);
  const auto prompts = rollout_prompts(pair.target, a.contexts, prompt_rng);
  Rng est_rng = rng.child(2);
  const EstimationReport report = estimate_acceptance_vector(
      pair.draft, pair.target, kind, prompts, a.kmax, a.trials, est_rng);

  ManifestBuilder mb("estimate");
  mb.param("--pair", a.pair);
  mb.param("--verifier", a.verifier);
  mb.param("--kmax", static_cast<long long>(a.kmax));
  mb.param("--contexts", static_cast<long long>(a.contexts));
  mb.param("--trials", static_cast<long long>(a.trials));
  mb.param("--out", a.out);
  if (!a.curve.empty()) mb.param("--curve", a.curve);
  mb.seed(a.seed);
  mb.input(a.pair);

  write_file(a.out, estimation_report_to_json(report).dump(2) + "\n");
  const std::string curve_path = a.curve.empty() ? a.out + ".rejection.csv" : a.curve;
  write_file(curve_path, rejection_curve_to_csv(report));
  mb.m.write(a.out + ".manifest.json");

  std::cout << "p1=" << format_double(report.acceptance.empty() ? 0.0 : report.acceptance[0]);
  if (report.power_law_exponent.has_value()) {
    std::cout << " b=" << format_double(*report.power_law_exponent);
  } else if (report.cover_rank.has_value()) {
    std::cout << " cover_rank=" << *report.cover_rank;
  }
  std::cout << (report.monotone ? "" : " (non-monotone)") << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// simulate / scaling
// ---------------------------------------------------------------------------

struct ExperimentArgs {
  std::string pair;
  std::string verifier;
  std::string budgets = "4,8,16";
  std::string structures = "sequoia";
  int steps = 512;
  int kmax = 4;
  int contexts = 200;
  int trials = 2000;
  std::uint64_t seed = 0;
  std::string cost;
  double draft_seconds = 0.0;
  int batch = 1;
  int threads = 1;
  std::string out;
};

void experiment_manifest(ManifestBuilder& mb, const ExperimentArgs& a) {
  mb.param("--pair", a.pair);
  mb.param("--verifier", a.verifier);
  mb.param("--budgets", a.budgets);
  mb.param("--structures", a.structures);
  mb.param("--steps", static_cast<long long>(a.steps));
  mb.param("--kmax", static_cast<long long>(a.kmax));
  mb.param("--contexts", static_cast<long long>(a.contexts));
  mb.param("--trials", static_cast<long long>(a.trials));
  mb.param("--threads", static_cast<long long>(a.threads));
  mb.param("--out", a.out);
  if (!a.cost.empty()) {
    mb.param("--cost", a.cost);
    mb.param("--draft-seconds", a.draft_seconds);
    mb.param("--batch", static_cast<long long>(a.batch));
    mb.input(a.cost);
  }
  mb.seed(a.seed);
  mb.input(a.pair);
}

int cmd_scaling(const ExperimentArgs& a) {
  const VerifierKind kind = require_verifier(a.verifier);
  const ModelPair pair = load_pair(a.pair);
  const auto budgets = parse_budget_list(a.budgets);
  const auto structures = parse_structure_list(a.structures);
  const CostModel cost =
      a.cost.empty() ? CostModel::flat() : load_cost(a.cost, a.draft_seconds, a.batch);

  Rng rng(a.seed);
  const ExperimentResult result = scaling_experiment(
      pair, kind, budgets, structures, a.steps, a.kmax, a.contexts, a.trials, rng, cost,
      a.threads);

  ensure_dir(a.out);
  ManifestBuilder mb("scaling");
  experiment_manifest(mb, a);
  write_file(a.out + "/scaling.csv", experiment_rows_to_csv(result.rows));
  write_file(a.out + "/estimate.json",
             estimation_report_to_json(result.estimate).dump(2) + "\n");
  mb.m.write(a.out + "/manifest.json");
  for (const auto& row : result.rows) {
    std::cout << "budget=" << row.budget << " structure=" << row.structure
              << " tokens_per_step=" << format_double(row.tokens_per_step) << "\n";
  }
  return 0;
}

int cmd_simulate(const ExperimentArgs& a) {
  const VerifierKind kind = require_verifier(a.verifier);
  const ModelPair pair = load_pair(a.pair);
  const auto budgets = parse_budget_list(a.budgets);
  const auto structures = parse_structure_list(a.structures);
  const CostModel cost =
      a.cost.empty() ? CostModel::flat() : load_cost(a.cost, a.draft_seconds, a.batch);

  Rng rng(a.seed);
  Rng est_rng = rng.child(0x65737431);
  Rng prompt_rng = est_rng.child(1);
  const auto prompts = rollout_prompts(pair.target, a.contexts, prompt_rng);
  const EstimationReport report = estimate_acceptance_vector(pair.draft, pair.target, kind,
                                                             prompts, a.kmax, a.trials, est_rng);
  const AcceptanceVector p = report.sorted_vector();
  const UnboundedPlanTable table(budgets.back(), p);

  ensure_dir(a.out);
  std::vector<ExperimentRow> rows;
  Rng base = rng.child(0x63656c6c);
  std::size_t cell_index = 0;
  for (int budget : budgets) {
    for (const auto& spec : structures) {
      const TreeTopology topology = spec.is_sequoia
                                        ? table.plan(budget).topology
                                        : fixed_structure_topology(spec.kind, budget, spec.k);
      Rng cell_rng = base.child(cell_index++);
      const DecodeStats stats =
          run_decode_steps(pair.draft, pair.target, topology, kind, {}, a.steps, cell_rng);

      ExperimentRow row;
      row.budget = budget;
      row.structure = spec.label;
      row.tokens_per_step = stats.tokens_per_step;
      row.tree_size = static_cast<int>(topology.size());
      row.tree_depth = topology.depth();
      double var = 0.0;
      for (int g : stats.per_step_generated) {
        var += (g - stats.tokens_per_step) * (g - stats.tokens_per_step);
      }
      var /= std::max(1, a.steps - 1);
      row.ci95 = 1.96 * std::sqrt(var / a.steps);
      row.simulated_speedup =
          speedup(cost, stats.tokens_per_step, row.tree_size, row.tree_depth);
      rows.push_back(row);

      std::string steps_csv = "step,generated\n";
      for (std::size_t s = 0; s < stats.per_step_generated.size(); ++s) {
        steps_csv += std::to_string(s + 1) + "," +
                     std::to_string(stats.per_step_generated[s]) + "\n";
      }
      write_file(a.out + "/steps_" + std::to_string(budget) + "_" + spec.label + ".csv",
                 steps_csv);
    }
  }

  ManifestBuilder mb("simulate");
  experiment_manifest(mb, a);
  write_file(a.out + "/summary.csv", experiment_rows_to_csv(rows));
  write_file(a.out + "/estimate.json", estimation_report_to_json(report).dump(2) + "\n");
  mb.m.write(a.out + "/manifest.json");
  for (const auto& row : rows) {
    std::cout << "budget=" << row.budget << " structure=" << row.structure
              << " tokens_per_step=" << format_double(row.tokens_per_step) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// selfcheck
// ---------------------------------------------------------------------------

int cmd_selfcheck(std::uint64_t seed) {
  int failures = 0;
  auto check = [&](const std::string& name, bool ok) {
    std::cout << (ok ? "[ ok ] " : "[FAIL] ") << name << "\n";
    failures += ok ? 0 : 1;
  };
  Rng rng(seed);

  auto random_dist = [&](std::size_t vocab) {
    std::vector<double> w(vocab);
    double sum = 0.0;
    for (auto& v : w) {
      v = rng.exponential();
      sum += v;
    }
    for (auto& v : w) v /= sum;
    return Categorical(std::move(w));
  };

  {
    bool ok = true;
    for (int i = 0; i < 60 && ok; ++i) {
      const std::size_t vocab = 2 + rng.below(5);
      const Categorical p = random_dist(vocab);
      const Categorical q = random_dist(vocab);
      const int k = static_cast<int>(rng.below(vocab + 1));
      for (VerifierKind kind : {VerifierKind::kSequoia, VerifierKind::kSpecInfer,
                                VerifierKind::kTopKNaive}) {
        const auto nd = exact_node_distribution(p, q, k, kind);
        for (std::size_t t = 0; t < vocab; ++t) {
          ok = ok && std::abs(nd.output[static_cast<TokenId>(t)] -
                              p[static_cast<TokenId>(t)]) <= 1e-9;
        }
      }
    }
    check("distribution preservation (all verifiers, exact enumeration)", ok);
  }
  {
    bool ok = true;
    for (int i = 0; i < 40 && ok; ++i) {
      const std::size_t vocab = 2 + rng.below(5);
      const Categorical p = random_dist(vocab);
      const Categorical q = random_dist(vocab);
      const double expected = 1.0 - tv_distance(p, q);
      for (VerifierKind kind : {VerifierKind::kSequoia, VerifierKind::kSpecInfer}) {
        ok = ok && std::abs(exact_node_distribution(p, q, 1, kind).total_acceptance -
                            expected) <= 1e-9;
      }
    }
    check("optimal-transport property at k=1", ok);
  }
  {
    const auto specinfer = exact_node_distribution(
        Categorical({1.0, 0.0}), Categorical({0.5, 0.5}), 2, VerifierKind::kSpecInfer);
    const auto sequoia = exact_node_distribution(
        Categorical({1.0, 0.0}), Categorical({0.5, 0.5}), 2, VerifierKind::kSequoia);
    const auto topk = exact_node_distribution(Categorical({0.6, 0.4}), Categorical({0.6, 0.4}),
                                              1, VerifierKind::kTopKNaive);
    check("cover property and counterexample values",
          std::abs(sequoia.total_acceptance - 1.0) <= 1e-12 &&
              std::abs(specinfer.total_acceptance - 0.75) <= 1e-12 &&
              std::abs(topk.total_acceptance - 0.6) <= 1e-12);
  }
  {
    bool ok = true;
    for (int i = 0; i < 8 && ok; ++i) {
      std::vector<double> pw(3);
      double sum = 0.0;
      for (auto& v : pw) {
        v = rng.exponential();
        sum += v;
      }
      const double mass = 0.3 + 0.6 * rng.uniform();
      for (auto& v : pw) v = v / sum * mass;
      std::sort(pw.begin(), pw.end(), std::greater<double>());
      const AcceptanceVector p(std::move(pw));
      for (int n = 1; n <= 7 && ok; ++n) {
        ok = std::abs(best_tree_unbounded(n, p).value -
                      brute_force_best_tree(n, p).value) <= 1e-9;
      }
    }
    check("planner matches brute-force enumeration", ok);
  }
  {
    bool ok = true;
    for (int i = 0; i < 6 && ok; ++i) {
      std::vector<double> pw{0.4 * rng.uniform() + 0.2, 0.2 * rng.uniform()};
      std::sort(pw.begin(), pw.end(), std::greater<double>());
      const AcceptanceVector p(std::move(pw));
      const int n = 2 + static_cast<int>(rng.below(5));
      const PlanResult plan = best_tree_unbounded(n, p);
      const double mc = simulate_expected_tokens(plan.topology, p, 40000, rng);
      ok = std::abs(mc - plan.value) <= 3.0 * n / std::sqrt(40000.0);
    }
    check("closed-form expected tokens matches Monte Carlo", ok);
  }
  {
    const FeasibilityTable r = feasibility_table(3, 2, 2);
    check("feasibility table boundary values",
          r.feasible(1, 1, 0) && r.feasible(2, 2, 1) && r.feasible(3, 2, 2) &&
              !r.feasible(2, 1, 1));
  }

  std::cout << (failures == 0 ? "selfcheck: all checks passed\n"
                              : "selfcheck: FAILURES detected\n");
  return failures == 0 ? 0 : 3;
}

}  // namespace

// ---------------------------------------------------------------------------
// main
// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
  CLI::App app{"sequoia-lab: token-tree planning, verification, and simulation"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  PlanArgs plan_args;
  auto* plan = app.add_subcommand("plan", "Optimal token tree for a budget (and depth)");
  plan->add_option("--acceptance", plan_args.acceptance, "Acceptance vector JSON file")
      ->required();
  plan->add_option("--budget", plan_args.budget, "Tree size budget")->required();
  int plan_depth = 0;
  auto* plan_depth_opt =
      plan->add_option("--depth", plan_depth, "Depth bound in layers (root-only tree = 1)");
  int plan_kmax = 0;
  auto* plan_kmax_opt = plan->add_option("--kmax", plan_kmax, "Max children per node");
  plan->add_flag("--sort", plan_args.sort, "Sort a non-monotone acceptance vector");
  plan->add_option("--out", plan_args.out, "Output JSON path")->required();
  plan->add_option("--config", "Config/manifest JSON supplying defaults");

  OptimizeArgs opt_args;
  auto* opt = app.add_subcommand("optimize", "Hardware-aware tree size/depth search");
  opt->add_option("--acceptance", opt_args.acceptance, "Acceptance vector JSON file")
      ->required();
  opt->add_option("--cost", opt_args.cost, "Cost model CSV (n,seconds)")->required();
  opt->add_option("--draft-seconds", opt_args.draft_seconds, "Seconds per draft step")
      ->required();
  opt->add_option("--batch", opt_args.batch, "Batch size b");
  opt->add_option("--nmax", opt_args.nmax, "Largest tree size in the grid")->required();
  opt->add_option("--dmax", opt_args.dmax, "Largest draft-pass depth in the grid")->required();
  int opt_kmax = 0;
  auto* opt_kmax_opt = opt->add_option("--kmax", opt_kmax, "Max children per node");
  opt->add_flag("--sort", opt_args.sort, "Sort a non-monotone acceptance vector");
  opt->add_option("--fixed-table", opt_args.fixed_table,
                  "Also write the per-size comparison CSV here");
  opt->add_option("--out", opt_args.out, "Output JSON path")->required();
  opt->add_option("--config", "Config/manifest JSON supplying defaults");

  EstimateArgs est_args;
  auto* est = app.add_subcommand("estimate", "Measure the acceptance vector of a model pair");
  est->add_option("--pair", est_args.pair, "Model pair config JSON")->required();
  est->add_option("--verifier", est_args.verifier, "sequoia|specinfer|topk")->required();
  est->add_option("--kmax", est_args.kmax, "Number of child ranks to estimate");
  est->add_option("--contexts", est_args.contexts, "Contexts sampled from the target model");
  est->add_option("--trials", est_args.trials, "Monte Carlo trials per context (large vocab)");
  est->add_option("--seed", est_args.seed, "Master seed")->required();
  est->add_option("--curve", est_args.curve, "Rejection-curve CSV path");
  est->add_option("--out", est_args.out, "Output JSON path")->required();
  est->add_option("--config", "Config/manifest JSON supplying defaults");

  ExperimentArgs sim_args;
  auto* sim = app.add_subcommand("simulate", "Per-step decoding simulation for chosen cells");
  ExperimentArgs scal_args;
  auto* scal =
      app.add_subcommand("scaling", "Tokens/step curves across budgets and structures");
  for (auto [sub, args] : {std::pair{sim, &sim_args}, std::pair{scal, &scal_args}}) {
    sub->add_option("--pair", args->pair, "Model pair config JSON")->required();
    sub->add_option("--verifier", args->verifier, "sequoia|specinfer|topk")->required();
    sub->add_option("--budgets", args->budgets, "Comma-separated tree budgets");
    sub->add_option("--structures", args->structures,
                    "Comma-separated: sequoia|sequence|binary|k_independent:K|k_ary:K");
    sub->add_option("--steps", args->steps, "Decoding steps per cell");
    sub->add_option("--kmax", args->kmax, "Child ranks for estimation/planning");
    sub->add_option("--contexts", args->contexts, "Estimation contexts");
    sub->add_option("--trials", args->trials, "Monte Carlo trials per context (large vocab)");
    sub->add_option("--seed", args->seed, "Master seed")->required();
    sub->add_option("--cost", args->cost, "Optional cost model CSV");
    sub->add_option("--draft-seconds", args->draft_seconds, "Seconds per draft step");
    sub->add_option("--batch", args->batch, "Batch size b");
    sub->add_option("--threads", args->threads, "Worker threads")
        ->envname("SEQUOIA_LAB_THREADS");
    sub->add_option("--out", args->out, "Output directory")->required();
    sub->add_option("--config", "Config/manifest JSON supplying defaults");
  }

  std::uint64_t selfcheck_seed = 20240214;
  auto* self = app.add_subcommand("selfcheck", "Run the exhaustive verification oracles");
  self->add_option("--seed", selfcheck_seed, "Seed for the randomized checks");

  try {
    const auto args = expand_config(argc, argv);
    std::vector<const char*> cargv{argv[0]};
    for (const auto& a : args) cargv.push_back(a.c_str());
    try {
      app.parse(static_cast<int>(cargv.size()), const_cast<char**>(cargv.data()));
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? 0 : 2;
    }

    if (plan->parsed()) {
      if (*plan_depth_opt) plan_args.depth = plan_depth;
      if (*plan_kmax_opt) plan_args.kmax = plan_kmax;
      return cmd_plan(plan_args);
    }
    if (opt->parsed()) {
      if (*opt_kmax_opt) opt_args.kmax = opt_kmax;
      return cmd_optimize(opt_args);
    }
    if (est->parsed()) return cmd_estimate(est_args);
    if (sim->parsed()) return cmd_simulate(sim_args);
    if (scal->parsed()) return cmd_scaling(scal_args);
    if (self->parsed()) return cmd_selfcheck(selfcheck_seed);
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
