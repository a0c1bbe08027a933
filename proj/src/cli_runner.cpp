#include "hermitelab/cli_runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "hermitelab/errors.hpp"

namespace hermitelab {
namespace {

using Json = nlohmann::ordered_json;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Json finite_or_string(double v) {
  if (std::isfinite(v)) return v;
  return num(v);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ResourceError("cannot write " + path.string());
  out << text;
  if (!out) throw ResourceError("write failed for " + path.string());
}

std::vector<std::pair<double, double>> positive_pairs(const ExperimentConfig& cfg) {
  for (const auto& [s, t] : cfg.pairs) {
    if (!(s > 0.0 && t > 0.0)) throw DomainError("pairs: times must be > 0");
  }
  return cfg.pairs;
}

std::vector<double> with_origin(const std::vector<double>& times) {
  std::vector<double> grid = {0.0};
  grid.insert(grid.end(), times.begin(), times.end());
  return grid;
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> list = {
      "simulate",       "validate-cov", "validate-ss", "validate-si",    "malliavin-ss",
      "gram-det",       "slnd",         "pathwise",    "det-positivity", "chaos-tests",
      "oracle",         "refine",       "fd-check",    "derivative-inner"};
  return list;
}

TestReport run_experiment(const std::string& sub, const ExperimentConfig& cfg) {
  const RunContext ctx{cfg.seed, cfg.threads};
  if (sub == "oracle") return gaussian_oracle(cfg.H, cfg.times);
  if (sub == "chaos-tests") {
    ChaosTestSettings s;
    s.isometry_cells = cfg.chaos_isometry_cells;
    s.product_cells = cfg.chaos_product_cells;
    s.n_samples = cfg.n_samples;
    return chaos_tests(s, ctx);
  }
  const auto params = config_params(cfg);
  const auto options = config_process_options(cfg);
  if (sub == "refine") {
    GradedGridSpec base;
    base.M = cfg.grid_M ? *cfg.grid_M : default_truncation(params);
    base.uniform_min = cfg.grid_uniform_min;
    base.x_max = cfg.grid_x_max;
    base.tail_ratio = cfg.grid_tail_ratio;
    base.alignment = cfg.grid_alignment;
    return refinement_study(params, base, cfg.refine_n_cells, options, cfg.n_samples, ctx);
  }
  const HermiteProcess process(params, config_grid(cfg, params), options);
  if (sub == "simulate") return simulate(process, cfg.times, cfg.n_samples, ctx);
  if (sub == "validate-cov") return covariance_validation(process, cfg.times, cfg.n_samples, ctx);
  if (sub == "validate-ss") {
    return self_similarity_test(process, cfg.scale, cfg.times, cfg.n_samples, cfg.alpha, ctx);
  }
  if (sub == "validate-si") {
    return stationary_increments_test(process, cfg.shift, cfg.times, cfg.n_samples, cfg.alpha, ctx);
  }
  if (sub == "malliavin-ss") {
    const auto pairs = positive_pairs(cfg);
    return malliavin_selfsim_test(process, cfg.scale, pairs, cfg.shift, cfg.n_samples, cfg.alpha,
                                  ctx);
  }
  if (sub == "gram-det") return gram_determinant_check(process, cfg.times, cfg.n_samples, ctx);
  if (sub == "slnd") {
    return slnd_dominance_test(process, with_origin(cfg.times), cfg.j, cfg.n_samples, cfg.alpha,
                               ctx);
  }
  if (sub == "pathwise") {
    return pathwise_residual_inequality(process, with_origin(cfg.times), cfg.n_samples, ctx);
  }
  if (sub == "det-positivity") {
    return det_positivity_experiment(process, cfg.times, cfg.n_samples, cfg.floor, ctx);
  }
  if (sub == "fd-check") {
    return derivative_fd_check(process, cfg.times.front(), cfg.n_samples, ctx);
  }
  if (sub == "derivative-inner") {
    const auto pairs = positive_pairs(cfg);
    return derivative_inner_validation(process, pairs, cfg.n_samples, ctx);
  }
  throw ConfigError("unknown subcommand '" + sub + "'", "subcommand", 0);
}

void write_outputs(const std::filesystem::path& out_dir, const std::string& sub,
                   const ExperimentConfig& cfg, const TestReport& report, double wall_seconds) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw ResourceError("cannot create " + out_dir.string() + ": " + ec.message());

  std::string csv;
  for (std::size_t k = 0; k < report.columns.size(); ++k) {
    csv += (k ? "," : "") + report.columns[k].name;
  }
  csv += "\n";
  for (const auto& row : report.rows) {
    for (std::size_t k = 0; k < row.size(); ++k) csv += (k ? "," : "") + num(row[k]);
    csv += "\n";
  }
  write_file(out_dir / (sub + ".csv"), csv);

  Json config = Json::object();
  for (const auto& [k, v] : canonical_entries(cfg)) config[k] = v;
  Json manifest;
  manifest["tool"] = "hermitelab";
  manifest["version"] = kToolVersion;
  manifest["subcommand"] = sub;
  manifest["config_hash"] = config_hash(cfg);
  manifest["config"] = config;
  manifest["seed"] = cfg.seed;
  manifest["streams"] =
      "sample k of side s uses stream (tag << 48) | (s << 40) | k; tag fixed per experiment";
  manifest["sampling"] = "two-sample tests draw each side on its own independent streams";

  Json columns = Json::array();
  for (const auto& c : report.columns) columns.push_back({{"name", c.name}, {"doc", c.doc}});
  Json tests = Json::array();
  for (const auto& c : report.checks) {
    tests.push_back({{"name", c.name},
                     {"pass", c.pass},
                     {"statistic", finite_or_string(c.statistic)},
                     {"threshold", finite_or_string(c.threshold)}});
  }
  Json metrics = Json::object();
  for (const auto& [k, v] : report.metrics) metrics[k] = finite_or_string(v);

  Json summary;
  summary["name"] = report.name;
  summary["pass"] = report.pass;
  summary["statistic"] = finite_or_string(report.statistic);
  summary["threshold"] = finite_or_string(report.threshold);
  summary["n_samples"] = report.n_samples;
  summary["manifest"] = manifest;
  summary["csv"] = sub + ".csv";
  summary["columns"] = columns;
  summary["tests"] = tests;
  summary["metrics"] = metrics;
  summary["notes"] = report.notes;
  write_file(out_dir / (sub + ".json"), summary.dump(2) + "\n");

  Json timing;
  timing["config_hash"] = config_hash(cfg);
  timing["threads"] = cfg.threads;
  timing["wall_clock_seconds"] = wall_seconds;
  write_file(out_dir / (sub + ".timing.json"), timing.dump(2) + "\n");
}

int run(const RunRequest& request, std::ostream& out, std::ostream& err) {
  try {
    const auto& subs = subcommands();
    if (std::find(subs.begin(), subs.end(), request.subcommand) == subs.end()) {
      throw ConfigError("unknown subcommand '" + request.subcommand + "'", "subcommand", 0);
    }
    ExperimentConfig cfg = load_config(request.config_path);
    if (request.threads) {
      if (*request.threads < 1) throw ConfigError("--threads must be >= 1", "--threads", 0);
      cfg.threads = *request.threads;
    }
    if (request.seed) cfg.seed = *request.seed;
    if (request.subcommand != "oracle" && request.subcommand != "chaos-tests") {
      require_process_params(cfg);
    }
    const auto start = std::chrono::steady_clock::now();
    TestReport report;
    try {
      report = run_experiment(request.subcommand, cfg);
    } catch (const DomainError& e) {
      throw ConfigError(std::string("invalid configuration: ") + e.what(), "", 0);
    } catch (const ShapeError& e) {
      throw ConfigError(std::string("invalid configuration: ") + e.what(), "", 0);
    } catch (const ResourceError& e) {
      throw ConfigError(std::string("invalid configuration: ") + e.what(), "", 0);
    }
    report.manifest = config_hash(cfg);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_outputs(request.out_dir, request.subcommand, cfg, report, wall);
    out << request.subcommand << ": " << (report.pass ? "PASS" : "FAIL") << " (" << report.name
        << ", statistic " << report.statistic << ", threshold " << report.threshold << ")\n";
    return report.pass ? kExitPass : kExitTestFailure;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const NumericError& e) {
    err << "numeric error [" << e.key() << "]: " << e.what() << "\n";
    return kExitNumericError;
  } catch (const ResourceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfigError;
  }
}

}  // namespace hermitelab
