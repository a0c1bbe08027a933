#pragma once

// Flat `key = value` experiment configuration. Lists are comma separated,
// pairs are written s:t, `#` starts a comment.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hermitelab/chaos_core.hpp"
#include "hermitelab/hermite_kernels.hpp"
#include "hermitelab/wiener_grid.hpp"

namespace hermitelab {

struct ExperimentConfig {
  int q = 2;
  double H = 0.7;

  std::string grid_layout = "graded";  ///< graded | uniform
  std::optional<double> grid_M;        ///< unset: default_truncation
  double grid_x_max = 2.0;
  std::size_t grid_n_cells = 512;
  double grid_uniform_min = 1.0;
  double grid_tail_ratio = 1.5;
  int grid_alignment = 2;

  std::vector<double> times = {1.0, 2.0};
  std::vector<std::pair<double, double>> pairs = {{0.5, 1.0}};
  std::size_t n_samples = 10000;
  double alpha = 0.01;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  int quad_nodes = 6;
  double quad_tol = 1e-10;
  DiagonalRule diagonal = DiagonalRule::kWick;
  int q_max = 3;

  double scale = 2.0;       ///< c in the self-similarity tests
  double shift = 0.5;       ///< h / a in the stationarity tests
  double floor = 1e-12;     ///< det floor, relative to prod |DZ_t|^2
  std::size_t j = 2;        ///< level in the dominance test
  std::optional<std::string> cache_dir;
  std::vector<std::size_t> refine_n_cells = {128, 256, 512};
  std::size_t chaos_isometry_cells = 64;
  std::size_t chaos_product_cells = 256;

  std::string source = "<config>";
  std::map<std::string, int> key_lines;  ///< line each key was set on
};

/// Parses config text; `source` names the origin in diagnostics. Throws
/// ConfigError carrying the line and key on unknown keys or invalid values.
ExperimentConfig parse_config(std::string_view text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Checks (q, H) against the process domain H in (1/2, 1). Parsing only asks
/// for H in (0, 1) since the Gaussian oracle accepts the full range.
void require_process_params(const ExperimentConfig& cfg);

/// Every key with its normalized value, sorted by key. `threads` is excluded
/// because it never changes the outputs.
std::vector<std::pair<std::string, std::string>> canonical_entries(const ExperimentConfig& cfg);

/// FNV-1a over the canonical entries, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

HermiteParams config_params(const ExperimentConfig& cfg);
GridPtr config_grid(const ExperimentConfig& cfg, const HermiteParams& params);
ProcessOptions config_process_options(const ExperimentConfig& cfg);

}  // namespace hermitelab
