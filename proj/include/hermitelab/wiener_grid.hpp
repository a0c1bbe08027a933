#pragma once

// Discretized two-sided Brownian motion: a cell grid on [x_min, x_max] and
// reproducible Gaussian increments on it.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "hermitelab/special_params.hpp"

namespace hermitelab {

/// Cells [edges[i], edges[i+1]) covering [x_min, x_max] with x_min < 0 < x_max.
///
/// Two layouts are produced by the builders below: a plain uniform grid, and a
/// graded grid that is uniform on [-U, x_max] and grows geometrically from -U down
/// to the truncation point -M. All cell-level quantities (increment variances,
/// inner products) use the per-cell widths, so both layouts share one contract.
class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> edges, bool uniform = false);

  double x_min() const { return edges_.front(); }
  double x_max() const { return edges_.back(); }
  std::size_t n_cells() const { return widths_.size(); }
  /// Width of the fine (uniform) cells.
  double delta() const { return delta_; }
  bool is_uniform() const { return uniform_; }

  std::span<const double> edges() const { return edges_; }
  std::span<const double> widths() const { return widths_; }
  std::span<const double> midpoints() const { return midpoints_; }

  /// Index e with edges[e] == t up to 1e-9 * delta, if any.
  std::optional<std::size_t> edge_index(double t) const;

  bool operator==(const TimeGrid& other) const { return edges_ == other.edges_; }

 private:
  std::vector<double> edges_;
  std::vector<double> widths_;
  std::vector<double> midpoints_;
  double delta_ = 0.0;
  bool uniform_ = false;
};

using GridPtr = std::shared_ptr<const TimeGrid>;

/// Uniform grid on [-M, x_max] with n_cells cells. Throws ConfigError for
/// n_cells < 2 or non-positive extents.
GridPtr build_grid(double M, double x_max, std::size_t n_cells);

struct GradedGridSpec {
  double M = 1e15;            ///< truncation point is -M
  double uniform_min = 1.0;   ///< U: the uniform region is [-U, x_max]
  double x_max = 2.0;
  std::size_t n_cells = 512;
  double tail_ratio = 1.5;    ///< upper bound on the geometric growth factor of tail cells
  int alignment = 2;          ///< uniform width is 1/k with k a multiple of this
};

/// Graded grid: uniform cells of width 1/k on [-U, x_max] (k the largest multiple
/// of `alignment` that leaves enough cells for the tail), then geometrically
/// growing cells down to -M. With M <= U the result is uniform on [-M, x_max].
GridPtr build_graded_grid(const GradedGridSpec& spec);

/// Truncation M for which the tail bound  M^(2H0-2) / (2 - 2H0)  equals
/// `tail_fraction`, capped at `cap`.
double default_truncation(const HermiteParams& params, double tail_fraction = 1e-4,
                          double cap = 1e30);

/// Counter-based generator: output k of stream (seed, stream_id) is a fixed
/// bijective mix of key(seed, stream_id) + (k + 1) * golden-ratio increment, so any
/// sample can be regenerated in isolation regardless of how work is scheduled.
class CounterRng {
 public:
  using result_type = std::uint64_t;
  CounterRng(std::uint64_t seed, std::uint64_t stream_id);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()();

  /// Standard normal via Box-Muller on consecutive outputs.
  double normal();

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// One Brownian path on a grid: increments[i] ~ Normal(0, widths[i]).
struct WienerSample {
  GridPtr grid;
  std::vector<double> increments;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
};

WienerSample sample_increments(const GridPtr& grid, std::uint64_t seed, std::uint64_t stream_id);

/// sum_i h[i] * dB[i]. Throws ShapeError on a length mismatch.
double wiener_integral(std::span<const double> h, const WienerSample& sample);

/// True when both grids are the same object or have identical edges.
bool same_grid(const TimeGrid& a, const TimeGrid& b);

}  // namespace hermitelab
