#pragma once

// The moving-average kernel L_t of the Hermite process, its cell-averaged
// discretization, process samples Z_t and pathwise Malliavin derivatives.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "hermitelab/chaos_core.hpp"
#include "hermitelab/special_params.hpp"
#include "hermitelab/wiener_grid.hpp"

namespace hermitelab {

struct QuadratureSettings {
  /// Gauss-Legendre nodes per sub-interval of [0, t] in the cell kernel.
  int nodes = 6;
  /// Relative tolerance of the adaptive point evaluation in kernel_value.
  double tol = 1e-10;
  int max_depth = 18;
  /// Split the s-integral at every xi_j inside the interval.
  bool split_singularities = true;
};

struct KernelSpec {
  HermiteParams params;
  double t = 1.0;
  QuadratureSettings quad{};
};

/// L_t(xi) = c * int_0^t prod_j (s - xi_j)_+^(H0 - 3/2) ds, and -c * int_t^0 for t < 0.
/// Throws NumericError when the adaptive quadrature misses its tolerance.
double kernel_value(const KernelSpec& spec, std::span<const double> xi);

/// Cell-averaged kernel for one time t, which must be a grid edge.
///
/// With g_s(i) the average of (s - xi)_+^(H0 - 3/2) over cell i, the cell kernel is
/// F(i_1..i_q) = sum_m w_m g_{s_m}(i_1) ... g_{s_m}(i_q), a quadrature in s over
/// [0, t] split at every cell edge. Only cells left of max(t, 0) are active; the
/// remaining entries are exactly zero.
class CellKernel {
 public:
  CellKernel() = default;
  CellKernel(const HermiteParams& params, GridPtr grid, double t, const QuadratureSettings& quad);
  /// Reassembles a kernel from stored node data (see kernel_cache).
  CellKernel(const HermiteParams& params, GridPtr grid, double t, std::size_t active,
             std::vector<double> weights, std::vector<double> factors);

  int order() const { return q_; }
  double time() const { return t_; }
  const GridPtr& grid() const { return grid_; }
  std::size_t active_cells() const { return active_; }
  std::size_t n_nodes() const { return weights_.size(); }
  std::span<const double> weights() const { return weights_; }
  /// Row-major n_nodes x active_cells table of g_{s_m}(i).
  std::span<const double> factors() const { return factors_; }

  /// F at a cell tuple.
  double operator()(std::span<const std::size_t> idx) const;

  /// Dense table for q <= 2 (active or active^2 entries, row-major), else empty.
  std::span<const double> dense() const { return dense_; }

  /// The kernel as a DiscretizedKernel on the full grid.
  DiscretizedKernel discretized() const;

  /// Discrete I_q(F) for the given increments.
  double evaluate(std::span<const double> increments, DiagonalRule rule) const;

  /// Partial derivatives of evaluate() in each increment, which equal
  /// q * I_{q-1}(F(., r)). Entries for inactive cells are zero.
  void derivative(std::span<const double> increments, DiagonalRule rule,
                  std::span<double> out) const;

  /// E[I_q(F)^2] under the rule, computed exactly from the kernel.
  double second_moment(DiagonalRule rule) const;

  /// E[I_q(F) I_q(G)] for two kernels on one grid.
  double cross_moment(const CellKernel& other, DiagonalRule rule) const;

 private:
  void finish();

  int q_ = 0;
  double t_ = 0.0;
  GridPtr grid_;
  std::size_t active_ = 0;
  std::vector<double> weights_;
  std::vector<double> factors_;
  std::vector<double> sigma2_;
  std::vector<double> dense_;
};

/// r -> D_r Z_t per cell for one sample.
struct DerivativeVector {
  std::vector<double> values;
  double t = 0.0;
  std::uint64_t sample_id = 0;
  GridPtr grid;
};

struct ProcessOptions {
  QuadratureSettings quad{};
  DiagonalRule rule = DiagonalRule::kWick;
  int q_max = 3;
  /// When set, cell kernels are persisted here between runs.
  std::optional<std::filesystem::path> cache_dir;
};

/// A Hermite process on one grid, with per-time kernels built lazily and shared
/// read-only across threads.
class HermiteProcess {
 public:
  HermiteProcess(const HermiteParams& params, GridPtr grid, ProcessOptions options = {});

  const HermiteParams& params() const { return params_; }
  const GridPtr& grid() const { return grid_; }
  const ProcessOptions& options() const { return options_; }

  /// Kernel for time t. Throws DomainError unless t is a grid edge in (x_min, x_max].
  std::shared_ptr<const CellKernel> kernel(double t) const;
  void prepare(std::span<const double> times) const;

  double value(double t, const WienerSample& sample) const;
  std::vector<double> values(std::span<const double> times, const WienerSample& sample) const;
  DerivativeVector derivative(double t, const WienerSample& sample) const;

 private:
  double snap_time(double t) const;

  HermiteParams params_;
  GridPtr grid_;
  ProcessOptions options_;
  mutable std::mutex mutex_;
  mutable std::map<std::size_t, std::shared_ptr<const CellKernel>> kernels_;
};

/// Z_{t_k} for one sample; builds its kernels on the sample's grid.
std::vector<double> hermite_process_sample(const HermiteParams& params,
                                           std::span<const double> times,
                                           const WienerSample& sample,
                                           const ProcessOptions& options = {});

DerivativeVector malliavin_derivative(const HermiteParams& params, double t,
                                      const WienerSample& sample,
                                      const ProcessOptions& options = {});

/// q^2 (q-1)! a(H, q, q-1) int_0^s int_0^t |u - v|^(2H - 2) du dv.
double expected_derivative_inner(const HermiteParams& params, double s, double t);

}  // namespace hermitelab
