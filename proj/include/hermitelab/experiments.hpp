#pragma once

// Monte Carlo and exact verification suites. Every experiment draws sample k of
// side `side` from the stream stream_id(tag, side, k), so results depend only on
// the seed and never on the worker count.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hermitelab/hermite_kernels.hpp"
#include "hermitelab/malliavin_gram.hpp"
#include "hermitelab/statistics.hpp"

namespace hermitelab {

struct Column {
  std::string name;
  std::string doc;
};

struct Check {
  std::string name;
  bool pass = false;
  double statistic = 0.0;
  double threshold = 0.0;
};

struct TestReport {
  std::string name;
  bool pass = false;
  double statistic = 0.0;  ///< statistic of the worst check
  double threshold = 0.0;
  std::size_t n_samples = 0;
  std::string manifest;    ///< config hash of the producing run, filled by the runner
  std::vector<Check> checks;
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::string> notes;
  std::vector<Column> columns;
  std::vector<std::vector<double>> rows;

  void add_check(Check c);
  void add_metric(std::string key, double value) { metrics.emplace_back(std::move(key), value); }
  double metric(const std::string& key) const;
};

struct RunContext {
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

enum class StreamTag : std::uint64_t {
  kSimulate = 1,
  kCovariance = 2,
  kSelfSimilarity = 3,
  kStationarity = 4,
  kMalliavinSelfSim = 5,
  kPathwise = 6,
  kSlnd = 7,
  kDeterminant = 8,
  kChaos = 9,
  kRefine = 10,
  kDerivativeInner = 11,
  kFiniteDifference = 12,
  kGram = 13,
};

std::uint64_t stream_id(StreamTag tag, std::uint64_t side, std::uint64_t index);

/// fBm covariance (|s|^2H + |t|^2H - |t - s|^2H) / 2.
double fbm_covariance(double H, double s, double t);

TestReport stochastic_dominance(const EmpiricalDistribution& x, const EmpiricalDistribution& y,
                                double alpha);

/// Raw samples Z_{t_k}, one row per sample.
TestReport simulate(const HermiteProcess& process, std::span<const double> times,
                    std::size_t n_samples, const RunContext& ctx);

/// MC second moments E[Z_s Z_t] against the fBm covariance; each entry must lie
/// within 4 standard errors plus `allowance` * |target|.
TestReport covariance_validation(const HermiteProcess& process, std::span<const double> times,
                                 std::size_t n_samples, const RunContext& ctx,
                                 double allowance = 0.05);

TestReport self_similarity_test(const HermiteProcess& process, double c,
                                std::span<const double> times, std::size_t n_samples,
                                double alpha, const RunContext& ctx);

/// Z_{t+h} - Z_h against Z_t per t, plus Z_t against -Z_{-t} when -t is a grid edge.
TestReport stationary_increments_test(const HermiteProcess& process, double h,
                                      std::span<const double> times, std::size_t n_samples,
                                      double alpha, const RunContext& ctx);

/// <DZ_cs, DZ_ct> against c^2H <DZ_s, DZ_t>, and <D(Z_{s+a} - Z_a), D(Z_{t+a} - Z_a)>
/// against <DZ_s, DZ_t>. For q = 1 both sides are deterministic and compared as a
/// ratio within 1%.
TestReport malliavin_selfsim_test(const HermiteProcess& process, double c,
                                  std::span<const std::pair<double, double>> pairs, double shift,
                                  std::size_t n_samples, double alpha, const RunContext& ctx);

/// Residual of DZ_{t_j} over span{DZ_{t_1..t_{j-1}}} against the residual of
/// D(Z_{t_j} - Z_{t_{j-1}}) over span{D(Z_{t_k} - Z_{t_l}) : l < k <= j-1}, for
/// every j and sample. time_grid must start at 0.
TestReport pathwise_residual_inequality(const HermiteProcess& process,
                                        std::span<const double> time_grid, std::size_t n_samples,
                                        const RunContext& ctx, double slack = 1e-8);

TestReport slnd_dominance_test(const HermiteProcess& process, std::span<const double> time_grid,
                               std::size_t j, std::size_t n_samples, double alpha,
                               const RunContext& ctx);

/// Factorizes the derivative vectors at `times` per sample. The floor for sample
/// k is floor_scale * prod_j |DZ_{t_j}|^2.
TestReport det_positivity_experiment(const HermiteProcess& process, std::span<const double> times,
                                     std::size_t n_samples, double floor_scale,
                                     const RunContext& ctx);

/// Per-sample comparison of the vector factorization with the LU determinant of
/// the assembled Gram matrix, plus symmetry and PSD checks.
TestReport gram_determinant_check(const HermiteProcess& process, std::span<const double> times,
                                  std::size_t n_samples, const RunContext& ctx);

struct GaussianOracleResult {
  double det_elimination = 0.0;
  double det_conditional = 0.0;
  std::vector<double> conditional_variances;
  /// min_k Var(Z_k | past) / (t_k - t_{k-1})^2H with t_0 = 0.
  double best_constant = 0.0;
};

GaussianOracleResult gaussian_oracle_values(double H, std::span<const double> times);
TestReport gaussian_oracle(double H, std::span<const double> times);

/// Max relative gap between the derivative and central differences of Z_t in
/// each increment (step 1e-5 sqrt(width)).
TestReport derivative_fd_check(const HermiteProcess& process, double t, std::size_t n_samples,
                               const RunContext& ctx, double tolerance = 1e-4);

/// MC mean of <DZ_s, DZ_t> against expected_derivative_inner within 4 standard
/// errors plus `allowance` * target.
TestReport derivative_inner_validation(const HermiteProcess& process,
                                       std::span<const std::pair<double, double>> pairs,
                                       std::size_t n_samples, const RunContext& ctx,
                                       double allowance = 0.05);

struct ChaosTestSettings {
  std::size_t isometry_cells = 64;
  std::size_t product_cells = 256;
  std::size_t n_samples = 20000;
  double threshold_11 = 1e-2;
  double threshold_12 = 1e-1;
};

/// Isometry for (1,1), (1,2), (2,2) and the product formula for (1,1), (1,2) on
/// unit-norm indicator kernels, under both diagonal rules.
TestReport chaos_tests(const ChaosTestSettings& settings, const RunContext& ctx);

/// Var(Z_1) (MC and exact) on graded grids of increasing size built from `base`.
TestReport refinement_study(const HermiteParams& params, const GradedGridSpec& base,
                            std::span<const std::size_t> n_cells, const ProcessOptions& options,
                            std::size_t n_samples, const RunContext& ctx,
                            double allowance = 0.05);

}  // namespace hermitelab
