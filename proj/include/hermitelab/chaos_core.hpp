#pragma once

// Hermite polynomials, discretized multiple Wiener-Ito integrals, contractions,
// symmetrization, and Monte Carlo checks of the isometry and product formula.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "hermitelab/wiener_grid.hpp"

namespace hermitelab {

/// H_q(x) from H_0 = 1, H_1 = x, H_{k+1} = x H_k - k H_{k-1}.
double hermite_poly(int q, double x);

/// Homogeneous form variance^(q/2) * H_q(x / sqrt(variance)), computed by the
/// recursion He_{k+1} = x He_k - k * variance * He_{k-1}. Valid at variance 0.
double hermite_poly(int q, double x, double variance);

/// How index tuples that repeat a cell are treated.
///   kOffDiagonal: only tuples with pairwise distinct cells contribute.
///   kWick: every tuple contributes with the Wick product of its increments, i.e.
///          a cell used m times carries He_m(dB; width). This is the exact multiple
///          integral of the cell-constant kernel.
enum class DiagonalRule { kOffDiagonal, kWick };

/// weight * factors[0] (x) factors[1] (x) ... ; each factor is a per-cell vector.
struct TensorTerm {
  double weight = 1.0;
  std::vector<std::vector<double>> factors;
};

/// A function of `order` cell indices on one grid.
///
/// Always evaluable lazily through operator(). Two optional structures enable
/// faster routes: a dense table (order <= 2) and an expansion into tensor terms.
class DiscretizedKernel {
 public:
  using Eval = std::function<double(std::span<const std::size_t>)>;

  DiscretizedKernel(int order, GridPtr grid, Eval eval, bool symmetric);

  static DiscretizedKernel constant(GridPtr grid, double value);
  static DiscretizedKernel from_terms(GridPtr grid, std::vector<TensorTerm> terms,
                                      bool symmetric = false);
  /// Row-major table of n^order values, order in {1, 2}.
  static DiscretizedKernel from_dense(GridPtr grid, int order, std::vector<double> values,
                                      bool symmetric);

  int order() const { return order_; }
  const GridPtr& grid() const { return grid_; }
  bool symmetric() const { return symmetric_; }
  double operator()(std::span<const std::size_t> idx) const { return eval_(idx); }

  const std::vector<TensorTerm>* terms() const { return terms_.get(); }
  const std::vector<double>* dense() const { return dense_.get(); }

  /// Dense copy for order <= 2 kernels without structure; otherwise returns *this.
  DiscretizedKernel materialized() const;

 private:
  int order_;
  GridPtr grid_;
  Eval eval_;
  bool symmetric_;
  std::shared_ptr<const std::vector<TensorTerm>> terms_;
  std::shared_ptr<const std::vector<double>> dense_;
};

/// h (x) h (x) ... (x) h, q times.
DiscretizedKernel tensor_power(GridPtr grid, std::vector<double> h, int q);

/// a f + b g (same order and grid).
DiscretizedKernel linear_combination(double a, const DiscretizedKernel& f, double b,
                                     const DiscretizedKernel& g);

struct ChaosLimits {
  int q_max = 3;
  /// Largest n^q a brute-force tuple enumeration may visit (128^3).
  std::size_t max_tuples = std::size_t{1} << 21;
  /// Use tensor-term / dense structure when present. Off forces enumeration.
  bool use_structure = true;
};

/// Discrete I_q(f) on one sample. Throws ResourceError when the order exceeds
/// q_max or enumeration would exceed max_tuples, ShapeError on a grid mismatch.
double multiple_integral(const DiscretizedKernel& f, const WienerSample& sample,
                         DiagonalRule rule = DiagonalRule::kOffDiagonal,
                         const ChaosLimits& limits = {});

/// r-contraction over the first r arguments of f and g, weighted by cell widths.
DiscretizedKernel contraction(const DiscretizedKernel& f, const DiscretizedKernel& g, int r);

/// Average over all argument permutations. Order <= 4, else ResourceError.
DiscretizedKernel symmetrize(const DiscretizedKernel& f);

/// sum f g prod(width) over all tuples (kWick) or over distinct-cell tuples only
/// (kOffDiagonal), matching the second moment of the corresponding integral.
double inner_product(const DiscretizedKernel& f, const DiscretizedKernel& g,
                     DiagonalRule rule = DiagonalRule::kWick, const ChaosLimits& limits = {});

struct SamplingOptions {
  std::uint64_t seed = 1;
  std::uint64_t stream_base = 0;
  unsigned threads = 1;
  DiagonalRule rule = DiagonalRule::kOffDiagonal;
  ChaosLimits limits{};
};

struct IsometryReport {
  int p = 0;
  int q = 0;
  double estimate = 0.0;   ///< MC mean of I_p(f) I_q(g)
  double std_error = 0.0;
  double target = 0.0;     ///< p! <f~, g~> under the sampling rule, 0 when p != q
  std::size_t n_samples = 0;
  bool pass = false;       ///< |estimate - target| <= 3 std_error
};

IsometryReport isometry_check(const DiscretizedKernel& f, const DiscretizedKernel& g,
                              std::size_t n_samples, const SamplingOptions& options = {});

struct ProductFormulaReport {
  int p = 0;
  int q = 0;
  double mean_square_gap = 0.0;  ///< E[(I_p(f) I_q(g) - sum_r ...)^2]
  double mean_square_lhs = 0.0;  ///< E[(I_p(f) I_q(g))^2], for scale
  double threshold = 0.0;
  std::size_t n_samples = 0;
  bool pass = false;
};

/// Per-sample comparison of I_p(f) I_q(g) with
/// sum_r r! C(p,r) C(q,r) I_{p+q-2r}(f ~(x)_r g). Requires p + q <= 4.
ProductFormulaReport product_formula_check(const DiscretizedKernel& f, const DiscretizedKernel& g,
                                           std::size_t n_samples, double threshold,
                                           const SamplingOptions& options = {});

}  // namespace hermitelab
