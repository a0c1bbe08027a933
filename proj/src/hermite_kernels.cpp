#include "hermitelab/hermite_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/legendre.hpp>

#include "hermitelab/errors.hpp"
#include "hermitelab/kernel_cache.hpp"
#include "hermitelab/numeric.hpp"

namespace hermitelab {
namespace {

double factorial(int n) {
  double f = 1.0;
  for (int k = 2; k <= n; ++k) f *= k;
  return f;
}

// Fixed-order dot product with four interleaved accumulators.
double dot(const double* a, const double* b, std::size_t n) {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc[0] += a[i] * b[i];
    acc[1] += a[i + 1] * b[i + 1];
    acc[2] += a[i + 2] * b[i + 2];
    acc[3] += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) acc[i & 3] += a[i] * b[i];
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

struct GaussRule {
  std::vector<double> x;  // on [0, 1]
  std::vector<double> w;
};

GaussRule gauss_legendre_unit(int n) {
  if (n < 1 || n > 64) throw ConfigError("quadrature nodes must lie in [1, 64]", "quad.nodes");
  const auto zeros = boost::math::legendre_p_zeros<double>(n);
  GaussRule rule;
  for (double z : zeros) {
    const double dp = boost::math::legendre_p_prime(n, z);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    if (z == 0.0) {
      rule.x.push_back(0.5);
      rule.w.push_back(0.5 * w);
    } else {
      rule.x.push_back(0.5 * (1.0 - z));
      rule.w.push_back(0.5 * w);
      rule.x.push_back(0.5 * (1.0 + z));
      rule.w.push_back(0.5 * w);
    }
  }
  std::vector<std::size_t> order(rule.x.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return rule.x[a] < rule.x[b]; });
  GaussRule sorted;
  for (auto k : order) {
    sorted.x.push_back(rule.x[k]);
    sorted.w.push_back(rule.w[k]);
  }
  return sorted;
}

// Average over [lo, hi] of (s - xi)_+^a, with p = a + 1.
double cell_average(double s, double lo, double hi, double p) {
  if (s <= lo) return 0.0;
  const double width = hi - lo;
  const double d = s - lo;
  if (s <= hi) return std::pow(d, p) / (p * width);
  return -std::pow(d, p) * std::expm1(p * std::log1p(-width / d)) / (p * width);
}

}  // namespace

double kernel_value(const KernelSpec& spec, std::span<const double> xi) {
  const auto& params = spec.params;
  if (xi.size() != static_cast<std::size_t>(params.q)) {
    throw ShapeError("kernel_value: expected " + std::to_string(params.q) + " arguments, got " +
                     std::to_string(xi.size()));
  }
  const double t = spec.t;
  if (t == 0.0) return 0.0;
  const double lo = std::min(0.0, t);
  const double hi = std::max(0.0, t);
  const double sign = t > 0.0 ? 1.0 : -1.0;
  const double a = params.kernel_exponent;

  const double xi_max = *std::max_element(xi.begin(), xi.end());
  if (xi_max >= hi) return 0.0;
  int mult = 0;
  for (double x : xi) mult += (x == xi_max) ? 1 : 0;
  const double start = std::max(lo, xi_max);
  const bool singular_inside = xi_max >= lo;
  double p = 1.0;
  if (singular_inside) {
    p = mult * a + 1.0;
    if (p <= 0.0) return sign * std::numeric_limits<double>::infinity();
  }

  // Remaining product after the factors at xi_max are absorbed by w = (s - xi_max)^p.
  auto rest = [&](double s) {
    double prod = 1.0;
    for (double x : xi) {
      if (singular_inside && x == xi_max) continue;
      prod *= std::pow(s - x, a);
    }
    return prod;
  };
  auto s_of_w = [&](double w) { return xi_max + std::pow(w, 1.0 / p); };

  std::vector<double> breaks = {start};
  if (spec.quad.split_singularities) {
    for (double x : xi) {
      const double s = xi_max + (xi_max - x);
      if (x < xi_max && s > start && s < hi) breaks.push_back(s);
    }
  }
  breaks.push_back(hi);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  double total = 0.0;
  double total_error = 0.0;
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    double err = 0.0;
    double value = 0.0;
    if (singular_inside) {
      const double w0 = std::pow(breaks[k] - xi_max, p);
      const double w1 = std::pow(breaks[k + 1] - xi_max, p);
      value = GK::integrate([&](double w) { return rest(s_of_w(w)) / p; }, w0, w1,
                            static_cast<unsigned>(spec.quad.max_depth), spec.quad.tol, &err);
    } else {
      value = GK::integrate(rest, breaks[k], breaks[k + 1],
                            static_cast<unsigned>(spec.quad.max_depth), spec.quad.tol, &err);
    }
    total += value;
    total_error += err;
  }
  if (!(total_error <= spec.quad.tol * std::abs(total) + 1e-300) || !std::isfinite(total)) {
    throw NumericError("kernel_value: quadrature error estimate " + std::to_string(total_error) +
                           " exceeds tolerance for q=" + std::to_string(params.q) +
                           " H=" + std::to_string(params.H) + " t=" + std::to_string(t),
                       "kernel(q=" + std::to_string(params.q) + ",H=" + std::to_string(params.H) +
                           ",t=" + std::to_string(t) + ")");
  }
  return sign * params.c * total;
}

CellKernel::CellKernel(const HermiteParams& params, GridPtr grid, double t,
                       const QuadratureSettings& quad)
    : q_(params.q), t_(t), grid_(std::move(grid)) {
  const auto edges = grid_->edges();
  const double lo = std::min(0.0, t);
  const double hi = std::max(0.0, t);
  const double sign = t >= 0.0 ? 1.0 : -1.0;
  const double p = params.kernel_exponent + 1.0;
  active_ = 0;
  while (active_ < grid_->n_cells() && edges[active_] < hi) ++active_;
  if (t == 0.0) active_ = 0;

  std::vector<double> breaks = {lo};
  for (double e : edges) {
    if (e > lo && e < hi) breaks.push_back(e);
  }
  breaks.push_back(hi);
  const GaussRule rule = gauss_legendre_unit(quad.nodes);
  if (t != 0.0) {
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
      const double e = breaks[k];
      const double h = breaks[k + 1] - e;
      for (std::size_t m = 0; m < rule.x.size(); ++m) {
        const double u = rule.x[m];
        const double s = e + h * u * u * u;
        weights_.push_back(sign * params.c * rule.w[m] * 3.0 * h * u * u);
        for (std::size_t i = 0; i < active_; ++i) {
          factors_.push_back(cell_average(s, edges[i], edges[i + 1], p));
        }
      }
    }
  }
  finish();
}

CellKernel::CellKernel(const HermiteParams& params, GridPtr grid, double t, std::size_t active,
                       std::vector<double> weights, std::vector<double> factors)
    : q_(params.q),
      t_(t),
      grid_(std::move(grid)),
      active_(active),
      weights_(std::move(weights)),
      factors_(std::move(factors)) {
  if (active_ > grid_->n_cells() || factors_.size() != weights_.size() * active_) {
    throw ShapeError("CellKernel: inconsistent node data");
  }
  finish();
}

void CellKernel::finish() {
  const auto widths = grid_->widths();
  const std::size_t nodes = weights_.size();
  sigma2_.assign(nodes, 0.0);
  std::vector<double> sq(active_);
  for (std::size_t m = 0; m < nodes; ++m) {
    const double* g = factors_.data() + m * active_;
    for (std::size_t i = 0; i < active_; ++i) sq[i] = g[i] * g[i] * widths[i];
    sigma2_[m] = pairwise_sum(sq);
  }
  dense_.clear();
  if (q_ == 1) {
    dense_.assign(active_, 0.0);
    std::vector<double> col(nodes);
    for (std::size_t i = 0; i < active_; ++i) {
      for (std::size_t m = 0; m < nodes; ++m) col[m] = weights_[m] * factors_[m * active_ + i];
      dense_[i] = pairwise_sum(col);
    }
  } else if (q_ == 2 && active_ > 0) {
    Eigen::MatrixXd G(nodes, active_);
    for (std::size_t m = 0; m < nodes; ++m) {
      for (std::size_t i = 0; i < active_; ++i) G(m, i) = factors_[m * active_ + i];
    }
    Eigen::VectorXd w(nodes);
    for (std::size_t m = 0; m < nodes; ++m) w(m) = weights_[m];
    const Eigen::MatrixXd F = G.transpose() * (w.asDiagonal() * G);
    dense_.resize(active_ * active_);
    for (std::size_t i = 0; i < active_; ++i) {
      for (std::size_t j = i; j < active_; ++j) {
        const double v = 0.5 * (F(i, j) + F(j, i));
        dense_[i * active_ + j] = v;
        dense_[j * active_ + i] = v;
      }
    }
  }
}

double CellKernel::operator()(std::span<const std::size_t> idx) const {
  for (std::size_t i : idx) {
    if (i >= active_) return 0.0;
  }
  if (q_ == 1) return dense_[idx[0]];
  if (q_ == 2) return dense_[idx[0] * active_ + idx[1]];
  double total = 0.0;
  for (std::size_t m = 0; m < weights_.size(); ++m) {
    double prod = weights_[m];
    for (std::size_t i : idx) prod *= factors_[m * active_ + i];
    total += prod;
  }
  return total;
}

DiscretizedKernel CellKernel::discretized() const {
  const std::size_t n = grid_->n_cells();
  if (q_ == 1) {
    std::vector<double> values(n, 0.0);
    std::copy(dense_.begin(), dense_.end(), values.begin());
    return DiscretizedKernel::from_dense(grid_, 1, std::move(values), true);
  }
  if (q_ == 2) {
    std::vector<double> values(n * n, 0.0);
    for (std::size_t i = 0; i < active_; ++i) {
      for (std::size_t j = 0; j < active_; ++j) values[i * n + j] = dense_[i * active_ + j];
    }
    return DiscretizedKernel::from_dense(grid_, 2, std::move(values), true);
  }
  if (weights_.empty()) return DiscretizedKernel::from_terms(
      grid_, {TensorTerm{0.0, std::vector<std::vector<double>>(q_, std::vector<double>(n, 0.0))}},
      true);
  std::vector<TensorTerm> terms;
  for (std::size_t m = 0; m < weights_.size(); ++m) {
    std::vector<double> g(n, 0.0);
    std::copy_n(factors_.begin() + static_cast<std::ptrdiff_t>(m * active_), active_, g.begin());
    terms.push_back(TensorTerm{weights_[m], std::vector<std::vector<double>>(q_, g)});
  }
  return DiscretizedKernel::from_terms(grid_, std::move(terms), true);
}

namespace {

// e_0..e_k of z, by Newton's identities from the power sums.
std::vector<double> elementary_symmetric(std::span<const double> power_sums, int k) {
  std::vector<double> e(k + 1, 0.0);
  e[0] = 1.0;
  for (int j = 1; j <= k; ++j) {
    double s = 0.0;
    for (int i = 1; i <= j; ++i) {
      s += ((i - 1) % 2 == 0 ? 1.0 : -1.0) * e[j - i] * power_sums[i];
    }
    e[j] = s / j;
  }
  return e;
}

}  // namespace

double CellKernel::evaluate(std::span<const double> increments, DiagonalRule rule) const {
  if (increments.size() != grid_->n_cells()) throw ShapeError("evaluate: increment length");
  const std::size_t n = active_;
  if (n == 0 || weights_.empty()) return 0.0;
  const double* y = increments.data();
  const auto widths = grid_->widths();
  if (q_ == 1) return dot(dense_.data(), y, n);
  if (q_ == 2) {
    std::vector<double> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = dense_.data() + i * n;
      const double diag = row[i];
      const double correction = rule == DiagonalRule::kWick ? diag * widths[i] : diag * y[i] * y[i];
      rows[i] = y[i] * dot(row, y, n) - correction;
    }
    return pairwise_sum(rows);
  }
  std::vector<double> terms(weights_.size());
  std::vector<double> z(n);
  for (std::size_t m = 0; m < weights_.size(); ++m) {
    const double* g = factors_.data() + m * n;
    if (rule == DiagonalRule::kWick) {
      terms[m] = weights_[m] * hermite_poly(q_, dot(g, y, n), sigma2_[m]);
    } else {
      std::vector<double> p(q_ + 1, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double zi = g[i] * y[i];
        double pw = zi;
        for (int k = 1; k <= q_; ++k) {
          p[k] += pw;
          pw *= zi;
        }
      }
      terms[m] = weights_[m] * factorial(q_) * elementary_symmetric(p, q_)[q_];
    }
  }
  return pairwise_sum(terms);
}

void CellKernel::derivative(std::span<const double> increments, DiagonalRule rule,
                            std::span<double> out) const {
  const std::size_t n_cells = grid_->n_cells();
  if (increments.size() != n_cells || out.size() != n_cells) {
    throw ShapeError("derivative: length mismatch");
  }
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t n = active_;
  if (n == 0 || weights_.empty()) return;
  const double* y = increments.data();
  if (q_ == 1) {
    std::copy(dense_.begin(), dense_.end(), out.begin());
    return;
  }
  if (q_ == 2) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = dense_.data() + i * n;
      double v = dot(row, y, n);
      if (rule == DiagonalRule::kOffDiagonal) v -= row[i] * y[i];
      out[i] = 2.0 * v;
    }
    return;
  }
  const std::size_t nodes = weights_.size();
  // coef[m][i] multiplies g_m(i); column sums over m are taken pairwise per cell.
  std::vector<double> coef(nodes * n);
  for (std::size_t m = 0; m < nodes; ++m) {
    const double* g = factors_.data() + m * n;
    if (rule == DiagonalRule::kWick) {
      const double c = weights_[m] * q_ * hermite_poly(q_ - 1, dot(g, y, n), sigma2_[m]);
      for (std::size_t i = 0; i < n; ++i) coef[m * n + i] = c * g[i];
    } else {
      std::vector<double> p(q_ + 1, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double zi = g[i] * y[i];
        double pw = zi;
        for (int k = 1; k <= q_; ++k) {
          p[k] += pw;
          pw *= zi;
        }
      }
      const auto e = elementary_symmetric(p, q_ - 1);
      const double scale = weights_[m] * factorial(q_);
      for (std::size_t i = 0; i < n; ++i) {
        const double zi = g[i] * y[i];
        double without = 0.0;
        double pw = 1.0;
        for (int j = 0; j <= q_ - 1; ++j) {
          without += pw * e[q_ - 1 - j];
          pw *= -zi;
        }
        coef[m * n + i] = scale * g[i] * without;
      }
    }
  }
  std::vector<double> col(nodes);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t m = 0; m < nodes; ++m) col[m] = coef[m * n + i];
    out[i] = pairwise_sum(col);
  }
}

double CellKernel::second_moment(DiagonalRule rule) const { return cross_moment(*this, rule); }

double CellKernel::cross_moment(const CellKernel& other, DiagonalRule rule) const {
  if (!same_grid(*grid_, *other.grid_)) throw ShapeError("cross_moment: grid mismatch");
  if (q_ != other.q_) return 0.0;
  const auto widths = grid_->widths();
  const std::size_t n = std::min(active_, other.active_);
  if (n == 0 || weights_.empty() || other.weights_.empty()) return 0.0;
  if (q_ == 1) {
    std::vector<double> terms(n);
    for (std::size_t i = 0; i < n; ++i) terms[i] = dense_[i] * other.dense_[i] * widths[i];
    return pairwise_sum(terms);
  }
  if (q_ == 2) {
    std::vector<double> rows(n);
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        row[j] = dense_[i * active_ + j] * other.dense_[i * other.active_ + j] * widths[i] * widths[j];
      }
      if (rule == DiagonalRule::kOffDiagonal) row[i] = 0.0;
      rows[i] = pairwise_sum(row);
    }
    return 2.0 * pairwise_sum(rows);
  }
  const std::size_t na = weights_.size();
  const std::size_t nb = other.weights_.size();
  std::vector<Eigen::MatrixXd> P;
  const int kmax = rule == DiagonalRule::kWick ? 1 : q_;
  for (int k = 1; k <= kmax; ++k) {
    Eigen::MatrixXd A(na, n);
    Eigen::MatrixXd B(nb, n);
    for (std::size_t m = 0; m < na; ++m) {
      for (std::size_t i = 0; i < n; ++i) {
        A(m, i) = std::pow(factors_[m * active_ + i], k) * std::pow(widths[i], k);
      }
    }
    for (std::size_t m = 0; m < nb; ++m) {
      for (std::size_t i = 0; i < n; ++i) B(m, i) = std::pow(other.factors_[m * other.active_ + i], k);
    }
    P.push_back(A * B.transpose());
  }
  std::vector<double> terms(na * nb);
  std::vector<double> p(q_ + 1, 0.0);
  for (std::size_t a = 0; a < na; ++a) {
    for (std::size_t b = 0; b < nb; ++b) {
      double v = 0.0;
      if (rule == DiagonalRule::kWick) {
        v = std::pow(P[0](a, b), q_);
      } else {
        // ordered distinct tuples: q! e_q of the per-cell products
        for (int k = 1; k <= q_; ++k) p[k] = P[k - 1](a, b);
        v = factorial(q_) * elementary_symmetric(p, q_)[q_];
      }
      terms[a * nb + b] = weights_[a] * other.weights_[b] * v;
    }
  }
  return factorial(q_) * pairwise_sum(terms);
}

HermiteProcess::HermiteProcess(const HermiteParams& params, GridPtr grid, ProcessOptions options)
    : params_(params), grid_(std::move(grid)), options_(std::move(options)) {
  if (!grid_) throw ShapeError("HermiteProcess requires a grid");
  if (params_.q > options_.q_max) {
    throw ResourceError("order q = " + std::to_string(params_.q) + " exceeds q_max = " +
                        std::to_string(options_.q_max));
  }
}

double HermiteProcess::snap_time(double t) const {
  if (!(t > grid_->x_min() && t <= grid_->x_max() + 1e-9 * grid_->delta())) {
    throw DomainError("time " + std::to_string(t) + " lies outside the grid");
  }
  if (t == 0.0) return 0.0;
  const auto e = grid_->edge_index(t);
  if (!e) throw DomainError("time " + std::to_string(t) + " is not a cell edge of the grid");
  return grid_->edges()[*e];
}

std::shared_ptr<const CellKernel> HermiteProcess::kernel(double t) const {
  const double exact = snap_time(t);
  const auto key = exact == 0.0 ? grid_->n_cells() + 1 : *grid_->edge_index(exact);
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = kernels_.find(key);
  if (it != kernels_.end()) return it->second;
  std::shared_ptr<const CellKernel> k;
  if (options_.cache_dir) {
    if (auto loaded = load_cell_kernel(*options_.cache_dir, params_, grid_, exact, options_.quad)) {
      k = std::make_shared<const CellKernel>(std::move(*loaded));
    }
  }
  if (!k) {
    k = std::make_shared<const CellKernel>(params_, grid_, exact, options_.quad);
    if (options_.cache_dir) store_cell_kernel(*options_.cache_dir, params_, *k, options_.quad);
  }
  kernels_.emplace(key, k);
  return k;
}

void HermiteProcess::prepare(std::span<const double> times) const {
  for (double t : times) kernel(t);
}

double HermiteProcess::value(double t, const WienerSample& sample) const {
  if (!same_grid(*grid_, *sample.grid)) throw ShapeError("sample grid differs from process grid");
  return kernel(t)->evaluate(sample.increments, options_.rule);
}

std::vector<double> HermiteProcess::values(std::span<const double> times,
                                           const WienerSample& sample) const {
  std::vector<double> out;
  out.reserve(times.size());
  for (double t : times) out.push_back(value(t, sample));
  return out;
}

DerivativeVector HermiteProcess::derivative(double t, const WienerSample& sample) const {
  if (!same_grid(*grid_, *sample.grid)) throw ShapeError("sample grid differs from process grid");
  DerivativeVector d;
  d.t = t;
  d.sample_id = sample.stream_id;
  d.grid = grid_;
  d.values.resize(grid_->n_cells());
  kernel(t)->derivative(sample.increments, options_.rule, d.values);
  return d;
}

std::vector<double> hermite_process_sample(const HermiteParams& params,
                                           std::span<const double> times,
                                           const WienerSample& sample,
                                           const ProcessOptions& options) {
  HermiteProcess process(params, sample.grid, options);
  return process.values(times, sample);
}

DerivativeVector malliavin_derivative(const HermiteParams& params, double t,
                                      const WienerSample& sample, const ProcessOptions& options) {
  HermiteProcess process(params, sample.grid, options);
  return process.derivative(t, sample);
}

double expected_derivative_inner(const HermiteParams& params, double s, double t) {
  if (!(s > 0.0 && t > 0.0)) throw DomainError("expected_derivative_inner: s, t must be > 0");
  const int q = params.q;
  return q * q * factorial(q - 1) * a_constant(params, q - 1) *
         power_law_double_integral(s, t, 2.0 * (params.H - 1.0));
}

}  // namespace hermitelab
