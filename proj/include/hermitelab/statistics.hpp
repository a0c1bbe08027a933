#pragma once

// Empirical distributions, Kolmogorov-Smirnov tests and first-order dominance
// with a two-sample DKW band.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace hermitelab {

class EmpiricalDistribution {
 public:
  EmpiricalDistribution() = default;
  explicit EmpiricalDistribution(std::vector<double> samples);

  std::size_t n() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  std::span<const double> samples() const { return samples_; }
  /// Fraction of samples <= x.
  double cdf(double x) const;
  double quantile(double p) const;

 private:
  std::vector<double> samples_;
};

struct KsResult {
  double statistic = 0.0;
  double critical = 0.0;  ///< asymptotic critical value at the requested level
  double p_value = 1.0;
  bool reject = false;
};

/// Q_KS(lambda) = 2 sum_k (-1)^(k-1) exp(-2 k^2 lambda^2).
double kolmogorov_survival(double lambda);

/// c(alpha) = sqrt(-ln(alpha / 2) / 2).
double ks_critical_coefficient(double alpha);

KsResult ks_two_sample(const EmpiricalDistribution& x, const EmpiricalDistribution& y,
                       double alpha);

KsResult ks_one_sample(const EmpiricalDistribution& x, const std::function<double(double)>& cdf,
                       double alpha);

double standard_normal_cdf(double x);

struct DominanceResult {
  double max_violation = 0.0;  ///< sup_x F_X(x) - F_Y(x)
  double epsilon = 0.0;
  bool pass = false;
};

/// X dominates Y when sup_x (F_X - F_Y) <= sqrt(ln(2/alpha)/(2 n_X)) + sqrt(ln(2/alpha)/(2 n_Y)).
DominanceResult dominance(const EmpiricalDistribution& x, const EmpiricalDistribution& y,
                          double alpha);

struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

MeanEstimate mean_estimate(std::span<const double> x);

}  // namespace hermitelab
