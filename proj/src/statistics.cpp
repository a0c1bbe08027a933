#include "hermitelab/statistics.hpp"

#include <algorithm>
#include <cmath>

#include "hermitelab/errors.hpp"
#include "hermitelab/numeric.hpp"

namespace hermitelab {

EmpiricalDistribution::EmpiricalDistribution(std::vector<double> samples)
    : samples_(std::move(samples)) {
  for (double v : samples_) {
    if (std::isnan(v)) throw DomainError("EmpiricalDistribution: NaN sample");
  }
  std::sort(samples_.begin(), samples_.end());
}

double EmpiricalDistribution::cdf(double x) const {
  if (samples_.empty()) throw DomainError("cdf of an empty distribution");
  const auto it = std::upper_bound(samples_.begin(), samples_.end(), x);
  return static_cast<double>(it - samples_.begin()) / static_cast<double>(samples_.size());
}

double EmpiricalDistribution::quantile(double p) const {
  if (samples_.empty()) throw DomainError("quantile of an empty distribution");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("quantile: p outside [0, 1]");
  const auto n = samples_.size();
  auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
  k = std::clamp<std::size_t>(k, 1, n);
  return samples_[k - 1];
}

double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.3) {
    // Jacobi form converges faster for small lambda.
    const double c = std::sqrt(2.0 * 3.141592653589793) / lambda;
    double s = 0.0;
    for (int k = 1; k <= 50; ++k) {
      const double z = (2 * k - 1) * 3.141592653589793 / (2.0 * lambda);
      s += std::exp(-z * z / 2.0);
    }
    return std::clamp(1.0 - c * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 == 1 ? term : -term);
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

double ks_critical_coefficient(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  return std::sqrt(-0.5 * std::log(alpha / 2.0));
}

KsResult ks_two_sample(const EmpiricalDistribution& x, const EmpiricalDistribution& y,
                       double alpha) {
  if (x.empty() || y.empty()) throw DomainError("ks_two_sample: empty sample");
  const auto a = x.samples();
  const auto b = y.samples();
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  KsResult r;
  r.statistic = d;
  const double ne = na * nb / (na + nb);
  r.critical = ks_critical_coefficient(alpha) / std::sqrt(ne);
  const double sq = std::sqrt(ne);
  r.p_value = kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d);
  r.reject = d > r.critical;
  return r;
}

KsResult ks_one_sample(const EmpiricalDistribution& x, const std::function<double(double)>& cdf,
                       double alpha) {
  if (x.empty()) throw DomainError("ks_one_sample: empty sample");
  const auto s = x.samples();
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double f = cdf(s[k]);
    d = std::max({d, static_cast<double>(k + 1) / n - f, f - static_cast<double>(k) / n});
  }
  KsResult r;
  r.statistic = d;
  r.critical = ks_critical_coefficient(alpha) / std::sqrt(n);
  const double sq = std::sqrt(n);
  r.p_value = kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d);
  r.reject = d > r.critical;
  return r;
}

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

DominanceResult dominance(const EmpiricalDistribution& x, const EmpiricalDistribution& y,
                          double alpha) {
  if (x.empty() || y.empty()) throw DomainError("stochastic_dominance: empty sample");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  const auto a = x.samples();
  const auto b = y.samples();
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double worst = 0.0;
  while (i < a.size() || j < b.size()) {
    double v;
    if (i == a.size()) {
      v = b[j];
    } else if (j == b.size()) {
      v = a[i];
    } else {
      v = std::min(a[i], b[j]);
    }
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    worst = std::max(worst, static_cast<double>(i) / na - static_cast<double>(j) / nb);
  }
  DominanceResult r;
  r.max_violation = worst;
  const double l = std::log(2.0 / alpha);
  r.epsilon = std::sqrt(l / (2.0 * na)) + std::sqrt(l / (2.0 * nb));
  r.pass = worst <= r.epsilon;
  return r;
}

MeanEstimate mean_estimate(std::span<const double> x) {
  MeanEstimate m;
  if (x.empty()) return m;
  const double n = static_cast<double>(x.size());
  m.mean = pairwise_sum(x) / n;
  std::vector<double> dev(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) dev[k] = (x[k] - m.mean) * (x[k] - m.mean);
  m.std_error = x.size() > 1 ? std::sqrt(pairwise_sum(dev) / (n - 1.0) / n) : 0.0;
  return m;
}

}  // namespace hermitelab
