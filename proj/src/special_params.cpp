#include "hermitelab/special_params.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "hermitelab/errors.hpp"

namespace hermitelab {
namespace {

double log_gamma(double x) {
  // lgamma_r leaves the global signgam untouched; arguments here are positive.
  int sign = 0;
  return ::lgamma_r(x, &sign);
}

double factorial(int n) {
  double f = 1.0;
  for (int k = 2; k <= n; ++k) f *= k;
  return f;
}

}  // namespace

double beta(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw DomainError("beta: arguments must be positive, got (" + std::to_string(a) + ", " +
                      std::to_string(b) + ")");
  }
  // Direct gamma ratio while it cannot overflow, log-gamma beyond.
  if (a + b < 100.0) return std::tgamma(a) * std::tgamma(b) / std::tgamma(a + b);
  return std::exp(log_gamma(a) + log_gamma(b) - log_gamma(a + b));
}

HermiteParams make_params(int q, double H) {
  if (q < 1) throw DomainError("make_params: order q must be >= 1, got " + std::to_string(q));
  if (!(H > 0.5 && H < 1.0)) {
    throw DomainError("make_params: H must lie in (1/2, 1), got " + std::to_string(H));
  }
  HermiteParams p;
  p.q = q;
  p.H = H;
  p.H0 = 1.0 + (H - 1.0) / q;
  p.kernel_exponent = p.H0 - 1.5;
  const double b = beta(p.H0 - 0.5, 2.0 - 2.0 * p.H0);
  p.c = std::sqrt(H * (2.0 * H - 1.0) / (factorial(q) * std::pow(b, q)));
  if (!(p.c > 0.0) || !std::isfinite(p.c)) {
    throw DomainError("make_params: c(H, q) is not a positive finite number");
  }
  return p;
}

double a_constant(const HermiteParams& params, int r) {
  if (r < 0 || r > params.q - 1) {
    throw DomainError("a_constant: r must lie in [0, q - 1], got " + std::to_string(r));
  }
  const double q = params.q;
  const double b = beta((2.0 - 2.0 * params.H) / q, 0.5 - (1.0 - params.H) / q);
  return params.c * params.c * std::pow(b, r + 1);
}

double beta_identity_rhs(double u, double v, double a) {
  if (!(a > -1.0 && a < -0.5)) {
    throw DomainError("beta_identity_rhs: exponent must lie in (-1, -1/2), got " +
                      std::to_string(a));
  }
  if (u == v) return std::numeric_limits<double>::infinity();
  return beta(-1.0 - 2.0 * a, a + 1.0) * std::pow(std::abs(u - v), 2.0 * a + 1.0);
}

double power_law_double_integral(double s, double t, double lambda) {
  if (!(s > 0.0) || !(t > 0.0)) {
    throw DomainError("power_law_double_integral: s and t must be positive");
  }
  if (!(lambda > -1.0 && lambda <= 0.0)) {
    throw DomainError("power_law_double_integral: lambda must lie in (-1, 0], got " +
                      std::to_string(lambda));
  }
  const double p = lambda + 2.0;
  return (std::pow(s, p) + std::pow(t, p) - std::pow(std::abs(t - s), p)) /
         ((lambda + 1.0) * (lambda + 2.0));
}

}  // namespace hermitelab
