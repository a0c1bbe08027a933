#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <gtest/gtest.h>

#include "hermitelab/errors.hpp"
#include "hermitelab/special_params.hpp"

using namespace hermitelab;

namespace {

using Big = boost::multiprecision::cpp_bin_float_50;

double beta_hp(double a, double b) {
  const Big x(a), y(b);
  return static_cast<double>(boost::multiprecision::tgamma(x) * boost::multiprecision::tgamma(y) /
                             boost::multiprecision::tgamma(x + y));
}

// int over y < min(u, v) of (u - y)^a (v - y)^a, integrated to depth L and closed with
// the tail estimate, which lies between (1 + 1/L)^a L^(2a+1)/(-2a-1) and L^(2a+1)/(-2a-1).
double beta_identity_oracle(double u, double v, double a) {
  const double L = 1e6;
  boost::math::quadrature::tanh_sinh<double> ts;
  auto f = [&](double x) { return std::pow(x, a) * std::pow(x + std::abs(u - v), a); };
  // x = lo - y ranges over [0, L]; split at 1 so the endpoint singularity is isolated.
  const double near = ts.integrate(f, 0.0, 1.0, 1e-13);
  const double far = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      [&](double w) {
        // x = exp(w)
        const double x = std::exp(w);
        return f(x) * x;
      },
      0.0, std::log(L), 20, 1e-13);
  const double upper = std::pow(L, 2 * a + 1) / (-2 * a - 1);
  const double lower = std::pow(1 + std::abs(u - v) / L, a) * upper;
  return near + far + 0.5 * (upper + lower);
}

double double_integral_oracle(double s, double t, double lambda) {
  boost::math::quadrature::tanh_sinh<double> ts;
  auto w_pow = [&](double w) { return std::pow(w, lambda); };
  auto inner = [&](double u) {
    // int_0^t |u - v|^lambda dv in the distance variable w = |u - v|
    double acc = 0.0;
    const double m = std::min(u, t);
    if (m > 0) acc += ts.integrate(w_pow, u - m, u, 1e-12);
    if (t > u) acc += ts.integrate(w_pow, 0.0, t - u, 1e-12);
    return acc;
  };
  double acc = 0.0;
  const double split = std::min(s, t);
  acc += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(inner, 0.0, split, 15, 1e-12);
  if (s > split) {
    acc += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(inner, split, s, 15, 1e-12);
  }
  return acc;
}

}  // namespace

TEST(Beta, KnownValues) {
  EXPECT_NEAR(beta(1, 1), 1.0, 1e-15);
  EXPECT_NEAR(beta(0.5, 0.5), std::numbers::pi, 1e-13);
  EXPECT_NEAR(beta(2, 3), 1.0 / 12.0, 1e-15);
}

TEST(Beta, MatchesHighPrecision) {
  for (double a : {0.05, 0.25, 0.5, 1.3, 7.5, 60.0, 120.0}) {
    for (double b : {0.1, 0.5, 2.0, 45.0, 99.0}) {
      const double expect = beta_hp(a, b);
      EXPECT_NEAR(beta(a, b) / expect, 1.0, 1e-12) << a << " " << b;
    }
  }
}

TEST(Beta, SymmetricOnRandomPairs) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(1e-3, 50.0);
  for (int k = 0; k < 10000; ++k) {
    const double a = u(rng), b = u(rng);
    EXPECT_EQ(beta(a, b), beta(b, a));
  }
}

TEST(Beta, RejectsNonPositive) {
  EXPECT_THROW(beta(0.0, 1.0), DomainError);
  EXPECT_THROW(beta(1.0, -2.0), DomainError);
}

TEST(MakeParams, OrderOneThreeQuarters) {
  const auto p = make_params(1, 0.75);
  EXPECT_DOUBLE_EQ(p.H0, 0.75);
  EXPECT_NEAR(p.c, std::sqrt(0.75 * 0.5 / beta_hp(0.25, 0.5)), 1e-13);
  EXPECT_DOUBLE_EQ(p.kernel_exponent, -0.75);
}

TEST(MakeParams, DerivedIndex) {
  EXPECT_NEAR(make_params(2, 0.6).H0, 0.8, 1e-15);
  for (int q = 1; q <= 5; ++q) {
    for (double H : {0.51, 0.6, 0.75, 0.99}) {
      const auto p = make_params(q, H);
      EXPECT_GT(p.c, 0.0);
      EXPECT_TRUE(std::isfinite(p.c));
      EXPECT_GT(p.H0, 1.0 - 1.0 / (2.0 * q));
      EXPECT_LT(p.H0, 1.0);
      EXPECT_LT(p.kernel_exponent, -0.5);
      EXPECT_GT(p.kernel_exponent, -0.5 - 1.0 / (2.0 * q));
    }
  }
}

TEST(MakeParams, RejectsInvalid) {
  EXPECT_THROW(make_params(0, 0.7), DomainError);
  EXPECT_THROW(make_params(1, 0.5), DomainError);
  EXPECT_THROW(make_params(1, 1.0), DomainError);
  EXPECT_THROW(make_params(2, 0.3), DomainError);
}

TEST(AConstant, Values) {
  const auto p = make_params(1, 0.75);
  EXPECT_NEAR(a_constant(p, 0), p.c * p.c * beta_hp(0.5, 0.25), 1e-13 * a_constant(p, 0));
  const auto p3 = make_params(3, 0.7);
  const double b = beta((2 - 2 * 0.7) / 3, 0.5 - (1 - 0.7) / 3);
  EXPECT_NEAR(a_constant(p3, 0), p3.c * p3.c * b, 1e-15);
  for (int r = 0; r + 1 <= 2; ++r) {
    EXPECT_NEAR(a_constant(p3, r + 1) / a_constant(p3, r) / b, 1.0, 1e-13);
  }
}

TEST(AConstant, RejectsOutOfRange) {
  const auto p = make_params(2, 0.7);
  EXPECT_THROW(a_constant(p, -1), DomainError);
  EXPECT_THROW(a_constant(p, 2), DomainError);
}

TEST(BetaIdentity, MatchesQuadrature) {
  EXPECT_NEAR(beta_identity_rhs(0, 1, -0.75) / beta_identity_oracle(0, 1, -0.75), 1.0, 1e-6);
  EXPECT_NEAR(beta_identity_rhs(0, 1, -0.75), beta_hp(0.5, 0.25), 1e-12);
  for (double a : {-0.95, -0.8, -0.6}) {
    for (auto [u, v] : {std::pair{0.0, 0.3}, std::pair{-1.0, 2.0}, std::pair{2.5, 0.5}}) {
      const double got = beta_identity_rhs(u, v, a);
      EXPECT_NEAR(got / beta_identity_oracle(u, v, a), 1.0, 1e-6) << a << " " << u << " " << v;
    }
  }
}

TEST(BetaIdentity, SymmetryAndScaling) {
  EXPECT_DOUBLE_EQ(beta_identity_rhs(0.2, 1.7, -0.7), beta_identity_rhs(1.7, 0.2, -0.7));
  const double c = 3.5;
  EXPECT_NEAR(beta_identity_rhs(c * 0.2, c * 1.7, -0.7),
              std::pow(c, 2 * -0.7 + 1) * beta_identity_rhs(0.2, 1.7, -0.7), 1e-13);
}

TEST(BetaIdentity, ErrorsAndDiagonal) {
  EXPECT_THROW(beta_identity_rhs(0, 1, -0.5), DomainError);
  EXPECT_THROW(beta_identity_rhs(0, 1, -1.0), DomainError);
  EXPECT_TRUE(std::isinf(beta_identity_rhs(1, 1, -0.7)));
}

TEST(PowerLawDoubleIntegral, Values) {
  EXPECT_NEAR(power_law_double_integral(1, 1, 0), 1.0, 1e-15);
  EXPECT_NEAR(power_law_double_integral(1, 1, -0.5), 8.0 / 3.0, 1e-14);
  EXPECT_NEAR(power_law_double_integral(1, 1, -0.5), double_integral_oracle(1, 1, -0.5), 1e-9);
  for (auto [s, t, l] : {std::tuple{0.5, 1.0, -0.6}, std::tuple{2.0, 0.7, -0.2},
                         std::tuple{1.5, 1.5, -0.9}}) {
    EXPECT_NEAR(power_law_double_integral(s, t, l) / double_integral_oracle(s, t, l), 1.0, 1e-8);
    EXPECT_DOUBLE_EQ(power_law_double_integral(s, t, l), power_law_double_integral(t, s, l));
  }
  EXPECT_THROW(power_law_double_integral(1, 1, -1.0), DomainError);
  EXPECT_THROW(power_law_double_integral(0, 1, -0.5), DomainError);
}

TEST(ConstantIdentity, HoldsOnParameterGrid) {
  for (int q : {1, 2, 3, 4}) {
    for (double H : {0.55, 0.7, 0.9}) {
      const auto p = make_params(q, H);
      double fact = 1;
      for (int k = 2; k <= q - 1; ++k) fact *= k;
      const double lhs =
          q * q * fact * a_constant(p, q - 1) * power_law_double_integral(1, 1, 2 * (H - 1));
      EXPECT_NEAR(lhs / q, 1.0, 1e-8) << q << " " << H;
    }
  }
}
