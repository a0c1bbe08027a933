#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "hermitelab/errors.hpp"
#include "hermitelab/experiments.hpp"
#include "hermitelab/statistics.hpp"

using namespace hermitelab;

TEST(EmpiricalDistribution, StepFunction) {
  const EmpiricalDistribution d({3.0, 1.0, 2.0, 2.0});
  EXPECT_EQ(d.samples()[0], 1.0);
  EXPECT_EQ(d.cdf(0.5), 0.0);
  EXPECT_EQ(d.cdf(1.0), 0.25);
  EXPECT_EQ(d.cdf(2.0), 0.75);
  EXPECT_EQ(d.cdf(2.5), 0.75);
  EXPECT_EQ(d.cdf(3.0), 1.0);
}

TEST(Kolmogorov, SurvivalAndCritical) {
  // Q_KS(1.36) ~ 0.049, Q_KS(1.63) ~ 0.0098
  EXPECT_NEAR(kolmogorov_survival(1.36), 0.0494, 1e-3);
  EXPECT_NEAR(kolmogorov_survival(1.63), 0.0098, 3e-4);
  EXPECT_NEAR(ks_critical_coefficient(0.05), 1.3581, 1e-3);
  EXPECT_NEAR(ks_critical_coefficient(0.01), 1.6276, 1e-3);
  EXPECT_NEAR(kolmogorov_survival(ks_critical_coefficient(0.01)), 0.01, 2e-4);
}

TEST(KsTwoSample, SameLawAccepted) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  std::vector<double> a(5000), b(5000);
  for (auto& x : a) x = nd(rng);
  for (auto& x : b) x = nd(rng);
  const auto r = ks_two_sample(EmpiricalDistribution(a), EmpiricalDistribution(b), 0.01);
  EXPECT_FALSE(r.reject);
  EXPECT_GT(r.p_value, 0.01);
}

TEST(KsTwoSample, ShiftRejected) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  std::vector<double> a(5000), b(5000);
  for (auto& x : a) x = nd(rng);
  for (auto& x : b) x = nd(rng) + 0.2;
  const auto r = ks_two_sample(EmpiricalDistribution(a), EmpiricalDistribution(b), 0.01);
  EXPECT_TRUE(r.reject);
  EXPECT_LT(r.p_value, 0.01);
}

TEST(KsOneSample, Normal) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::vector<double> a(5000);
  for (auto& x : a) x = nd(rng);
  EXPECT_FALSE(ks_one_sample(EmpiricalDistribution(a), standard_normal_cdf, 0.01).reject);
  for (auto& x : a) x *= 1.2;
  EXPECT_TRUE(ks_one_sample(EmpiricalDistribution(a), standard_normal_cdf, 0.01).reject);
}

TEST(StandardNormalCdf, Values) {
  EXPECT_DOUBLE_EQ(standard_normal_cdf(0.0), 0.5);
  EXPECT_NEAR(standard_normal_cdf(1.959963984540054), 0.975, 1e-12);
}

TEST(Dominance, Examples) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  std::vector<double> a(1000);
  for (auto& x : a) x = nd(rng);
  EXPECT_TRUE(stochastic_dominance(EmpiricalDistribution(a), EmpiricalDistribution(a), 0.01).pass);

  const auto r = stochastic_dominance(EmpiricalDistribution({1, 2, 3}), EmpiricalDistribution({0, 1, 2}),
                                      0.01);
  EXPECT_TRUE(r.pass);
  EXPECT_LE(r.statistic, 0.0);

  const std::size_t n = 10000;
  const auto fail = stochastic_dominance(EmpiricalDistribution(std::vector<double>(n, 0.0)),
                                         EmpiricalDistribution(std::vector<double>(n, 5.0)), 0.01);
  EXPECT_FALSE(fail.pass);
  EXPECT_DOUBLE_EQ(fail.statistic, 1.0);
}

TEST(Dominance, Epsilon) {
  const auto r = dominance(EmpiricalDistribution({0.0, 1.0}), EmpiricalDistribution({0.0, 1.0, 2.0}), 0.05);
  const double l = std::log(2 / 0.05);
  EXPECT_NEAR(r.epsilon, std::sqrt(l / 4) + std::sqrt(l / 6), 1e-14);
}

TEST(Dominance, EmptyRejected) {
  EXPECT_THROW(stochastic_dominance(EmpiricalDistribution(), EmpiricalDistribution({1.0}), 0.01),
               DomainError);
}

TEST(MeanEstimate, Values) {
  const std::vector<double> x = {1, 2, 3, 4};
  const auto e = mean_estimate(x);
  EXPECT_DOUBLE_EQ(e.mean, 2.5);
  EXPECT_NEAR(e.std_error, std::sqrt(5.0 / 3.0 / 4.0), 1e-14);
}
