#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include "hermitelab/errors.hpp"
#include "hermitelab/malliavin_gram.hpp"

using namespace hermitelab;

namespace {

DerivativeVector make_vector(const GridPtr& g, std::vector<double> values) {
  DerivativeVector v;
  v.values = std::move(values);
  v.grid = g;
  return v;
}

std::vector<DerivativeVector> random_family(const GridPtr& g, std::size_t k, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::vector<DerivativeVector> out;
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<double> v(g->n_cells());
    for (auto& x : v) x = nd(rng);
    out.push_back(make_vector(g, std::move(v)));
  }
  return out;
}

double product(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 1.0, std::multiplies<>());
}

}  // namespace

TEST(GramMatrix, MatchesDoubleLoop) {
  std::mt19937_64 rng(1);
  GradedGridSpec spec;
  spec.M = 10;
  spec.x_max = 1;
  spec.n_cells = 16;
  spec.alignment = 1;
  const auto g = build_graded_grid(spec);
  const auto fam = random_family(g, 3, rng);
  const auto gram = gram_matrix(fam);
  ASSERT_EQ(gram.n, 3u);
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) {
      double ref = 0.0;
      for (std::size_t i = 0; i < 16; ++i) ref += fam[a].values[i] * fam[b].values[i] * g->widths()[i];
      EXPECT_NEAR(gram(a, b), ref, 1e-12 * (1 + std::abs(ref)));
      EXPECT_EQ(gram(a, b), gram(b, a));
    }
  }
  EXPECT_GE(min_eigenvalue(gram), -1e-10 * gram.trace());
}

TEST(GramMatrix, DisjointSupportsAreDiagonal) {
  const auto g = build_grid(1, 1, 8);
  std::vector<double> a(8, 0.0), b(8, 0.0);
  a[1] = 2.0;
  b[5] = -1.0;
  const std::vector<DerivativeVector> fam = {make_vector(g, a), make_vector(g, b)};
  const auto gram = gram_matrix(fam);
  EXPECT_EQ(gram(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(gram(0, 0), 4.0 * 0.25);
  const auto f = factorize(fam);
  EXPECT_DOUBLE_EQ(f.residual_sq[0], 1.0);
  EXPECT_DOUBLE_EQ(f.residual_sq[1], 0.25);
  EXPECT_DOUBLE_EQ(f.det, 0.25);
}

TEST(GramMatrix, DuplicateIsSingular) {
  std::mt19937_64 rng(2);
  const auto g = build_grid(1, 1, 16);
  auto fam = random_family(g, 2, rng);
  fam.push_back(fam[0]);
  const auto gram = gram_matrix(fam);
  const double scale = std::pow(gram.trace(), 3);
  EXPECT_LE(std::abs(elimination_determinant(gram)), 1e-10 * scale);
  EXPECT_LE(std::abs(factorize(fam).det), 1e-10 * scale);
}

TEST(GramMatrix, GridMismatch) {
  const auto g1 = build_grid(1, 1, 8);
  const auto g2 = build_grid(1, 1, 16);
  const std::vector<DerivativeVector> fam = {make_vector(g1, std::vector<double>(8, 1.0)),
                                             make_vector(g2, std::vector<double>(16, 1.0))};
  EXPECT_THROW(gram_matrix(fam), ShapeError);
  EXPECT_THROW(factorize(fam), ShapeError);
}

TEST(Factorize, SingleVector) {
  std::mt19937_64 rng(3);
  const auto g = build_grid(1, 1, 16);
  const auto fam = random_family(g, 1, rng);
  const auto f = factorize(fam);
  EXPECT_NEAR(f.det, weighted_inner(*g, fam[0].values, fam[0].values), 1e-13);
}

TEST(Factorize, RandomFamiliesMatchElimination) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> dim(2, 6), cells(16, 64);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto g = build_grid(1, 1, static_cast<std::size_t>(cells(rng)));
    const auto fam = random_family(g, static_cast<std::size_t>(dim(rng)), rng);
    const auto gram = gram_matrix(fam);
    const auto f = factorize(fam);
    const double det = elimination_determinant(gram);
    const double prod = product(f.residual_sq);
    const double scale = std::max({std::abs(det), prod,
                                   std::numeric_limits<double>::epsilon() *
                                       std::pow(gram.trace(), static_cast<double>(gram.n))});
    EXPECT_LE(std::abs(det - prod), 1e-8 * scale) << trial;
    EXPECT_NEAR(f.det, prod, 1e-12 * scale);
  }
}

TEST(Factorize, PermutationInvariantDeterminant) {
  std::mt19937_64 rng(5);
  const auto g = build_grid(1, 1, 32);
  auto fam = random_family(g, 4, rng);
  const double det = factorize(fam).det;
  std::vector<std::size_t> order = {0, 1, 2, 3};
  while (std::next_permutation(order.begin(), order.end())) {
    std::vector<DerivativeVector> perm;
    for (auto k : order) perm.push_back(fam[k]);
    EXPECT_NEAR(factorize(perm).det, det, 1e-10 * std::abs(det));
  }
}

TEST(ResidualNormSq, Examples) {
  std::mt19937_64 rng(6);
  const auto g = build_grid(1, 1, 8);
  const auto fam = random_family(g, 3, rng);
  const double norm = weighted_inner(*g, fam[0].values, fam[0].values);
  EXPECT_DOUBLE_EQ(residual_norm_sq({}, fam[0]), norm);

  std::vector<double> comb(8);
  for (std::size_t i = 0; i < 8; ++i) comb[i] = 2 * fam[0].values[i] - fam[1].values[i];
  const auto target = make_vector(g, comb);
  const std::vector<DerivativeVector> span2(fam.begin(), fam.begin() + 2);
  EXPECT_LE(std::abs(residual_norm_sq(span2, target)),
            1e-10 * weighted_inner(*g, comb, comb));

  std::vector<double> e1(8, 0.0), e12(8, 0.0);
  e1[2] = 1.0;
  e12[2] = 1.0;
  e12[3] = 1.0;
  const std::vector<DerivativeVector> span1 = {make_vector(g, e1)};
  EXPECT_NEAR(residual_norm_sq(span1, make_vector(g, e12)), g->delta(), 1e-15);
}

TEST(ResidualNormSq, MonotoneInSpan) {
  std::mt19937_64 rng(7);
  const auto g = build_grid(1, 1, 24);
  for (int trial = 0; trial < 50; ++trial) {
    const auto fam = random_family(g, 6, rng);
    const auto target = fam.back();
    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < 5; ++k) {
      const std::vector<DerivativeVector> span(fam.begin(), fam.begin() + k);
      const double r = residual_norm_sq(span, target);
      EXPECT_LE(r, previous * (1 + 1e-12));
      previous = r;
    }
  }
}

TEST(RestrictedNormSq, Examples) {
  std::mt19937_64 rng(8);
  const auto g = build_grid(1, 1, 8);
  const auto v = random_family(g, 1, rng)[0];
  EXPECT_NEAR(restricted_norm_sq(v, -1, 1), weighted_inner(*g, v.values, v.values), 1e-14);
  std::vector<double> left(8, 0.0);
  left[0] = 3.0;
  EXPECT_EQ(restricted_norm_sq(make_vector(g, left), 0, 1), 0.0);
  EXPECT_THROW(restricted_norm_sq(v, 0.01, 0.02), DomainError);
}

TEST(RestrictedNormSq, FirstChaosQuadrature) {
  const auto p = make_params(1, 0.7);
  GradedGridSpec spec;
  spec.M = default_truncation(p);
  spec.n_cells = 512;
  const auto g = build_graded_grid(spec);
  const auto d = malliavin_derivative(p, 1.0, sample_increments(g, 1, 0));
  // L_1(r) = c (1 - r)^(H - 1/2) / (H - 1/2) on [0, 1]
  const double e = p.H - 0.5;
  boost::math::quadrature::tanh_sinh<double> ts;
  const double exact = ts.integrate(
      [&](double r) {
        const double l = p.c * std::pow(1 - r, e) / e;
        return l * l;
      },
      0.0, 1.0);
  EXPECT_NEAR(restricted_norm_sq(d, 0, 1) / exact, 1.0, 0.01);
}
