#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "hermitelab/chaos_core.hpp"
#include "hermitelab/errors.hpp"

using namespace hermitelab;

namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

// Reference I_q by explicit loops over all cell tuples (q <= 3).
double reference_integral(int q, const std::function<double(std::size_t, std::size_t, std::size_t)>& f,
                          const WienerSample& s, DiagonalRule rule) {
  const auto& w = s.grid->widths();
  const auto& db = s.increments;
  const std::size_t n = db.size();
  auto he = [&](std::size_t i, int m) {
    if (m == 1) return db[i];
    if (m == 2) return db[i] * db[i] - w[i];
    return db[i] * db[i] * db[i] - 3 * w[i] * db[i];
  };
  double acc = 0.0;
  if (q == 1) {
    for (std::size_t i = 0; i < n; ++i) acc += f(i, 0, 0) * db[i];
  } else if (q == 2) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i != j) {
          acc += f(i, j, 0) * db[i] * db[j];
        } else if (rule == DiagonalRule::kWick) {
          acc += f(i, i, 0) * he(i, 2);
        }
      }
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < n; ++k) {
          const double v = f(i, j, k);
          if (i != j && j != k && i != k) {
            acc += v * db[i] * db[j] * db[k];
          } else if (rule == DiagonalRule::kWick) {
            if (i == j && j == k) {
              acc += v * he(i, 3);
            } else if (i == j) {
              acc += v * he(i, 2) * db[k];
            } else if (j == k) {
              acc += v * he(j, 2) * db[i];
            } else {
              acc += v * he(i, 2) * db[j];
            }
          }
        }
      }
    }
  }
  return acc;
}

double rel_gap(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace

TEST(HermitePoly, Values) {
  EXPECT_EQ(hermite_poly(0, 3.7), 1.0);
  EXPECT_EQ(hermite_poly(1, 3.7), 3.7);
  EXPECT_DOUBLE_EQ(hermite_poly(2, 3.0), 8.0);
  EXPECT_DOUBLE_EQ(hermite_poly(3, 2.0), 2.0);
  EXPECT_DOUBLE_EQ(hermite_poly(4, 1.0), 1 - 6 + 3);
  EXPECT_DOUBLE_EQ(hermite_poly(2, 3.0, 4.0), 9.0 - 4.0);
  EXPECT_DOUBLE_EQ(hermite_poly(3, 2.0, 0.0), 8.0);
}

TEST(MultipleIntegral, OrderOneIsWienerIntegral) {
  std::mt19937_64 rng(1);
  const auto g = build_grid(1, 1, 32);
  const auto h = random_vector(32, rng);
  const auto f = DiscretizedKernel::from_dense(g, 1, h, true);
  for (int k = 0; k < 5; ++k) {
    const auto s = sample_increments(g, 2, k);
    EXPECT_NEAR(multiple_integral(f, s), wiener_integral(h, s), 1e-12);
  }
}

TEST(MultipleIntegral, ZeroKernel) {
  const auto g = build_grid(1, 1, 16);
  const auto s = sample_increments(g, 1, 1);
  for (int q = 1; q <= 3; ++q) {
    const auto f = tensor_power(g, std::vector<double>(16, 0.0), q);
    EXPECT_EQ(multiple_integral(f, s, DiagonalRule::kWick), 0.0);
    EXPECT_EQ(multiple_integral(f, s, DiagonalRule::kOffDiagonal), 0.0);
  }
  EXPECT_EQ(multiple_integral(DiscretizedKernel::constant(g, 2.5), s), 2.5);
}

TEST(MultipleIntegral, TensorSquareIsSecondHermite) {
  // h = indicator of [0, 1), unit norm. Under the Wick rule I_2(h (x) h) = H_2(B(h))
  // exactly; off the diagonal the gap is sum h^4 (dB^2 - w)^2, mean 2 / n_positive.
  std::vector<double> gaps;
  for (std::size_t n : {128u, 512u}) {
    const auto g = build_grid(1, 1, n);
    std::vector<double> h(n);
    for (std::size_t i = 0; i < n; ++i) h[i] = g->midpoints()[i] > 0 ? 1.0 : 0.0;
    const auto f = tensor_power(g, h, 2);
    double gap_off = 0.0;
    const int ns = 2000;
    for (int k = 0; k < ns; ++k) {
      const auto s = sample_increments(g, 4, k);
      const double b = wiener_integral(h, s);
      EXPECT_NEAR(multiple_integral(f, s, DiagonalRule::kWick), hermite_poly(2, b), 1e-12);
      const double d = multiple_integral(f, s, DiagonalRule::kOffDiagonal) - hermite_poly(2, b);
      gap_off += d * d;
    }
    gaps.push_back(gap_off / ns);
  }
  EXPECT_LT(gaps[1], 1e-2);
  EXPECT_LT(gaps[1], gaps[0] / 2);
}

TEST(MultipleIntegral, StructuredRoutesMatchReference) {
  std::mt19937_64 rng(3);
  const auto g = build_grid(1, 0.5, 10);
  const std::size_t n = 10;
  const auto a = random_vector(n, rng), b = random_vector(n, rng), c = random_vector(n, rng);
  std::vector<TensorTerm> terms = {{0.7, {a, b, c}}, {-1.3, {c, c, a}}};
  const auto f3 = DiscretizedKernel::from_terms(g, terms);
  auto f3_ref = [&](std::size_t i, std::size_t j, std::size_t k) {
    return 0.7 * a[i] * b[j] * c[k] - 1.3 * c[i] * c[j] * a[k];
  };
  const auto dense = random_vector(n * n, rng);
  const auto f2 = DiscretizedKernel::from_dense(g, 2, dense, false);
  auto f2_ref = [&](std::size_t i, std::size_t j, std::size_t) { return dense[i * n + j]; };
  const DiscretizedKernel lazy3(
      3, g, [&](std::span<const std::size_t> idx) { return f3_ref(idx[0], idx[1], idx[2]); }, false);
  ChaosLimits brute;
  brute.use_structure = false;
  for (auto rule : {DiagonalRule::kWick, DiagonalRule::kOffDiagonal}) {
    for (int k = 0; k < 4; ++k) {
      const auto s = sample_increments(g, 8, k);
      const double r3 = reference_integral(3, f3_ref, s, rule);
      EXPECT_LT(rel_gap(multiple_integral(f3, s, rule), r3), 1e-12);
      EXPECT_LT(rel_gap(multiple_integral(f3, s, rule, brute), r3), 1e-12);
      EXPECT_LT(rel_gap(multiple_integral(lazy3, s, rule), r3), 1e-12);
      const double r2 = reference_integral(2, f2_ref, s, rule);
      EXPECT_LT(rel_gap(multiple_integral(f2, s, rule), r2), 1e-12);
      EXPECT_LT(rel_gap(multiple_integral(f2, s, rule, brute), r2), 1e-12);
    }
  }
}

TEST(MultipleIntegral, Linearity) {
  std::mt19937_64 rng(5);
  const auto g = build_grid(1, 1, 24);
  const auto f = DiscretizedKernel::from_dense(g, 2, random_vector(24 * 24, rng), false);
  const auto h = DiscretizedKernel::from_dense(g, 2, random_vector(24 * 24, rng), false);
  const auto comb = linear_combination(2.0, f, -0.5, h);
  for (auto rule : {DiagonalRule::kWick, DiagonalRule::kOffDiagonal}) {
    const auto s = sample_increments(g, 6, 0);
    const double lhs = multiple_integral(comb, s, rule);
    const double rhs = 2.0 * multiple_integral(f, s, rule) - 0.5 * multiple_integral(h, s, rule);
    EXPECT_LT(rel_gap(lhs, rhs), 1e-12);
  }
}

TEST(MultipleIntegral, SymmetricKernelPermutationInvariance) {
  std::mt19937_64 rng(6);
  const auto g = build_grid(1, 1, 8);
  const auto a = random_vector(8, rng), b = random_vector(8, rng);
  const auto f = symmetrize(DiscretizedKernel::from_terms(g, {{1.0, {a, b, a}}}));
  const std::array<std::size_t, 3> base = {1, 4, 6};
  auto perm = base;
  do {
    EXPECT_NEAR(f(perm), f(base), 1e-14);
  } while (std::next_permutation(perm.begin(), perm.end()));
}

TEST(MultipleIntegral, Errors) {
  const auto g = build_grid(1, 1, 8);
  const auto other = build_grid(1, 1, 16);
  const auto s = sample_increments(g, 1, 0);
  EXPECT_THROW(multiple_integral(tensor_power(g, std::vector<double>(8, 1.0), 4), s), ResourceError);
  EXPECT_THROW(multiple_integral(tensor_power(other, std::vector<double>(16, 1.0), 2), s),
               ShapeError);
  const auto big = build_grid(1, 1, 200);
  const DiscretizedKernel lazy(3, big, [](std::span<const std::size_t>) { return 1.0; }, true);
  EXPECT_THROW(multiple_integral(lazy, sample_increments(big, 1, 0)), ResourceError);
}

TEST(Contraction, DenseMatrixOracle) {
  std::mt19937_64 rng(7);
  GradedGridSpec spec;
  spec.M = 20;
  spec.x_max = 1;
  spec.n_cells = 16;
  spec.alignment = 1;
  const auto g = build_graded_grid(spec);
  const std::size_t n = 16;
  const auto fv = random_vector(n * n, rng), gv = random_vector(n * n, rng);
  const auto f = DiscretizedKernel::from_dense(g, 2, fv, false);
  const auto h = DiscretizedKernel::from_dense(g, 2, gv, false);
  const auto w = g->widths();
  const auto c1 = contraction(f, h, 1);
  ASSERT_EQ(c1.order(), 2);
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t y = 0; y < n; ++y) {
      double ref = 0.0;
      for (std::size_t i = 0; i < n; ++i) ref += fv[i * n + x] * gv[i * n + y] * w[i];
      const std::array<std::size_t, 2> idx = {x, y};
      EXPECT_NEAR(c1(idx), ref, 1e-12 * (1 + std::abs(ref)));
    }
  }
  const auto c2 = contraction(f, h, 2);
  ASSERT_EQ(c2.order(), 0);
  double ref = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) ref += fv[i * n + j] * gv[i * n + j] * w[i] * w[j];
  }
  EXPECT_NEAR(c2({}), ref, 1e-11 * (1 + std::abs(ref)));
  const auto c0 = contraction(f, h, 0);
  ASSERT_EQ(c0.order(), 4);
  const std::array<std::size_t, 4> q = {1, 2, 3, 4};
  EXPECT_NEAR(c0(q), fv[1 * n + 2] * gv[3 * n + 4], 1e-14);
}

TEST(Contraction, TensorPowers) {
  const auto g = build_grid(1, 1, 32);
  std::vector<double> h(32);
  for (std::size_t i = 0; i < 32; ++i) h[i] = std::sin(3.0 * g->midpoints()[i]);
  double norm2 = 0.0;
  for (std::size_t i = 0; i < 32; ++i) norm2 += h[i] * h[i] * g->widths()[i];
  const auto f = tensor_power(g, h, 2);
  const auto c = contraction(f, f, 1);
  const std::array<std::size_t, 2> idx = {3, 17};
  EXPECT_NEAR(c(idx), norm2 * h[3] * h[17], 1e-13);
  EXPECT_NEAR(contraction(f, f, 2)({}), norm2 * norm2, 1e-13);
}

TEST(Symmetrize, AveragesPermutations) {
  std::mt19937_64 rng(8);
  const auto g = build_grid(1, 1, 6);
  const auto table = random_vector(216, rng);
  const DiscretizedKernel f(
      3, g, [&](std::span<const std::size_t> i) { return table[i[0] * 36 + i[1] * 6 + i[2]]; }, false);
  const auto s = symmetrize(f);
  EXPECT_TRUE(s.symmetric());
  std::array<std::size_t, 3> idx = {0, 2, 5};
  double avg = 0.0;
  auto p = idx;
  do avg += table[p[0] * 36 + p[1] * 6 + p[2]] / 6.0;
  while (std::next_permutation(p.begin(), p.end()));
  EXPECT_NEAR(s(idx), avg, 1e-14);
  const auto ss = symmetrize(s);
  EXPECT_NEAR(ss(idx), s(idx), 1e-14);
  const auto a = random_vector(6, rng);
  const auto sym = tensor_power(g, a, 3);
  EXPECT_NEAR(symmetrize(sym)(idx), sym(idx), 1e-14);
}

TEST(Isometry, MonteCarlo) {
  const auto g = build_grid(1, 1, 64);
  std::vector<double> ind(64), tri(64);
  for (std::size_t i = 0; i < 64; ++i) {
    const double x = g->midpoints()[i];
    ind[i] = x > 0 ? 1.0 : 0.0;
    tri[i] = 1.0 - std::abs(x);
  }
  std::vector<double> kern(64 * 64);
  for (std::size_t i = 0; i < 64; ++i) {
    for (std::size_t j = 0; j < 64; ++j) {
      kern[i * 64 + j] = std::exp(-std::abs(g->midpoints()[i] - g->midpoints()[j]));
    }
  }
  const auto k2 = DiscretizedKernel::from_dense(g, 2, kern, true);
  const auto f1 = DiscretizedKernel::from_dense(g, 1, ind, true);
  const auto g1 = DiscretizedKernel::from_dense(g, 1, tri, true);
  for (auto rule : {DiagonalRule::kWick, DiagonalRule::kOffDiagonal}) {
    SamplingOptions opt;
    opt.rule = rule;
    opt.seed = 12;
    const auto r11 = isometry_check(f1, g1, 20000, opt);
    EXPECT_NEAR(r11.target, 0.5, 1e-12);
    EXPECT_TRUE(r11.pass) << r11.estimate << " " << r11.std_error;
    const auto r12 = isometry_check(f1, k2, 20000, opt);
    EXPECT_EQ(r12.target, 0.0);
    EXPECT_TRUE(r12.pass) << r12.estimate << " " << r12.std_error;
    const auto r22 = isometry_check(k2, k2, 20000, opt);
    EXPECT_NEAR(r22.target, 2.0 * inner_product(k2, k2, rule), 1e-12);
    EXPECT_TRUE(r22.pass) << r22.estimate << " " << r22.target << " " << r22.std_error;
  }
}

TEST(InnerProduct, RulesDifferByDiagonal) {
  const auto g = build_grid(1, 1, 8);
  const auto f = tensor_power(g, std::vector<double>(8, 1.0), 2);
  EXPECT_NEAR(inner_product(f, f, DiagonalRule::kWick), 4.0, 1e-14);
  // drop the 8 diagonal cells, each contributing 0.25^2
  EXPECT_NEAR(inner_product(f, f, DiagonalRule::kOffDiagonal), 4.0 - 8 * 0.0625, 1e-14);
}

TEST(ProductFormula, OrderOneByOne) {
  const std::size_t n = 256;
  const auto g = build_grid(1, 1, n);
  std::vector<double> f(n), h(n);
  for (std::size_t i = 0; i < n; ++i) {
    f[i] = 1.0 / std::sqrt(2.0);
    h[i] = g->midpoints()[i] > 0 ? 1.0 : 0.0;
  }
  const auto kf = DiscretizedKernel::from_dense(g, 1, f, true);
  const auto kh = DiscretizedKernel::from_dense(g, 1, h, true);
  SamplingOptions off;
  off.rule = DiagonalRule::kOffDiagonal;
  const auto r = product_formula_check(kf, kh, 5000, 1e-2, off);
  EXPECT_TRUE(r.pass) << r.mean_square_gap;
  SamplingOptions wick;
  wick.rule = DiagonalRule::kWick;
  EXPECT_LT(product_formula_check(kf, kh, 2000, 1e-2, wick).mean_square_gap, 1e-24);
  const auto zero = DiscretizedKernel::from_dense(g, 1, std::vector<double>(n, 0.0), true);
  EXPECT_EQ(product_formula_check(zero, kh, 100, 1e-2, off).mean_square_gap, 0.0);
}

TEST(ProductFormula, OrderOneByTwo) {
  const std::size_t n = 128;
  const auto g = build_grid(1, 1, n);
  std::vector<double> f(n, 1.0 / std::sqrt(2.0));
  const auto kf = DiscretizedKernel::from_dense(g, 1, f, true);
  const auto kg = tensor_power(g, f, 2);
  for (auto rule : {DiagonalRule::kWick, DiagonalRule::kOffDiagonal}) {
    SamplingOptions opt;
    opt.rule = rule;
    const auto r = product_formula_check(kf, kg, 2000, 1e-1, opt);
    EXPECT_TRUE(r.pass) << r.mean_square_gap;
  }
}
