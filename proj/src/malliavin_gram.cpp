#include "hermitelab/malliavin_gram.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "hermitelab/errors.hpp"
#include "hermitelab/numeric.hpp"

namespace hermitelab {
namespace {

const GridPtr& common_grid(std::span<const DerivativeVector> vectors, const char* where) {
  if (vectors.empty()) throw ShapeError(std::string(where) + ": no vectors");
  const auto& grid = vectors.front().grid;
  if (!grid) throw ShapeError(std::string(where) + ": vector without grid");
  for (const auto& v : vectors) {
    if (!v.grid || !same_grid(*grid, *v.grid) || v.values.size() != grid->n_cells()) {
      throw ShapeError(std::string(where) + ": vectors live on different grids");
    }
  }
  return grid;
}

// Orthonormal basis of span(vectors) under the weighted inner product. Generators
// whose residual is negligible relative to their own norm are dropped.
std::vector<std::vector<double>> orthonormal_basis(const TimeGrid& grid,
                                                   std::span<const DerivativeVector> vectors) {
  std::vector<std::vector<double>> basis;
  for (const auto& v : vectors) {
    std::vector<double> r = v.values;
    const double norm0 = weighted_inner(grid, r, r);
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& e : basis) {
        const double c = weighted_inner(grid, e, r);
        for (std::size_t k = 0; k < r.size(); ++k) r[k] -= c * e[k];
      }
    }
    const double res = weighted_inner(grid, r, r);
    if (res > 1e-24 * norm0 && res > 0.0) {
      const double inv = 1.0 / std::sqrt(res);
      for (double& x : r) x *= inv;
      basis.push_back(std::move(r));
    }
  }
  return basis;
}

}  // namespace

double GramMatrix::trace() const {
  double t = 0.0;
  for (std::size_t i = 0; i < n; ++i) t += entries[i * n + i];
  return t;
}

double weighted_inner(const TimeGrid& grid, std::span<const double> u, std::span<const double> v) {
  const auto w = grid.widths();
  if (u.size() != w.size() || v.size() != w.size()) throw ShapeError("weighted_inner: length");
  std::vector<double> terms(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) terms[k] = u[k] * v[k] * w[k];
  return pairwise_sum(terms);
}

GramMatrix gram_matrix(std::span<const DerivativeVector> vectors) {
  const auto& grid = common_grid(vectors, "gram_matrix");
  GramMatrix g;
  g.n = vectors.size();
  g.entries.assign(g.n * g.n, 0.0);
  for (std::size_t i = 0; i < g.n; ++i) {
    for (std::size_t j = i; j < g.n; ++j) {
      const double v = weighted_inner(*grid, vectors[i].values, vectors[j].values);
      g.entries[i * g.n + j] = v;
      g.entries[j * g.n + i] = v;
    }
  }
  return g;
}

FactorizationResult factorize(std::span<const DerivativeVector> vectors) {
  const auto& grid = common_grid(vectors, "factorize");
  FactorizationResult out;
  std::vector<std::vector<double>> basis;
  out.det = 1.0;
  for (const auto& v : vectors) {
    std::vector<double> r = v.values;
    const double norm0 = weighted_inner(*grid, r, r);
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& e : basis) {
        const double c = weighted_inner(*grid, e, r);
        for (std::size_t k = 0; k < r.size(); ++k) r[k] -= c * e[k];
      }
    }
    const double res = weighted_inner(*grid, r, r);
    out.residual_sq.push_back(res);
    out.det *= res;
    if (res > 1e-24 * norm0 && res > 0.0) {
      const double inv = 1.0 / std::sqrt(res);
      for (double& x : r) x *= inv;
      basis.push_back(std::move(r));
    }
  }
  return out;
}

double residual_norm_sq(std::span<const DerivativeVector> vectors, const DerivativeVector& target) {
  if (!target.grid) throw ShapeError("residual_norm_sq: target without grid");
  if (vectors.empty()) return weighted_inner(*target.grid, target.values, target.values);
  const auto& grid = common_grid(vectors, "residual_norm_sq");
  if (!same_grid(*grid, *target.grid)) throw ShapeError("residual_norm_sq: grid mismatch");
  const auto basis = orthonormal_basis(*grid, vectors);
  std::vector<double> r = target.values;
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& e : basis) {
      const double c = weighted_inner(*grid, e, r);
      for (std::size_t k = 0; k < r.size(); ++k) r[k] -= c * e[k];
    }
  }
  return weighted_inner(*grid, r, r);
}

double restricted_norm_sq(const DerivativeVector& v, double a, double b) {
  if (!v.grid) throw ShapeError("restricted_norm_sq: vector without grid");
  if (!(a < b)) throw DomainError("restricted_norm_sq: need a < b");
  const auto mid = v.grid->midpoints();
  const auto w = v.grid->widths();
  std::vector<double> terms;
  for (std::size_t k = 0; k < mid.size(); ++k) {
    if (mid[k] >= a && mid[k] <= b) terms.push_back(v.values[k] * v.values[k] * w[k]);
  }
  if (terms.empty()) throw DomainError("restricted_norm_sq: no cell midpoint in [a, b]");
  return pairwise_sum(terms);
}

double elimination_determinant(const GramMatrix& gram) {
  Eigen::MatrixXd m(gram.n, gram.n);
  for (std::size_t i = 0; i < gram.n; ++i) {
    for (std::size_t j = 0; j < gram.n; ++j) m(i, j) = gram(i, j);
  }
  return m.partialPivLu().determinant();
}

double min_eigenvalue(const GramMatrix& gram) {
  Eigen::MatrixXd m(gram.n, gram.n);
  for (std::size_t i = 0; i < gram.n; ++i) {
    for (std::size_t j = 0; j < gram.n; ++j) m(i, j) = gram(i, j);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

}  // namespace hermitelab
