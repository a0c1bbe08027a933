#pragma once

// Malliavin (Gram) matrices of derivative vectors and their factorization into
// squared projection residuals.

#include <cstddef>
#include <span>
#include <vector>

#include "hermitelab/hermite_kernels.hpp"

namespace hermitelab {

struct GramMatrix {
  std::size_t n = 0;
  std::vector<double> entries;  ///< row-major n x n
  double operator()(std::size_t i, std::size_t j) const { return entries[i * n + j]; }
  double trace() const;
};

struct FactorizationResult {
  double det = 0.0;
  /// residual_sq[0] = |v_1|^2, then |v_j - proj_{span(v_1..v_{j-1})} v_j|^2.
  std::vector<double> residual_sq;
};

/// <u, v> = sum_k u[k] v[k] width[k].
double weighted_inner(const TimeGrid& grid, std::span<const double> u, std::span<const double> v);

GramMatrix gram_matrix(std::span<const DerivativeVector> vectors);

/// Modified Gram-Schmidt with one reorthogonalization pass. Residuals are
/// reported as computed, including values at rounding level.
FactorizationResult factorize(std::span<const DerivativeVector> vectors);

/// Squared distance of target to span(vectors).
double residual_norm_sq(std::span<const DerivativeVector> vectors, const DerivativeVector& target);

/// Sum of v^2 * width over cells whose midpoint lies in [a, b].
double restricted_norm_sq(const DerivativeVector& v, double a, double b);

/// Determinant by partial-pivot LU of the assembled matrix.
double elimination_determinant(const GramMatrix& gram);

/// Smallest eigenvalue of the symmetric matrix.
double min_eigenvalue(const GramMatrix& gram);

}  // namespace hermitelab
