#pragma once

// Model constants of the Hermite process and the closed-form integrals that tie
// them together. Everything here is a pure function of its value arguments.

namespace hermitelab {

/// Order q and self-similarity index H of a Hermite process, with derived quantities.
struct HermiteParams {
  int q = 1;
  double H = 0.75;
  double H0 = 0.75;               ///< 1 + (H - 1) / q
  double kernel_exponent = -0.75;  ///< H0 - 3/2, the power in the moving-average kernel
  double c = 0.0;                  ///< normalizing constant c(H, q), makes E[Z_1^2] = 1
};

/// Euler beta function. Throws DomainError unless a > 0 and b > 0.
double beta(double a, double b);

/// Validates (q, H) and fills in H0, the kernel exponent and c(H, q).
/// Requires q >= 1 and 1/2 < H < 1.
HermiteParams make_params(int q, double H);

/// a(H, q, r) = c^2 * beta((2 - 2H)/q, 1/2 - (1 - H)/q)^(r + 1), for 0 <= r <= q - 1.
double a_constant(const HermiteParams& params, int r);

/// Closed form of  int_R (u - y)_+^a (v - y)_+^a dy  =  beta(-1 - 2a, a + 1) |u - v|^(2a + 1)
/// for -1 < a < -1/2. Returns +infinity when u == v (the integral diverges).
double beta_identity_rhs(double u, double v, double a);

/// int_0^s int_0^t |u - v|^lambda du dv for s, t > 0 and -1 < lambda <= 0.
double power_law_double_integral(double s, double t, double lambda);

}  // namespace hermitelab
