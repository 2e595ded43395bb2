#pragma once

#include <Eigen/Dense>

#include "mixlab/group_core.hpp"

namespace mixlab {

// Radial test function on SL(2,R): a piecewise-cubic bump in the top
// singular value, supported in [center - halfwidth, center + halfwidth]
// inside [1, t_max]. Bi-K-invariant by construction.
struct KBiInvariantFunction {
  double center;
  double halfwidth;
  static constexpr double kTMax = 8.0;

  KBiInvariantFunction(double center, double halfwidth);

  double radial(double s) const;
  double operator()(const GroupElement& g) const;
  double support_lo() const { return center - halfwidth; }
  double support_hi() const { return center + halfwidth; }
};

// Spherical function of SL(2,R) at a(t) = diag(t, 1/t), by adaptive
// quadrature of the closed-form circle integral; absolute error <= 1e-10.
double xi_sl2(double t);

// Same function on an arbitrary SL(2,R) element, integrating the Iwasawa
// a-part over K. Agrees with xi_sl2 on diagonals and is bi-K-invariant.
double xi_general(const GroupElement& g);

// Angular width bound for the K-components moving a(s)-ball into a(t)-sector:
// 2 * asin(s^2 / t), valid for t >= s^2.
double sector_angle(double s, double t);

// Higher-rank decay envelope (max_i!=j a_i/a_j)^(-1/4 + eps) for d >= 3.
double decay_exponent_bound(const Eigen::VectorXd& a, double eps);

// Matrix coefficient <lambda(a(t)) phi, psi> for radial phi, psi, reduced to
// a 2-D quadrature over (s, theta); relative error about rel_tol.
double regular_coeff(const KBiInvariantFunction& phi,
                     const KBiInvariantFunction& psi, double t,
                     double rel_tol = 1e-4);

// L^2(G) norm of a radial function in the Cartan-coordinate normalization.
double l2_norm_radial(const KBiInvariantFunction& phi);

}  // namespace mixlab
