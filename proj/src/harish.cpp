#include "mixlab/harish.hpp"

#include <cmath>
#include <stdexcept>

#include "mixlab/quadrature.hpp"

namespace mixlab {

KBiInvariantFunction::KBiInvariantFunction(double c, double h)
    : center(c), halfwidth(h) {
  if (!(h > 0.0)) throw std::invalid_argument("KBiInvariantFunction: halfwidth <= 0");
  if (c - h < 1.0 || c + h > kTMax)
    throw std::invalid_argument(
        "KBiInvariantFunction: support must sit inside [1, 8]");
}

double KBiInvariantFunction::radial(double s) const {
  const double v = std::abs(s - center) / halfwidth;
  if (v >= 1.0) return 0.0;
  return 1.0 - v * v * (3.0 - 2.0 * v);
}

double KBiInvariantFunction::operator()(const GroupElement& g) const {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(g.m);
  return radial(svd.singularValues()(0));
}

double xi_sl2(double t) {
  if (t < 1.0) throw std::domain_error("xi_sl2: t must be >= 1");
  if (t == 1.0) return 1.0;
  const double t2 = t * t;
  auto f = [&](double th) {
    const double c = std::cos(th), s = std::sin(th);
    return 1.0 / std::sqrt(c * c / t2 + t2 * s * s);
  };
  // Quarter-period symmetry; the integrand is smooth, GK panels meet 1e-10
  // absolute error comfortably.
  const double quarter = gk_adaptive(f, 0.0, M_PI / 2.0, 2.5e-11);
  return 4.0 * quarter / (2.0 * M_PI);
}

double xi_general(const GroupElement& g) {
  if (g.dim() != 2)
    throw std::invalid_argument("xi_general: only SL(2,R) is supported");
  auto integrand = [&](double th) {
    Eigen::Matrix2d k;
    k << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    Eigen::MatrixXd kg = k * g.m;
    // Iwasawa a-part of kg from the bottom row; Delta(a)^{-1/2} = a_1.
    const double r = std::hypot(kg(1, 0), kg(1, 1));
    return 1.0 / r;
  };
  return periodic_trapezoid(integrand, 0.0, 2.0 * M_PI, 1e-9) / (2.0 * M_PI);
}

double sector_angle(double s, double t) {
  if (s < 1.0) throw std::domain_error("sector_angle: s must be >= 1");
  if (t < s * s) throw std::domain_error("sector_angle: requires t >= s^2");
  return 2.0 * std::asin(s * s / t);
}

double decay_exponent_bound(const Eigen::VectorXd& a, double eps) {
  if (a.size() < 3)
    throw std::invalid_argument("decay_exponent_bound: needs d >= 3");
  if (eps < 0.0 || eps >= 0.25)
    throw std::invalid_argument("decay_exponent_bound: eps must be in [0, 1/4)");
  if ((a.array() <= 0.0).any())
    throw std::invalid_argument("decay_exponent_bound: entries must be positive");
  double ratio = 1.0;
  for (int i = 0; i < a.size(); ++i)
    for (int j = 0; j < a.size(); ++j)
      if (i != j) ratio = std::max(ratio, a(i) / a(j));
  return std::pow(ratio, -0.25 + eps);
}

namespace {

// Top singular value of a(t) k(theta) a(s), via |M|_F^2 = sigma^2 + 1/sigma^2.
double cartan_param(double t, double th, double s) {
  const double c2 = std::cos(th) * std::cos(th);
  const double s2 = 1.0 - c2;
  const double F2 = t * t * s * s * c2 + (t * t / (s * s)) * s2 +
                    (s * s / (t * t)) * s2 + c2 / (t * t * s * s);
  const double disc = std::max(0.0, F2 * F2 - 4.0);
  return std::sqrt(0.5 * (F2 + std::sqrt(disc)));
}

}  // namespace

double regular_coeff(const KBiInvariantFunction& phi,
                     const KBiInvariantFunction& psi, double t,
                     double rel_tol) {
  if (t < 1.0) throw std::domain_error("regular_coeff: t must be >= 1");
  // <lambda(a(t)) phi, psi> = int phi(u) psi(a(t) u) du; in Cartan
  // coordinates of u the theta_1 integral is trivial. The psi factor is
  // supported where |a(t) k(theta) a(s)|_F^2 = A s^2 + B / s^2 lies in a
  // fixed window, which is solved exactly per theta so the adaptive rule
  // never straddles a band it cannot see.
  const double lo = std::max(1.0, phi.support_lo());
  const double hi = phi.support_hi();
  if (hi <= lo) return 0.0;
  const double p_lo = psi.support_lo(), p_hi = psi.support_hi();
  const double C1 = p_lo * p_lo + 1.0 / (p_lo * p_lo);
  const double C2 = p_hi * p_hi + 1.0 / (p_hi * p_hi);

  auto theta_slice = [&](double th) {
    const double c2 = std::cos(th) * std::cos(th);
    const double s2 = 1.0 - c2;
    const double A = t * t * c2 + s2 / (t * t);
    const double B = t * t * s2 + c2 / (t * t);
    auto roots = [&](double C, double& lo_r, double& hi_r) {
      const double disc = C * C - 4.0 * A * B;
      if (disc < 0.0) return false;
      const double rd = std::sqrt(disc);
      lo_r = std::sqrt((C - rd) / (2.0 * A));
      hi_r = std::sqrt((C + rd) / (2.0 * A));
      return true;
    };
    double o_lo, o_hi;
    if (!roots(C2, o_lo, o_hi)) return 0.0;  // F2 never reaches the window
    double i_lo, i_hi;
    const bool has_dip = roots(C1, i_lo, i_hi);

    auto f = [&](double s) {
      const double w = phi.radial(s) * psi.radial(cartan_param(t, th, s));
      if (w == 0.0) return 0.0;
      return w * (s * s - 1.0 / (s * s)) / s;
    };
    auto piece = [&](double a, double b) {
      a = std::max(a, lo);
      b = std::min(b, hi);
      if (b <= a) return 0.0;
      return gk_adaptive(f, a, b, 1e-11);
    };
    if (!has_dip) return piece(o_lo, o_hi);
    return piece(o_lo, i_lo) + piece(i_hi, o_hi);
  };
  // |result| <= |phi|_2 |psi|_2, so an absolute theta tolerance tied to the
  // norm product keeps rel_tol meaningful across decay regimes. The slice is
  // pi-periodic and even about pi/2, so a quarter period carries it all and
  // the refinement starts four times finer for the same work.
  const double scale = l2_norm_radial(phi) * l2_norm_radial(psi);
  const double inner = periodic_trapezoid(theta_slice, 0.0, 0.5 * M_PI,
                                          rel_tol * scale * 0.25e-2);
  return 2.0 * M_PI * 4.0 * inner;
}

double l2_norm_radial(const KBiInvariantFunction& phi) {
  const double lo = std::max(1.0, phi.support_lo());
  const double hi = phi.support_hi();
  auto f = [&](double s) {
    const double v = phi.radial(s);
    return v * v * (s * s - 1.0 / (s * s)) / s;
  };
  const double sq = 4.0 * M_PI * M_PI * gk_adaptive(f, lo, hi, 1e-12);
  return std::sqrt(sq);
}

}  // namespace mixlab
