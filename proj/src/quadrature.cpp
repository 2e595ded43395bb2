#include "mixlab/quadrature.hpp"

#include <cmath>
#include <cstdlib>

namespace mixlab {

namespace {

// Gauss-Kronrod 15-point nodes/weights on [-1,1]; Gauss-7 is the embedded rule.
// Values from the standard QUADPACK tables.
const double kron_x[8] = {
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000};
const double kron_w[8] = {
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714};
const double gauss_w[4] = {
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327};

struct GKResult {
  double value;
  double err;
};

GKResult gk15(const std::function<double(double)>& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  double fv[15];
  for (int i = 0; i < 7; ++i) {
    fv[i] = f(c - h * kron_x[i]);
    fv[14 - i] = f(c + h * kron_x[i]);
  }
  fv[7] = f(c);
  double kron = kron_w[7] * fv[7];
  for (int i = 0; i < 7; ++i) kron += kron_w[i] * (fv[i] + fv[14 - i]);
  // Gauss-7 uses the odd Kronrod nodes (indices 1,3,5) plus the center.
  double gauss = gauss_w[3] * fv[7];
  for (int i = 0; i < 3; ++i)
    gauss += gauss_w[i] * (fv[2 * i + 1] + fv[13 - 2 * i]);
  GKResult r;
  r.value = kron * h;
  r.err = std::abs((kron - gauss) * h);
  return r;
}

void gk_recurse(const std::function<double(double)>& f, double a, double b,
                double tol, int depth, int& panels, int max_panels,
                double& acc) {
  if (++panels > max_panels)
    throw std::runtime_error("gk_adaptive: panel budget exhausted");
  GKResult r = gk15(f, a, b);
  if (r.err <= tol || depth >= 48) {
    acc += r.value;
    return;
  }
  const double c = 0.5 * (a + b);
  gk_recurse(f, a, c, 0.5 * tol, depth + 1, panels, max_panels, acc);
  gk_recurse(f, c, b, 0.5 * tol, depth + 1, panels, max_panels, acc);
}

}  // namespace

double gk_adaptive(const std::function<double(double)>& f, double a, double b,
                   double abs_tol, int max_panels) {
  if (!(b >= a)) throw std::invalid_argument("gk_adaptive: bad interval");
  if (a == b) return 0.0;
  double acc = 0.0;
  int panels = 0;
  gk_recurse(f, a, b, abs_tol, 0, panels, max_panels, acc);
  return acc;
}

double periodic_trapezoid(const std::function<double(double)>& f, double a,
                          double b, double abs_tol, int max_n) {
  const double L = b - a;
  int n = 16;
  auto eval = [&](int m) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += f(a + L * i / m);
    return s * L / m;
  };
  double prev = eval(n);
  for (;;) {
    n *= 2;
    if (n > max_n) throw std::runtime_error("periodic_trapezoid: no convergence");
    const double cur = eval(n);
    if (std::abs(cur - prev) <= abs_tol) return cur;
    prev = cur;
  }
}

double simpson_fixed(const std::function<double(double)>& f, double a, double b,
                     double step) {
  if (!(step > 0.0) || !(b > a))
    throw std::invalid_argument("simpson_fixed: bad interval or step");
  int n = static_cast<int>(std::ceil((b - a) / step));
  if (n % 2) ++n;
  if (n < 2) n = 2;
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace mixlab
