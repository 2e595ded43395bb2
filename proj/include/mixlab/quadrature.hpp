#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

namespace mixlab {

// Adaptive Gauss(7)-Kronrod(15) panels with recursive bisection.
// The panel budget bounds work on nasty integrands; exceeding it throws,
// since silently returning a bad value would poison downstream experiments.
double gk_adaptive(const std::function<double(double)>& f, double a, double b,
                   double abs_tol, int max_panels = 20000);

// Trapezoid rule with doubling until two refinements agree to abs_tol.
// Converges spectrally for smooth periodic integrands over a full period.
double periodic_trapezoid(const std::function<double(double)>& f, double a,
                          double b, double abs_tol, int max_n = 1 << 22);

// Composite Simpson with fixed step (last interval handled by adjusting the
// node count to even). Used where a contract pins the step size.
double simpson_fixed(const std::function<double(double)>& f, double a, double b,
                     double step);

}  // namespace mixlab
