#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <json.hpp>

#include "mixlab/group_core.hpp"

namespace mixlab {

// Point of X = SL(2,R)/SL(2,Z), held as a coset representative whose shadow
// rep^{-1} * i lies in the standard fundamental domain {|Re z| <= 1/2,
// |z| >= 1}. Inverting before projecting is what makes the shadow transform
// under the *left* modular action when the representative is multiplied by
// gamma on the right, so every coset reduces.
struct PointX {
  GroupElement rep;
  int word_length = 0;
};

// Shadow z = rep^{-1} * i of the reduced representative.
std::complex<double> shadow(const PointX& x);

// Fiber coordinate in [0, pi): the rotation angle left over after the shadow
// is split off. Only defined mod pi because -I lies in the lattice.
double fiber_angle(const PointX& x);

// Right-multiplies g into the fundamental domain, recording the number of
// translation/inversion steps.
PointX reduce(const GroupElement& g);

// Sample from the invariant probability measure: hyperbolic area on the
// fundamental domain (rejection in x, inverse CDF in y), uniform fiber.
PointX sample_mu(std::mt19937_64& eng);
PointX sample_mu(uint64_t seed);

// Left action followed by reduction.
PointX act(const GroupElement& g, const PointX& x);

// act by diag(e^{t/2}, e^{-t/2}); |t| > 500 is refused before exp overflows.
PointX geodesic_flow(double t, const PointX& x);

// Distance in the normalization where the geodesic flow has unit speed:
// sqrt(2) times the log-singular-value distance of group_core.
double unit_speed_distance(const GroupElement& g, const GroupElement& h);

enum class FlowDirection { Diagonal, UpperHorocycle, LowerHorocycle };

GroupElement flow_element(FlowDirection dir, double t);

// Bump observable on X: a smooth compactly supported radial profile in the
// hyperbolic distance from the center shadow, optionally multiplied by an
// angular harmonic in the fiber, which makes the mean exactly zero. The
// support must sit strictly inside the fundamental domain so the function
// descends to X smoothly; the constructor verifies that.
struct Observable {
  PointX center;
  double radial_width = 0.0;
  double angular_width = 0.0;  // harmonic half-period; ignored unless zero_mean
  bool zero_mean = false;

  Observable(PointX center, double radial_width, double angular_width,
             bool zero_mean);
  static Observable default_bump(bool zero_mean);
};

double evaluate(const Observable& phi, const PointX& x);

// Sobolev norm through order ell: Monte Carlo L^2(mu) norms of all iterated
// direction derivatives of length <= ell along the three basis subgroups,
// by Richardson-extrapolated central differences. Cumulative in ell so the
// chain S_0 <= S_1 <= ... holds by construction.
double sobolev_estimate(const std::function<double(const PointX&)>& f, int ell,
                        int samples, uint64_t seed);
double sobolev_estimate(const Observable& phi, int ell, int samples = 2000,
                        uint64_t seed = 4242);

struct CorrelationEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  uint64_t samples = 0;
  std::vector<GroupElement> tuple;
};

void to_json(nlohmann::json& j, const CorrelationEstimate& est);

// Monte Carlo estimate of int prod_i phi_i(g_i^{-1} x) dmu(x).
CorrelationEstimate correlation(const std::vector<GroupElement>& gs,
                                const std::vector<Observable>& phis,
                                uint64_t samples, uint64_t seed,
                                unsigned workers = 1);
CorrelationEstimate correlation(const GroupTuple& gs,
                                const std::vector<Observable>& phis,
                                uint64_t samples, uint64_t seed,
                                unsigned workers = 1);

// (1/T) int_0^T phi(h(t) x) dt by composite Simpson with step <= 0.05.
double time_average_PT(const Observable& phi, double T, FlowDirection dir,
                       const PointX& x);

// L^2(mu) deviation of the time average from the space mean. The generic
// overload estimates the mean by Monte Carlo; the Observable one uses the
// exact zero mean when the angular harmonic guarantees it.
double deviation_DT(const std::function<double(const PointX&)>& f, double T,
                    uint64_t samples, uint64_t seed,
                    FlowDirection dir = FlowDirection::Diagonal);
double deviation_DT(const Observable& phi, double T, uint64_t samples,
                    uint64_t seed, FlowDirection dir = FlowDirection::Diagonal);

enum class NormProperty { N1, N2, N3, N4 };

struct NormCheckReport {
  NormProperty property = NormProperty::N1;
  double max_ratio = 0.0;
  double bound = 0.0;      // frozen regression constant the ratio must respect
  double fitted_sigma = 0.0;  // N3 only: log-log slope of the growth
  bool pass = false;
};

NormCheckReport norm_property_check(NormProperty prop, int trials,
                                    uint64_t seed);

}  // namespace mixlab
