#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixlab/cumulant_engine.hpp"
#include "mixlab/homspace.hpp"

namespace mixlab {

// Averaging window of the flow integral: symmetric [-t, t], or the one-sided
// [0, t] form. Both are normalized so their distribution stabilizes as t
// grows; they agree in law, not pointwise.
enum class AverageSide { TwoSided, OneSided };

// Normalized flow average: the window integral of f along the diagonal orbit
// of x, divided by the square root of the window length. Composite Simpson;
// the orbit is walked node to node on reduced representatives, never flowed
// from scratch, so deep windows stay on the true coset orbit. The step is a
// refinement knob for convergence checks and capped at 0.1.
double normalized_average_Ft(const PointX& x,
                             const std::function<double(const PointX&)>& f,
                             double t, AverageSide side = AverageSide::TwoSided,
                             double step = 0.05);
double normalized_average_Ft(const PointX& x, const Observable& phi, double t,
                             AverageSide side = AverageSide::TwoSided,
                             double step = 0.05);

// Least-squares fit of |y| by amplitude * exp(-rate * x). Zero values are
// floored far below any statistical resolution before the log.
struct DecayFit {
  double amplitude = 0.0;
  double rate = 0.0;
};

DecayFit fit_exponential_envelope(const std::vector<double>& xs,
                                  const std::vector<double>& ys);

struct VarianceEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  double tail_bound = 0.0;     // envelope mass beyond the window
  double envelope_rate = 0.0;  // fitted decay rate of the correlation curve
};

// Limit variance of the normalized averages: the integral over the flow
// parameter of the autocorrelation of phi, by trapezoid on [-S, S]. The grid
// step is 0.05, fine enough to resolve the correlation peak of narrow
// observables, whose width is set by the bump width and not by S. The curve
// is even in the flow parameter (the sampling measure is flow invariant), so
// only s >= 0 is estimated, each node on its own seed stream with the stated
// number of samples, and with the translated point reached by chunked flow,
// which stays reliable at separations where a one-shot matrix product would
// not reduce. The part beyond S is bounded by an exponential envelope fitted
// to the early visible decay and reported, not added.
VarianceEstimate variance_sigma2(const Observable& phi, double S,
                                 uint64_t samples, uint64_t seed,
                                 unsigned workers = 1);
// Same estimator on a raw function; the caller is responsible for f having
// zero mean, which the Observable overload checks via its flag.
VarianceEstimate variance_sigma2(const std::function<double(const PointX&)>& f,
                                 double S, uint64_t samples, uint64_t seed,
                                 unsigned workers = 1);

struct CltReport {
  double t = 0.0;
  uint64_t samples = 0;
  double mean = 0.0, mean_se = 0.0;
  double variance = 0.0;
  double cum3 = 0.0, cum3_se = 0.0;
  double cum4 = 0.0, cum4_se = 0.0;
  double cum5 = 0.0, cum5_se = 0.0;
  double sigma2 = 0.0, sigma2_se = 0.0, sigma2_tail = 0.0;
  double ks_distance = 1.0;
  bool mean_pass = false;
  bool cum3_pass = false;
  bool cum4_pass = false;
  bool ks_pass = false;
  bool degenerate = false;  // limit variance indistinguishable from zero
};

void to_json(nlohmann::json& j, const CltReport& rep);

struct CltRun {
  CltReport report;
  std::vector<double> ft;  // the raw normalized averages, sample order
};

// Draws n starting points, computes their normalized averages, and compares
// the empirical law against the centered normal with the limit variance:
// mean and third/fourth cumulants against influence-function standard-error
// bands, plus the Kolmogorov-Smirnov distance. Sample i runs on the stream
// derived from (seed, i), so any worker count produces identical output. If
// the limit variance is within two standard errors of zero the report is
// flagged degenerate and the distribution comparison is not asserted.
CltRun clt_run(const Observable& phi, double t, uint64_t n, uint64_t seed,
               unsigned workers = 1);
// Raw-function variant (caller asserts zero mean); this is the only way to
// drive the degenerate branch deterministically, e.g. with f identically 0.
CltRun clt_run(const std::function<double(const PointX&)>& f, double t,
               uint64_t n, uint64_t seed, unsigned workers = 1);

std::string ft_samples_csv(const std::vector<double>& ft);
// 64 equal bins spanning [-4 sigma, 4 sigma]; out-of-range values are not
// binned (their count is recoverable from the samples CSV).
std::string ft_histogram_csv(const std::vector<double>& ft, double sigma);

struct FolnerReport {
  std::vector<double> ts;
  std::vector<double> growths;   // log(2t) / t
  std::vector<double> overlaps;  // (2t - |s|) / 2t
  double s = 0.0;
  bool growth_decreasing = false;
  bool overlap_increasing = false;
};

void to_json(nlohmann::json& j, const FolnerReport& rep);

// Window calculus for the flow subgroup, where everything is exact interval
// arithmetic: subexponential growth of the window volume and the Folner
// overlap ratio under translation by s.
FolnerReport growth_and_folner_check(const std::vector<double>& t_grid,
                                     double s = 1.0);

struct ClusteredCumulantReport {
  double cumulant = 0.0;
  double standard_error = 0.0;
  int r = 0;
  double alpha = 0.0;
  double beta = 0.0;
};

void to_json(nlohmann::json& j, const ClusteredCumulantReport& rep);

// Joint cumulant of the translated copies (h_1 phi, ..., h_r phi), from
// Monte Carlo moments of every index subset combined by the partition
// formula. The tuple must genuinely lie in the declared diameter/gap cell
// (re-verified via classify_tuple); r is capped at 4 to keep the subset
// moments affordable. Standard errors propagate through the partition
// formula's gradient. Decay in beta is read off by fitting
// fit_exponential_envelope over reports at increasing separations.
ClusteredCumulantReport clustered_cumulant_check(const GroupTuple& h,
                                                 const Partition& Q,
                                                 double alpha, double beta,
                                                 const Observable& phi,
                                                 uint64_t samples,
                                                 uint64_t seed);

}  // namespace mixlab
