#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixlab/group_core.hpp"

namespace mixlab {

// Integer matrix with determinant exactly one, kept in exact arithmetic.
struct LatticeElement {
  Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic> m;

  int dim() const { return static_cast<int>(m.rows()); }
  long long norm_sq() const;
  GroupElement to_group() const;
};

bool operator==(const LatticeElement& a, const LatticeElement& b);

// All integer determinant-one matrices with Frobenius norm strictly below t,
// in lexicographic entry order (row-major). Exhaustive bounded scan in exact
// integers: for d=2 the fourth entry is solved from the determinant, for d=3
// partial row sums prune the nine-fold loop. Enumeration splits over the
// leading entry when workers > 1; the merge preserves the order. Caps keep
// the scan inside a sane memory/time budget.
std::vector<LatticeElement> enumerate_lattice_ball(double t, int d,
                                                   unsigned workers = 1);

// Haar volume of {g in SL(2,R): |g|_F < t}, in the normalization
// dg = y^{-2} dx dy dtheta with the circle fiber of length 2pi. The radial
// Cartan form of the same measure has density (2pi)^2 (s^2 - s^{-2})/s ds,
// whose antiderivative gives the closed form. Zero for t <= sqrt(2): no
// unimodular matrix has smaller norm.
double ball_volume_sl2(double t);

struct CovolumeEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  uint64_t samples = 0;
};

// Volume of SL(2,R)/SL(2,Z) in the same normalization as ball_volume_sl2:
// hyperbolic area of the standard fundamental domain times pi, the fiber
// being half a circle because -I lies in the lattice. The area integral in y
// is done exactly; only the x integral is sampled.
CovolumeEstimate covolume_estimate(uint64_t samples, uint64_t seed);

struct CountReport {
  std::vector<double> ts;
  std::vector<long long> counts;
  std::vector<double> volumes;
  std::vector<double> ratios;  // count / volume
  double ratio_limit = 0.0;    // last grid point
  double drift = 0.0;          // relative change across the last two points
};

void to_json(nlohmann::json& j, const CountReport& rep);
std::string count_report_csv(const CountReport& rep);

// Counts lattice points in growing norm balls (d=2) against their Haar
// volumes; the ratio should flatten toward 1/covolume.
CountReport count_ratio_experiment(const std::vector<double>& t_grid);

struct WellRoundedReport {
  bool pass = false;
  double m_ball = 0.0;   // volume of the bare ball
  double m_plus = 0.0;   // upper enclosure of the union's volume
  double m_minus = 0.0;  // lower enclosure of the intersection's volume
  double factor = 1.0;   // worst sampled norm inflation |g1|_2 |g2|_2
  int pairs = 0;
};

// Checks the sandwich  m_plus/delta <= m(B_t) <= delta * m_minus  for the
// union/intersection of (g1 B_t g2) over a sampled set of pairs from the
// metric ball of radius rho at the identity. The union and intersection are
// not measured directly; they are enclosed by norm balls with radii scaled
// by the worst sampled operator-norm product, so the verdict is conservative.
WellRoundedReport well_rounded_check(double t, double rho, double delta,
                                     int samples = 64,
                                     uint64_t seed = 0x5e'ed'ba'11ULL);

// Smooth compactly supported bump on the group: a mollifier profile in the
// K-bi-invariant log-singular-value distance from the center. The squared
// distance is an analytic function of |c^{-1}g|_F^2, so the bump is smooth
// everywhere including the center.
struct GroupBump {
  GroupElement center;
  double width = 0.0;
  double amplitude = 1.0;

  GroupBump(GroupElement center, double width, double amplitude = 1.0);
};

double evaluate_group_bump(const GroupBump& phi, const GroupElement& g);

struct CrosscheckRecord {
  double lhs = 0.0;
  double rhs = 0.0;
  double lhs_se = 0.0;
  double rhs_se = 0.0;
  double diff = 0.0;
  double t = 0.0;
  uint64_t samples = 0;
};

void to_json(nlohmann::json& j, const CrosscheckRecord& rec);

// Two Monte Carlo routes to the same pairing. lhs: sample the quotient twice,
// periodize phi over the lattice, and weight by the number of lattice
// translates landing in the norm ball (the unfolding picks up the squared
// covolume, estimated internally on a derived stream). rhs: sample the norm
// ball and the support of phi in the group and integrate the matrix
// coefficient directly. Both sides vanish identically below the first
// lattice norm sqrt(2).
CrosscheckRecord counting_functional_crosscheck(double t, const GroupBump& phi,
                                                uint64_t samples,
                                                uint64_t seed);

struct ConfigurationResult {
  bool found = false;
  GroupElement g = GroupElement::identity(2);
  std::vector<LatticeElement> gammas;
  double max_distance = 0.0;  // max_i d(g_i, g * gamma_i) actually achieved
  bool truncated = false;     // candidate search hit its budget
  int restarts_used = 0;
};

// Searches for lattice elements gamma_i and a single g aligning each g_i to
// g * gamma_i within eps in the log-singular-value distance. Candidate
// tuples come from the lattice ball of the given radius, pruned by pairwise
// distance compatibility (left invariance makes d(gamma_i, gamma_j) match
// d(g_i, g_j) up to 2 eps), then ranked by the closed-form alignment that
// keeps slot 0 exact; the best-ranked tuples are polished by derivative-free
// simplex descent over the three Iwasawa parameters of g, with a fixed
// restart budget. Failure is reported with the best alignment found, never
// thrown.
ConfigurationResult approximate_configuration(const GroupTuple& gs, double eps,
                                              double search_radius);

struct DistanceHit {
  bool found = false;
  double delta = 0.0;  // best achievable hyperbolic distance
  std::array<long long, 4> quadruple{1, 0, 0, 1};
  double gap = 0.0;  // |D - delta|
};

// Nearest value to D in the distance set {acosh(|g|_F^2 / 2): g integer,
// det 1}, by exhausting quadruple norms up to 2 cosh(D + eps). Pairs (a,d)
// are scanned directly; (b,c) runs over the divisor pairs of ad - 1, whose
// factorizations come from sieving the progression q(d) = a*d - 1 column by
// column, so the search stays exhaustive with memory flat in D.
DistanceHit distance_set_approximation(double D, double eps);

}  // namespace mixlab
