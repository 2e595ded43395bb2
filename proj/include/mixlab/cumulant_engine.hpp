#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixlab/group_core.hpp"

namespace mixlab {

// Set partition of {0, ..., r-1} in canonical form: every block sorted,
// blocks ordered by smallest element.
struct Partition {
  int r = 0;
  std::vector<std::vector<int>> blocks;

  Partition(int r, std::vector<std::vector<int>> blocks);

  static Partition singletons(int r);
  static Partition one_block(int r);

  std::size_t size() const { return blocks.size(); }
  bool trivial() const { return blocks.size() == 1; }
};

bool operator==(const Partition& a, const Partition& b);
void to_json(nlohmann::json& j, const Partition& p);

// Joint moments mu(phi_I) for every index subset I of {0, ..., r-1},
// addressed by bitmask. The empty set carries the constant 1.
struct MomentFunctional {
  int r = 0;
  std::vector<double> vals;  // size 2^r, vals[0] == 1

  MomentFunctional(int r, std::vector<double> vals);

  double operator()(std::uint32_t mask) const { return vals[mask]; }
};

// All set partitions of {0, ..., r-1}, generated by restricted growth
// strings in lexicographic order. Counts match the Bell numbers.
std::vector<Partition> enumerate_partitions(int r);

// Moebius sum over partitions: sum_P (-1)^(|P|-1) (|P|-1)! prod_I m(I).
double cumulant_from_moments(const MomentFunctional& m, int r);

// Inverse transform: m(S) = sum over partitions P of S of prod_I c(I).
// c is addressed by subset bitmask like MomentFunctional; c[0] is ignored.
MomentFunctional moments_from_cumulants(const std::vector<double>& c, int r);

// Cumulant of the functional I -> prod_{J in Q} m(I intersect J). Equals the
// plain cumulant when Q has one block and vanishes whenever Q splits the
// indices into independent groups.
double conditional_cumulant(const MomentFunctional& m, const Partition& Q,
                            int r);

// Joint cumulant of one sample sequence with itself taken `order` times,
// computed from central moments through the partition formula.
double empirical_cumulant(const std::vector<double>& x, int order);

// Block geometry of a tuple under a partition: the largest in-block diameter,
// the smallest gap between distinct blocks (+infinity for one block), and
// whether the tuple lies in the cell {diameter <= alpha, gap > beta}.
struct TupleClass {
  double dq_max = 0.0;
  double dq_min = 0.0;
  bool member = false;
};

TupleClass classify_tuple(const GroupTuple& h, const Partition& Q,
                          double alpha, double beta);

// Transitively merges blocks of Q whose gap is at most beta. Requires
// in-block diameters <= alpha <= beta and at least one gap <= beta, so the
// result is strictly coarser; the merged diameters are re-verified against
// the 3*beta budget.
Partition coarsen(const GroupTuple& h, const Partition& Q, double alpha,
                  double beta);

// Label of one cell in the diameter/gap cover: either the near-diagonal cell
// (diameter <= beta_r) or a pair (Q, j) with in-block diameters <= 3 beta_j
// and gaps > beta_{j+1}.
struct DecompositionCell {
  bool diagonal = false;
  Partition Q;
  int j = -1;
};

DecompositionCell decompose_cover(const GroupTuple& h,
                                  const std::vector<double>& beta_ladder);

// Scale ladder beta_0 = 0, beta_{j+1} = max(3 beta_j, (theta + 3 sigma_r
// beta_j) / delta_r), together with the linearity constant beta_r / theta.
struct BetaLadder {
  std::vector<double> beta;
  double c_r = 0.0;
};

BetaLadder beta_ladder(double theta, double delta_r, double sigma_r, int r);

void to_json(nlohmann::json& j, const BetaLadder& ladder);

// Consecutive geometric scales q^(-i theta), q^(-(i+1) theta) bracketed by
// one weight gap [w_{p+1}, w_p]. p is 1-based to match the weight ordering;
// ties resolve to the smallest i, then the smallest p.
struct ScalePair {
  int p = 0;
  int i = 0;
};

ScalePair pigeonhole_scales(const std::vector<double>& weights, double q,
                            double theta);

// Parameters of one induction step: current decay exponent tau, growth
// exponent a, single-scale decay exponent b, tuple order r.
struct ExponentParams {
  double tau = 0.0;
  double a = 0.0;
  double b = 0.0;
  int r = 0;
};

// Max-min solution of the three-term bound: tau' is the best guaranteed
// decay exponent over theta in (0, 1/(r-1)), theta_star the maximizer, and
// t_rule the sampling-scale rule it certifies.
struct ExponentResult {
  double tau_prime = 0.0;
  double theta_star = 0.0;
  std::string t_rule;
};

ExponentResult derive_exponent(const ExponentParams& params);

// Iterated exponents tau_2 = delta, tau_r = derive_exponent(tau_{r-1}, ...).
// Entry k (0-based) holds tau_{k+2}.
std::vector<double> exponent_chain(double delta, double a, double b,
                                   int r_max);

}  // namespace mixlab
