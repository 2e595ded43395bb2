#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

namespace mixlab {

// Element of SL(d,R), d >= 2. The determinant is validated on construction;
// everything downstream may assume det = 1 up to 1e-9.
struct GroupElement {
  Eigen::MatrixXd m;

  explicit GroupElement(Eigen::MatrixXd mat);
  static GroupElement identity(int d);

  int dim() const { return static_cast<int>(m.rows()); }
  GroupElement inverse() const;
  GroupElement operator*(const GroupElement& other) const;
};

// g = k1 * diag(a) * k2 with k1,k2 orthogonal (special orthogonal by
// construction) and a positive nonincreasing with product 1.
struct CartanCoords {
  Eigen::MatrixXd k1;
  Eigen::VectorXd a;
  Eigen::MatrixXd k2;
  Eigen::MatrixXd reconstruct() const;
};

// g = u * diag(a) * k with u unit upper-triangular, a positive, k orthogonal.
struct IwasawaCoords {
  Eigen::MatrixXd u;
  Eigen::VectorXd a;
  Eigen::MatrixXd k;
  Eigen::MatrixXd reconstruct() const;
};

struct GroupTuple {
  std::vector<GroupElement> gs;

  explicit GroupTuple(std::vector<GroupElement> elements);
  int size() const { return static_cast<int>(gs.size()); }
  int dim() const { return gs.front().dim(); }
};

// Pairwise statistics of a tuple in the adjoint norm and the distance below.
// weights are the |Ad(g_j^{-1} g_s) Z| values, normalized and sorted so that
// w_1 = 1 >= ... >= w_r, where Z is a unit nilpotent maximizing the adjoint
// norm of the extremal pair (z_i, z_s).
struct TupleStats {
  double min_norm = 0.0;   // N: min over i != j of adjoint_norm(g_i^{-1} g_j)
  double max_norm = 0.0;   // Q: max over the same pairs
  double width = 0.0;      // min over i != j of riemannian_distance(g_i, g_j)
  std::vector<double> weights;
  int z_i = 0, z_s = 0;    // indices of the pair defining Z (0-based)
  double z_angle = 0.0;    // angle of Z on the unit nilpotent circle
};

CartanCoords cartan_decompose(const GroupElement& g);
IwasawaCoords iwasawa_decompose(const GroupElement& g);

// Simple-root values a_i / a_{i+1} of a Cartan vector (positive entries).
std::vector<double> simple_roots(const Eigen::VectorXd& a);

// Operator norm of Ad(g) on trace-zero matrices with the Frobenius metric.
// Always >= 1, and equals (top singular value of g)^2 for d = 2.
double adjoint_norm(const GroupElement& g);

// Left-invariant distance: l2 norm of the log-singular-value vector of
// g^{-1} h. Vanishes on rotations, i.e. this measures the K-coset
// separation; all contracts here use exactly this convention.
double riemannian_distance(const GroupElement& g, const GroupElement& h);

// Radial density (t^2 - t^{-2}) of Haar measure on SL(2,R) in Cartan
// coordinates, with respect to dt/t on [1, infinity).
double haar_cartan_density_sl2(double t);

// Modular function of the upper-triangular subgroup at diag(t, 1/t).
double modular_function_sl2(double t);

// Haar-uniform sample from the Frobenius ball {|g|_F < t} in SL(2,R).
// Exact inverse-CDF in the radial Cartan coordinate; requires t > sqrt(2).
GroupElement sample_ball(double t, std::mt19937_64& eng);
GroupElement sample_ball(double t, uint64_t seed);

TupleStats tuple_stats(const GroupTuple& tuple);

// Checks a_l / a_k >= a_i / a_{i+1} for all l <= i < k on a Cartan vector.
bool root_contraction_check(const Eigen::VectorXd& a, double tol = 1e-12);

}  // namespace mixlab
