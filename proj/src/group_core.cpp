#include "mixlab/group_core.hpp"

#include <cmath>
#include <stdexcept>

#include "mixlab/rng.hpp"

namespace mixlab {

namespace {

constexpr double kDetTol = 1e-9;

Eigen::Matrix2d rot(double theta) {
  Eigen::Matrix2d k;
  k << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  return k;
}

// Unit nilpotent k(psi) E12 k(psi)^T; together with its negative this sweeps
// the whole intersection of the nilpotent cone with the Frobenius unit sphere.
Eigen::Matrix2d nilpotent_circle(double psi) {
  const double c = std::cos(psi), s = std::sin(psi);
  Eigen::Matrix2d z;
  z << -s * c, c * c, -s * s, s * c;
  return z;
}

}  // namespace

GroupElement::GroupElement(Eigen::MatrixXd mat) : m(std::move(mat)) {
  if (m.rows() != m.cols() || m.rows() < 2)
    throw std::invalid_argument("GroupElement: need a square matrix, d >= 2");
  if (!m.allFinite())
    throw std::invalid_argument("GroupElement: non-finite entries");
  const double det = m.determinant();
  if (std::abs(det - 1.0) > kDetTol)
    throw std::invalid_argument("GroupElement: determinant differs from 1");
}

GroupElement GroupElement::identity(int d) {
  return GroupElement(Eigen::MatrixXd::Identity(d, d));
}

GroupElement GroupElement::inverse() const {
  Eigen::MatrixXd inv = m.inverse();
  // Renormalize so the determinant check cannot trip on roundoff for
  // ill-conditioned inputs.
  const double det = inv.determinant();
  inv /= std::pow(det, 1.0 / inv.rows());
  return GroupElement(inv);
}

GroupElement GroupElement::operator*(const GroupElement& other) const {
  if (dim() != other.dim())
    throw std::invalid_argument("GroupElement: dimension mismatch");
  Eigen::MatrixXd prod = m * other.m;
  const double det = prod.determinant();
  prod /= std::pow(det, 1.0 / prod.rows());
  return GroupElement(std::move(prod));
}

Eigen::MatrixXd CartanCoords::reconstruct() const {
  return k1 * a.asDiagonal() * k2;
}

Eigen::MatrixXd IwasawaCoords::reconstruct() const {
  return u * a.asDiagonal() * k;
}

GroupTuple::GroupTuple(std::vector<GroupElement> elements) : gs(std::move(elements)) {
  if (gs.size() < 2) throw std::invalid_argument("GroupTuple: need r >= 2");
  for (const auto& g : gs)
    if (g.dim() != gs.front().dim())
      throw std::invalid_argument("GroupTuple: mixed dimensions");
}

CartanCoords cartan_decompose(const GroupElement& g) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      g.m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  CartanCoords c;
  c.k1 = svd.matrixU();
  c.a = svd.singularValues();
  c.k2 = svd.matrixV().transpose();
  // det(k1) = det(k2) for det(g) = 1; flip the last columns in tandem so both
  // factors land in SO(d). The diagonal part is untouched.
  if (c.k1.determinant() < 0) {
    const int d = g.dim();
    c.k1.col(d - 1) *= -1.0;
    c.k2.row(d - 1) *= -1.0;
  }
  return c;
}

IwasawaCoords iwasawa_decompose(const GroupElement& g) {
  // g = u a k  <=>  g g^T = R R^T with R = u a upper-triangular, positive
  // diagonal. Obtain R by Cholesky of the index-reversed Gram matrix.
  const int d = g.dim();
  Eigen::MatrixXd gram = g.m * g.m.transpose();
  Eigen::MatrixXd rev(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) rev(i, j) = gram(d - 1 - i, d - 1 - j);
  Eigen::LLT<Eigen::MatrixXd> llt(rev);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("iwasawa_decompose: Gram matrix not SPD");
  Eigen::MatrixXd L = llt.matrixL();
  Eigen::MatrixXd R(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) R(i, j) = L(d - 1 - i, d - 1 - j);

  IwasawaCoords w;
  w.a = R.diagonal();
  w.u = R * w.a.asDiagonal().inverse();
  w.k = R.triangularView<Eigen::Upper>().solve(g.m);
  return w;
}

std::vector<double> simple_roots(const Eigen::VectorXd& a) {
  if (a.size() < 2) throw std::invalid_argument("simple_roots: need d >= 2");
  if ((a.array() <= 0.0).any())
    throw std::invalid_argument("simple_roots: entries must be positive");
  std::vector<double> roots(a.size() - 1);
  for (int i = 0; i + 1 < a.size(); ++i) roots[i] = a(i) / a(i + 1);
  return roots;
}

namespace {

// Frobenius-orthonormal basis of sl(d): off-diagonal elementary matrices plus
// Gram-Schmidt-orthonormalized traceless diagonals.
std::vector<Eigen::MatrixXd> sl_basis(int d) {
  std::vector<Eigen::MatrixXd> basis;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (i != j) {
        Eigen::MatrixXd e = Eigen::MatrixXd::Zero(d, d);
        e(i, j) = 1.0;
        basis.push_back(e);
      }
  std::vector<Eigen::MatrixXd> diag;
  for (int i = 0; i + 1 < d; ++i) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
    h(i, i) = 1.0;
    h(i + 1, i + 1) = -1.0;
    for (const auto& prev : diag) h -= (prev.array() * h.array()).sum() * prev;
    h /= std::sqrt((h.array() * h.array()).sum());
    diag.push_back(h);
  }
  basis.insert(basis.end(), diag.begin(), diag.end());
  return basis;
}

}  // namespace

double adjoint_norm(const GroupElement& g) {
  const int d = g.dim();
  const auto basis = sl_basis(d);
  const int n = static_cast<int>(basis.size());
  Eigen::MatrixXd ginv = g.inverse().m;
  Eigen::MatrixXd ad(n, n);
  for (int c = 0; c < n; ++c) {
    Eigen::MatrixXd img = g.m * basis[c] * ginv;
    for (int r = 0; r < n; ++r)
      ad(r, c) = (basis[r].array() * img.array()).sum();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(ad);
  return svd.singularValues()(0);
}

double riemannian_distance(const GroupElement& g, const GroupElement& h) {
  Eigen::MatrixXd rel = g.m.inverse() * h.m;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(rel);
  const auto& sv = svd.singularValues();
  double sum = 0.0;
  for (int i = 0; i < sv.size(); ++i) {
    const double l = std::log(sv(i));
    sum += l * l;
  }
  return std::sqrt(sum);
}

double haar_cartan_density_sl2(double t) {
  if (t < 1.0)
    throw std::domain_error("haar_cartan_density_sl2: t must be >= 1");
  return t * t - 1.0 / (t * t);
}

double modular_function_sl2(double t) {
  if (t <= 0.0) throw std::domain_error("modular_function_sl2: t must be > 0");
  return 1.0 / (t * t);
}

GroupElement sample_ball(double t, std::mt19937_64& eng) {
  if (!(t > std::sqrt(2.0)))
    throw std::domain_error("sample_ball: ball is empty for t <= sqrt(2)");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double two_pi = 2.0 * M_PI;
  const double th1 = two_pi * unit(eng);
  const double th2 = two_pi * unit(eng);
  // Radial CDF is ((s^2 + s^{-2})/2 - 1) / (t^2/2 - 1); invert exactly.
  const double astar = t * t / 2.0;
  const double aval = 1.0 + unit(eng) * (astar - 1.0);
  const double s = std::sqrt(aval + std::sqrt(std::max(0.0, aval * aval - 1.0)));
  Eigen::Matrix2d diag = Eigen::Matrix2d::Zero();
  diag(0, 0) = s;
  diag(1, 1) = 1.0 / s;
  Eigen::MatrixXd g = rot(th1) * diag * rot(th2);
  return GroupElement(g);
}

GroupElement sample_ball(double t, uint64_t seed) {
  auto eng = make_engine(seed);
  return sample_ball(t, eng);
}

TupleStats tuple_stats(const GroupTuple& tuple) {
  if (tuple.dim() != 2)
    throw std::invalid_argument("tuple_stats: weight machinery requires d = 2");
  const int r = tuple.size();
  TupleStats st;
  st.min_norm = std::numeric_limits<double>::infinity();
  st.max_norm = 0.0;
  st.width = std::numeric_limits<double>::infinity();
  int bi = 0, bj = 1;
  for (int i = 0; i < r; ++i)
    for (int j = i + 1; j < r; ++j) {
      const GroupElement rel = tuple.gs[i].inverse() * tuple.gs[j];
      const double nn = adjoint_norm(rel);
      const double dd = riemannian_distance(tuple.gs[i], tuple.gs[j]);
      st.min_norm = std::min(st.min_norm, nn);
      st.width = std::min(st.width, dd);
      if (nn > st.max_norm) {
        st.max_norm = nn;
        bi = i;
        bj = j;
      }
    }
  st.z_i = bi;
  st.z_s = bj;

  // Z maximizes |Ad(M) Z| over the unit nilpotent circle, M the extremal
  // pair. Coarse scan plus golden-section refinement; the objective is a
  // trigonometric polynomial, so the scan guards against local maxima.
  const Eigen::Matrix2d M = (tuple.gs[bi].inverse() * tuple.gs[bj]).m;
  const Eigen::Matrix2d Minv = M.inverse();
  auto objective = [&](double psi) {
    const Eigen::Matrix2d img = M * nilpotent_circle(psi) * Minv;
    return img.squaredNorm();
  };
  const int kScan = 512;
  double best_psi = 0.0, best_val = -1.0;
  for (int k = 0; k < kScan; ++k) {
    const double psi = M_PI * k / kScan;
    const double v = objective(psi);
    if (v > best_val) {
      best_val = v;
      best_psi = psi;
    }
  }
  double lo = best_psi - M_PI / kScan, hi = best_psi + M_PI / kScan;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = objective(x1), f2 = objective(x2);
  while (hi - lo > 1e-10) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = objective(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = objective(x1);
    }
  }
  st.z_angle = 0.5 * (lo + hi);
  const Eigen::Matrix2d Z = nilpotent_circle(st.z_angle);

  std::vector<double> vals(r);
  const Eigen::Matrix2d gs_m = tuple.gs[bj].m;
  for (int j = 0; j < r; ++j) {
    const Eigen::Matrix2d rel = tuple.gs[j].inverse().m * gs_m;
    vals[j] = (rel * Z * rel.inverse()).norm();
  }
  std::sort(vals.begin(), vals.end(), std::greater<double>());
  st.weights.resize(r);
  for (int j = 0; j < r; ++j) st.weights[j] = vals[j] / vals[0];
  return st;
}

bool root_contraction_check(const Eigen::VectorXd& a, double tol) {
  const auto roots = simple_roots(a);
  const int d = static_cast<int>(a.size());
  for (int l = 0; l < d; ++l)
    for (int k = l + 1; k < d; ++k)
      for (int i = l; i < k; ++i)
        if (a(l) / a(k) < roots[i] * (1.0 - tol)) return false;
  return true;
}

}  // namespace mixlab
