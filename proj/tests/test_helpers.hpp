#pragma once

#include <Eigen/Dense>
#include <random>

#include "mixlab/group_core.hpp"

namespace mixlab::testing {

inline Eigen::MatrixXd random_rotation(int d, std::mt19937_64& eng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = gauss(eng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < d; ++i)
    if (r(i, i) < 0) q.col(i) *= -1.0;
  if (q.determinant() < 0) q.col(d - 1) *= -1.0;
  return q;
}

// Random SL(d) element as K A K with log-singular values of scale `spread`.
inline GroupElement random_sl(int d, std::mt19937_64& eng, double spread = 1.0) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd logs(d);
  double sum = 0.0;
  for (int i = 0; i < d; ++i) {
    logs(i) = spread * gauss(eng);
    sum += logs(i);
  }
  logs.array() -= sum / d;
  std::sort(logs.data(), logs.data() + d, std::greater<double>());
  Eigen::MatrixXd diag = logs.array().exp().matrix().asDiagonal();
  Eigen::MatrixXd g = random_rotation(d, eng) * diag * random_rotation(d, eng);
  g /= std::pow(g.determinant(), 1.0 / d);
  return GroupElement(g);
}

// Independent Iwasawa oracle: Gram-Schmidt on the rows of g from the bottom
// up yields k row by row, then a and u by back-substitution.
inline IwasawaCoords iwasawa_gram_schmidt(const GroupElement& g) {
  const int d = g.dim();
  Eigen::MatrixXd k(d, d);
  for (int i = d - 1; i >= 0; --i) {
    Eigen::VectorXd v = g.m.row(i).transpose();
    for (int j = d - 1; j > i; --j) v -= v.dot(k.row(j).transpose()) * k.row(j).transpose();
    k.row(i) = v.transpose() / v.norm();
  }
  Eigen::MatrixXd r = g.m * k.transpose();  // upper triangular, positive diag
  IwasawaCoords w;
  w.a = r.diagonal();
  w.u = r * w.a.asDiagonal().inverse();
  w.k = k;
  return w;
}

}  // namespace mixlab::testing
