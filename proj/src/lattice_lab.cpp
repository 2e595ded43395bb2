#include "mixlab/lattice_lab.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <queue>
#include <stdexcept>
#include <thread>
#include <tuple>

#include "mixlab/homspace.hpp"
#include "mixlab/rng.hpp"

namespace mixlab {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;

long long det2(long long a, long long b, long long c, long long d) {
  return a * d - b * c;
}

// top singular value of a 2x2 unimodular matrix from its squared Frobenius
// norm: the singular values are (s, 1/s), so s^2 + s^{-2} = F2
double spectral_from_f2(double f2) {
  const double h = std::max(1.0, f2 / 2.0);
  return std::sqrt(h + std::sqrt(std::max(0.0, h * h - 1.0)));
}

// squared log-singular-value distance, again via F2 of the relative element:
// cosh(2 log s) = F2 / 2
double dist_sq_from_f2(double f2) {
  const double d1 = std::acosh(std::max(1.0, f2 / 2.0));
  return d1 * d1 / 2.0;
}

Eigen::Matrix2d inverse2(const Eigen::Matrix2d& m) {
  Eigen::Matrix2d inv;
  inv << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
  return inv;
}

std::complex<double> moebius2(const Eigen::Matrix2d& m, std::complex<double> z) {
  return (m(0, 0) * z + m(0, 1)) / (m(1, 0) * z + m(1, 1));
}

// Visits every integer (a,b,c,d) with det 1 and |a|,|b|,|c| <= bound; d is
// solved from the determinant, so it needs no bound of its own. Callers whose
// matrices satisfy |entries| <= bound see all of them.
template <class Fn>
void scan_unimodular(long long bound, Fn&& fn) {
  for (long long a = -bound; a <= bound; ++a) {
    if (a == 0) {
      // det = -bc = 1 forces (b,c) = (-1,1) or (1,-1), d free
      for (long long b : {-1LL, 1LL}) {
        const long long c = -b;
        if (std::abs(b) > bound || std::abs(c) > bound) continue;
        for (long long d = -bound; d <= bound; ++d) fn(a, b, c, d);
      }
      continue;
    }
    for (long long b = -bound; b <= bound; ++b)
      for (long long c = -bound; c <= bound; ++c) {
        const long long num = 1 + b * c;
        if (num % a != 0) continue;
        fn(a, b, c, num / a);
      }
  }
}

void enumerate_d2_range(double t, long long a_lo, long long a_hi, long long bound,
                        std::vector<LatticeElement>& out) {
  const double t2 = t * t;
  for (long long a = a_lo; a <= a_hi; ++a) {
    if (a == 0) {
      for (long long b : {-1LL, 1LL}) {
        const long long c = -b;
        for (long long d = -bound; d <= bound; ++d) {
          if (static_cast<double>(2 + d * d) >= t2) continue;
          LatticeElement el;
          el.m.resize(2, 2);
          el.m << a, b, c, d;
          out.push_back(std::move(el));
        }
      }
      continue;
    }
    for (long long b = -bound; b <= bound; ++b)
      for (long long c = -bound; c <= bound; ++c) {
        const long long num = 1 + b * c;
        if (num % a != 0) continue;
        const long long d = num / a;
        const long long nsq = a * a + b * b + c * c + d * d;
        if (static_cast<double>(nsq) >= t2) continue;
        LatticeElement el;
        el.m.resize(2, 2);
        el.m << a, b, c, d;
        out.push_back(std::move(el));
      }
  }
}

void enumerate_d3_range(double t, long long lo, long long hi, long long bound,
                        std::vector<LatticeElement>& out) {
  const double t2 = t * t;
  const auto over = [t2](long long partial) {
    return static_cast<double>(partial) >= t2;
  };
  for (long long e00 = lo; e00 <= hi; ++e00) {
    const long long s0 = e00 * e00;
    if (over(s0)) continue;
    for (long long e01 = -bound; e01 <= bound; ++e01) {
      const long long s1 = s0 + e01 * e01;
      if (over(s1)) continue;
      for (long long e02 = -bound; e02 <= bound; ++e02) {
        const long long s2 = s1 + e02 * e02;
        if (over(s2)) continue;
        for (long long e10 = -bound; e10 <= bound; ++e10) {
          const long long s3 = s2 + e10 * e10;
          if (over(s3)) continue;
          for (long long e11 = -bound; e11 <= bound; ++e11) {
            const long long s4 = s3 + e11 * e11;
            if (over(s4)) continue;
            for (long long e12 = -bound; e12 <= bound; ++e12) {
              const long long s5 = s4 + e12 * e12;
              if (over(s5)) continue;
              // cofactors along the bottom row are fixed from here on
              const long long c20 = e01 * e12 - e02 * e11;
              const long long c21 = e02 * e10 - e00 * e12;
              const long long c22 = e00 * e11 - e01 * e10;
              for (long long e20 = -bound; e20 <= bound; ++e20) {
                const long long s6 = s5 + e20 * e20;
                if (over(s6)) continue;
                for (long long e21 = -bound; e21 <= bound; ++e21) {
                  const long long s7 = s6 + e21 * e21;
                  if (over(s7)) continue;
                  for (long long e22 = -bound; e22 <= bound; ++e22) {
                    const long long s8 = s7 + e22 * e22;
                    if (over(s8)) continue;
                    if (e20 * c20 + e21 * c21 + e22 * c22 != 1) continue;
                    LatticeElement el;
                    el.m.resize(3, 3);
                    el.m << e00, e01, e02, e10, e11, e12, e20, e21, e22;
                    out.push_back(std::move(el));
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

long long LatticeElement::norm_sq() const {
  long long s = 0;
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) s += m(i, j) * m(i, j);
  return s;
}

GroupElement LatticeElement::to_group() const {
  return GroupElement(m.cast<double>());
}

bool operator==(const LatticeElement& a, const LatticeElement& b) {
  return a.m.rows() == b.m.rows() && (a.m.array() == b.m.array()).all();
}

std::vector<LatticeElement> enumerate_lattice_ball(double t, int d,
                                                   unsigned workers) {
  if (d != 2 && d != 3)
    throw std::invalid_argument("enumerate_lattice_ball: d must be 2 or 3");
  if (!std::isfinite(t) || t <= 0.0)
    throw std::invalid_argument("enumerate_lattice_ball: t must be positive");
  const double cap = (d == 2) ? 80.0 : 3.5;
  if (t > cap)
    throw std::length_error("enumerate_lattice_ball: t exceeds the declared cap");

  const long long bound =
      std::max(0LL, static_cast<long long>(std::ceil(t)) - 1);
  const long long lo = -bound, hi = bound;

  const auto run = [&](long long a, long long b, std::vector<LatticeElement>& v) {
    if (d == 2)
      enumerate_d2_range(t, a, b, bound, v);
    else
      enumerate_d3_range(t, a, b, bound, v);
  };

  if (workers <= 1 || hi - lo < 1) {
    std::vector<LatticeElement> out;
    run(lo, hi, out);
    return out;
  }

  // split the leading-entry range into contiguous blocks; concatenating the
  // block results in order keeps the global lexicographic order
  const long long span = hi - lo + 1;
  const long long nblocks = std::min<long long>(workers, span);
  std::vector<std::vector<LatticeElement>> parts(nblocks);
  std::vector<std::thread> pool;
  for (long long bix = 0; bix < nblocks; ++bix) {
    const long long blo = lo + bix * span / nblocks;
    const long long bhi = lo + (bix + 1) * span / nblocks - 1;
    pool.emplace_back([&, bix, blo, bhi] { run(blo, bhi, parts[bix]); });
  }
  for (auto& th : pool) th.join();
  std::vector<LatticeElement> out;
  for (auto& p : parts)
    out.insert(out.end(), std::make_move_iterator(p.begin()),
               std::make_move_iterator(p.end()));
  return out;
}

double ball_volume_sl2(double t) {
  if (!std::isfinite(t)) throw std::invalid_argument("ball_volume_sl2: t not finite");
  if (t * t <= 2.0) return 0.0;
  // antiderivative of (s^2 - s^{-2})/s is (s^2 + s^{-2})/2, which equals
  // t^2/2 at the upper endpoint by the definition of s*
  const double four_pi_sq = 4.0 * M_PI * M_PI;
  return four_pi_sq * (t * t / 2.0 - 1.0);
}

CovolumeEstimate covolume_estimate(uint64_t samples, uint64_t seed) {
  if (samples < 10000)
    throw std::invalid_argument("covolume_estimate: need at least 1e4 samples");
  // area of the fundamental domain: the y-integral of y^{-2} from the circle
  // boundary up is exactly 1/sqrt(1-x^2), leaving a 1d integral over x
  const MeanSE area = mc_mean(samples, seed, [](std::mt19937_64& eng) {
    std::uniform_real_distribution<double> ux(-0.5, 0.5);
    const double x = ux(eng);
    return 1.0 / std::sqrt(1.0 - x * x);
  });
  CovolumeEstimate est;
  est.value = M_PI * area.mean;  // fiber [0, pi): -I is in the lattice
  est.standard_error = M_PI * area.se;
  est.samples = samples;
  return est;
}

void to_json(nlohmann::json& j, const CountReport& rep) {
  j = nlohmann::json{{"ts", rep.ts},           {"counts", rep.counts},
                     {"volumes", rep.volumes}, {"ratios", rep.ratios},
                     {"ratio_limit", rep.ratio_limit}, {"drift", rep.drift}};
}

std::string count_report_csv(const CountReport& rep) {
  std::string csv = "t,count,volume,ratio\n";
  char line[128];
  for (size_t i = 0; i < rep.ts.size(); ++i) {
    std::snprintf(line, sizeof(line), "%.10g,%lld,%.10g,%.10g\n", rep.ts[i],
                  rep.counts[i], rep.volumes[i], rep.ratios[i]);
    csv += line;
  }
  return csv;
}

CountReport count_ratio_experiment(const std::vector<double>& t_grid) {
  if (t_grid.empty())
    throw std::invalid_argument("count_ratio_experiment: empty grid");
  for (size_t i = 0; i < t_grid.size(); ++i) {
    if (t_grid[i] * t_grid[i] <= 2.0)
      throw std::invalid_argument(
          "count_ratio_experiment: grid points must exceed sqrt(2)");
    if (i > 0 && t_grid[i] <= t_grid[i - 1])
      throw std::invalid_argument("count_ratio_experiment: grid must increase");
  }
  CountReport rep;
  rep.ts = t_grid;
  for (double t : t_grid) {
    const auto pts = enumerate_lattice_ball(t, 2);
    rep.counts.push_back(static_cast<long long>(pts.size()));
    rep.volumes.push_back(ball_volume_sl2(t));
    rep.ratios.push_back(static_cast<double>(pts.size()) / rep.volumes.back());
  }
  rep.ratio_limit = rep.ratios.back();
  const size_t n = rep.ratios.size();
  rep.drift = (n >= 2) ? std::abs(rep.ratios[n - 1] / rep.ratios[n - 2] - 1.0)
                       : 0.0;
  return rep;
}

WellRoundedReport well_rounded_check(double t, double rho, double delta,
                                     int samples, uint64_t seed) {
  if (!(t * t > 2.0))
    throw std::invalid_argument("well_rounded_check: t must exceed sqrt(2)");
  if (!(delta > 1.0))
    throw std::invalid_argument("well_rounded_check: delta must exceed 1");
  if (rho < 0.0 || samples < 1)
    throw std::invalid_argument("well_rounded_check: bad rho or samples");

  WellRoundedReport rep;
  rep.m_ball = ball_volume_sl2(t);
  rep.pairs = samples;

  double factor = 1.0;
  if (rho > 0.0) {
    // metric ball of radius rho = Frobenius ball of this radius
    const double t_rho = std::sqrt(2.0 * std::cosh(kSqrt2 * rho));
    std::mt19937_64 eng = make_engine(seed, 0x9e);
    for (int i = 0; i < samples; ++i) {
      const GroupElement g1 = sample_ball(t_rho, eng);
      const GroupElement g2 = sample_ball(t_rho, eng);
      const double s1 = spectral_from_f2(g1.m.squaredNorm());
      const double s2 = spectral_from_f2(g2.m.squaredNorm());
      factor = std::max(factor, s1 * s2);
    }
  }
  rep.factor = factor;
  // union of g1 B_t g2 sits inside the norm ball inflated by the worst
  // operator-norm product; the intersection contains the deflated one
  rep.m_plus = ball_volume_sl2(t * factor);
  rep.m_minus = ball_volume_sl2(t / factor);
  rep.pass = (rep.m_plus / delta <= rep.m_ball * (1.0 + 1e-12)) &&
             (rep.m_ball <= delta * rep.m_minus * (1.0 + 1e-12)) &&
             rep.m_minus > 0.0;
  return rep;
}

GroupBump::GroupBump(GroupElement center_, double width_, double amplitude_)
    : center(std::move(center_)), width(width_), amplitude(amplitude_) {
  if (center.dim() != 2)
    throw std::invalid_argument("GroupBump: center must be 2x2");
  if (!(width > 0.0) || !std::isfinite(width))
    throw std::invalid_argument("GroupBump: width must be positive");
  if (!std::isfinite(amplitude))
    throw std::invalid_argument("GroupBump: amplitude must be finite");
}

namespace {

double bump_core(double width, double amplitude, double f2) {
  const double u2 = dist_sq_from_f2(f2) / (width * width);
  if (u2 >= 1.0 - 1e-14) return 0.0;
  return amplitude * std::exp(1.0 - 1.0 / (1.0 - u2));
}

// per-call cache for periodizing one bump over the lattice
struct BumpFrame {
  Eigen::Matrix2d cinv;
  std::complex<double> ci;  // shadow of the center in the upper half-plane
  double reach;             // |center|_2 * e^{w / sqrt(2)}: support norm radius
  double cusp_cap;          // max height at which translates can still touch
  double width, amplitude;
};

BumpFrame make_frame(const GroupBump& phi) {
  BumpFrame f;
  f.cinv = inverse2(phi.center.m);
  f.ci = moebius2(phi.center.m, {0.0, 1.0});
  f.reach = spectral_from_f2(phi.center.m.squaredNorm()) *
            std::exp(phi.width / kSqrt2);
  f.cusp_cap = std::exp(kSqrt2 * phi.width) * (1.0 + 1e-9);
  f.width = phi.width;
  f.amplitude = phi.amplitude;
  return f;
}

// sum of the bump over one coset: phi_bar(g Gamma) = sum_gamma phi(g gamma).
// Any gamma contributing satisfies |gamma|_2 <= |g^{-1}|_2 * reach, which
// bounds the entry scan. Translates can only reach the support if the orbit
// of i meets a hyperbolic ball around the center shadow, and that orbit has
// bounded height, so high-cusp representatives short-circuit to zero.
double periodized_eval(const BumpFrame& f, const Eigen::Matrix2d& rep) {
  const std::complex<double> z = moebius2(inverse2(rep), f.ci);
  if (z.imag() > f.cusp_cap) return 0.0;
  const double s_rep = spectral_from_f2(rep.squaredNorm());
  const long long bound =
      static_cast<long long>(std::floor(s_rep * f.reach + 1e-12));
  const Eigen::Matrix2d w = f.cinv * rep;
  double acc = 0.0;
  scan_unimodular(bound, [&](long long a, long long b, long long c, long long d) {
    const double m00 = w(0, 0) * a + w(0, 1) * c;
    const double m01 = w(0, 0) * b + w(0, 1) * d;
    const double m10 = w(1, 0) * a + w(1, 1) * c;
    const double m11 = w(1, 0) * b + w(1, 1) * d;
    const double f2 = m00 * m00 + m01 * m01 + m10 * m10 + m11 * m11;
    acc += bump_core(f.width, f.amplitude, f2);
  });
  return acc;
}

// number of lattice gamma with rep1 * gamma * rep2^{-1} in the norm ball
long long translate_count(const Eigen::Matrix2d& rep1, const Eigen::Matrix2d& rep2,
                          double t) {
  const double s1 = spectral_from_f2(rep1.squaredNorm());
  const double s2 = spectral_from_f2(rep2.squaredNorm());
  const long long bound =
      static_cast<long long>(std::floor(s1 * t * s2 + 1e-12));
  const Eigen::Matrix2d r2i = inverse2(rep2);
  const double t2 = t * t;
  long long count = 0;
  scan_unimodular(bound, [&](long long a, long long b, long long c, long long d) {
    Eigen::Matrix2d g;
    g << static_cast<double>(a), static_cast<double>(b), static_cast<double>(c),
        static_cast<double>(d);
    const double f2 = (rep1 * g * r2i).squaredNorm();
    if (f2 < t2) ++count;
  });
  return count;
}

}  // namespace

double evaluate_group_bump(const GroupBump& phi, const GroupElement& g) {
  if (g.dim() != 2)
    throw std::invalid_argument("evaluate_group_bump: element must be 2x2");
  const double f2 = (inverse2(phi.center.m) * g.m).squaredNorm();
  return bump_core(phi.width, phi.amplitude, f2);
}

void to_json(nlohmann::json& j, const CrosscheckRecord& rec) {
  j = nlohmann::json{{"lhs", rec.lhs},       {"rhs", rec.rhs},
                     {"lhs_se", rec.lhs_se}, {"rhs_se", rec.rhs_se},
                     {"diff", rec.diff},     {"t", rec.t},
                     {"samples", rec.samples}};
}

CrosscheckRecord counting_functional_crosscheck(double t, const GroupBump& phi,
                                                uint64_t samples,
                                                uint64_t seed) {
  if (!std::isfinite(t) || t <= 0.0)
    throw std::invalid_argument("counting_functional_crosscheck: bad t");
  CrosscheckRecord rec;
  rec.t = t;
  rec.samples = samples;
  if (t * t <= 2.0) return rec;  // no lattice point reaches the ball

  const CovolumeEstimate cov = covolume_estimate(200000, derive_seed(seed, 0xC0));
  const BumpFrame frame = make_frame(phi);

  // quotient side: the pairing of the translate count against the
  // periodization, unfolded over mu x mu; the probability normalization
  // costs one covolume factor per slot
  const MeanSE lhs_raw =
      mc_mean(samples, derive_seed(seed, 0xA1), [&](std::mt19937_64& eng) {
        const PointX x1 = sample_mu(eng);
        const PointX x2 = sample_mu(eng);
        const double p1 = periodized_eval(frame, x1.rep.m);
        if (p1 == 0.0) return 0.0;
        const double p2 = periodized_eval(frame, x2.rep.m);
        if (p2 == 0.0) return 0.0;
        const double cnt =
            static_cast<double>(translate_count(x1.rep.m, x2.rep.m, t));
        return cnt * p1 * p2;
      });

  // group side: average the matrix coefficient of the quotient action over
  // the ball; one covolume from the inner product, one ball volume from
  // uniformizing the ball integral
  const double vol_t = ball_volume_sl2(t);
  const MeanSE rhs_raw =
      mc_mean(samples, derive_seed(seed, 0xB2), [&](std::mt19937_64& eng) {
        const GroupElement b = sample_ball(t, eng);
        const PointX x = sample_mu(eng);
        const double p = periodized_eval(frame, x.rep.m);
        if (p == 0.0) return 0.0;
        const PointX xb = act(b, x);
        return p * periodized_eval(frame, xb.rep.m);
      });

  const double c = cov.value, c_se = cov.standard_error;
  rec.lhs = c * c * lhs_raw.mean;
  rec.lhs_se = std::sqrt(std::pow(c * c * lhs_raw.se, 2) +
                         std::pow(2.0 * c * lhs_raw.mean * c_se, 2));
  rec.rhs = vol_t * c * rhs_raw.mean;
  rec.rhs_se = std::sqrt(std::pow(vol_t * c * rhs_raw.se, 2) +
                         std::pow(vol_t * rhs_raw.mean * c_se, 2));
  rec.diff = std::abs(rec.lhs - rec.rhs);
  return rec;
}

namespace {

Eigen::Matrix2d iwasawa_chart(const Eigen::Vector3d& v) {
  const double e = std::exp(v[1]);
  const double cs = std::cos(v[2]), sn = std::sin(v[2]);
  Eigen::Matrix2d g;
  // unit shear times diagonal times rotation, assembled directly
  g << e * cs + v[0] * sn / e, -e * sn + v[0] * cs / e, sn / e, cs / e;
  return g;
}

struct SimplexResult {
  Eigen::Vector3d v;
  double f = std::numeric_limits<double>::infinity();
};

// plain Nelder-Mead on R^3; the objective is a max of smooth terms, which
// derivative-free descent handles without fuss
template <class Fn>
SimplexResult nelder_mead(Fn&& obj, const Eigen::Vector3d& start, double step,
                          int iters) {
  std::array<Eigen::Vector3d, 4> xs;
  std::array<double, 4> fs;
  xs[0] = start;
  for (int i = 1; i < 4; ++i) {
    xs[i] = start;
    xs[i][i - 1] += step;
  }
  for (int i = 0; i < 4; ++i) fs[i] = obj(xs[i]);

  const auto order = [&] {
    std::array<int, 4> idx{0, 1, 2, 3};
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fs[a] < fs[b]; });
    std::array<Eigen::Vector3d, 4> nx;
    std::array<double, 4> nf;
    for (int i = 0; i < 4; ++i) {
      nx[i] = xs[idx[i]];
      nf[i] = fs[idx[i]];
    }
    xs = nx;
    fs = nf;
  };

  for (int it = 0; it < iters; ++it) {
    order();
    if (fs[3] - fs[0] < 1e-14 && (xs[3] - xs[0]).norm() < 1e-12) break;
    const Eigen::Vector3d centroid = (xs[0] + xs[1] + xs[2]) / 3.0;
    const Eigen::Vector3d xr = centroid + (centroid - xs[3]);
    const double fr = obj(xr);
    if (fr < fs[0]) {
      const Eigen::Vector3d xe = centroid + 2.0 * (centroid - xs[3]);
      const double fe = obj(xe);
      if (fe < fr) {
        xs[3] = xe;
        fs[3] = fe;
      } else {
        xs[3] = xr;
        fs[3] = fr;
      }
    } else if (fr < fs[2]) {
      xs[3] = xr;
      fs[3] = fr;
    } else {
      const Eigen::Vector3d xc = (fr < fs[3]) ? centroid + 0.5 * (xr - centroid)
                                              : centroid + 0.5 * (xs[3] - centroid);
      const double fc = obj(xc);
      if (fc < std::min(fr, fs[3])) {
        xs[3] = xc;
        fs[3] = fc;
      } else {
        for (int i = 1; i < 4; ++i) {
          xs[i] = xs[0] + 0.5 * (xs[i] - xs[0]);
          fs[i] = obj(xs[i]);
        }
      }
    }
  }
  order();
  return SimplexResult{xs[0], fs[0]};
}

Eigen::Vector3d chart_coords(const GroupElement& g) {
  const IwasawaCoords iw = iwasawa_decompose(g);
  return {iw.u(0, 1), std::log(iw.a(0)), std::atan2(iw.k(1, 0), iw.k(0, 0))};
}

// Left rotation angle of the rotation * diagonal * rotation factorization
// (mod pi, which is harmless since -1 acts trivially on the distance).  Two
// elements with the same singular profile can be rotated onto each other
// exactly when their left frames are matched, so this angle is what the
// pair-alignment seed below needs.
double left_frame_angle(const Eigen::Matrix2d& m) {
  const double e = 0.5 * (m(0, 0) + m(1, 1));
  const double f = 0.5 * (m(0, 0) - m(1, 1));
  const double g = 0.5 * (m(1, 0) + m(0, 1));
  const double h = 0.5 * (m(1, 0) - m(0, 1));
  return 0.5 * (std::atan2(h, e) + std::atan2(g, f));
}

}  // namespace

ConfigurationResult approximate_configuration(const GroupTuple& gs, double eps,
                                              double search_radius) {
  if (gs.dim() != 2)
    throw std::invalid_argument("approximate_configuration: d must be 2");
  if (!(eps > 0.0) || !std::isfinite(eps))
    throw std::invalid_argument("approximate_configuration: eps must be positive");

  const int r = gs.size();
  ConfigurationResult res;
  res.max_distance = std::numeric_limits<double>::infinity();

  const std::vector<LatticeElement> cands = enumerate_lattice_ball(search_radius, 2);
  if (cands.empty()) return res;
  const int ncand = static_cast<int>(cands.size());

  std::vector<Eigen::Matrix2d> cand_m(ncand);
  for (int i = 0; i < ncand; ++i) cand_m[i] = cands[i].m.cast<double>();
  std::vector<Eigen::Matrix2d> gs_inv(r);
  for (int i = 0; i < r; ++i) gs_inv[i] = inverse2(gs.gs[i].m);

  std::vector<std::vector<double>> target(r, std::vector<double>(r, 0.0));
  for (int i = 0; i < r; ++i)
    for (int j = i + 1; j < r; ++j)
      target[i][j] = riemannian_distance(gs.gs[i], gs.gs[j]);

  // distance between two candidates, exact in integers until the acosh
  const auto cand_dist = [&](int i, int j) {
    const auto& gi = cands[i].m;
    const auto& gj = cands[j].m;
    // adjugate of gi times gj, entry by entry
    const long long a = gi(1, 1) * gj(0, 0) - gi(0, 1) * gj(1, 0);
    const long long b = gi(1, 1) * gj(0, 1) - gi(0, 1) * gj(1, 1);
    const long long c = -gi(1, 0) * gj(0, 0) + gi(0, 0) * gj(1, 0);
    const long long d = -gi(1, 0) * gj(0, 1) + gi(0, 0) * gj(1, 1);
    const double f2 = static_cast<double>(a * a + b * b + c * c + d * d);
    return std::sqrt(dist_sq_from_f2(f2));
  };

  // phase 1: tuples of candidates whose pairwise distances are compatible
  // with the targets (left invariance allows at most 2 eps of slack)
  const double slack = 2.0 * eps + 1e-9;
  constexpr long long kNodeBudget = 20000000;
  constexpr size_t kMaxTuples = 4000;
  long long nodes = 0;
  bool budget_hit = false;
  std::vector<std::pair<double, std::vector<int>>> tuples;
  std::vector<int> pick(r, 0);

  if (r == 2) {
    // A pair has a single pairwise constraint, and matching it is the whole
    // battle: once d(c_i, c_j) equals the target the bi-invariance of the
    // distance lets g align both slots exactly.  So scan every ordered pair
    // exhaustively, rejecting on the integer Frobenius norm before paying
    // for an acosh, and keep the closest matches for the descent phase.
    const double d_lo = std::max(0.0, target[0][1] - slack);
    const double d_hi = target[0][1] + slack;
    const double rt2 = std::sqrt(2.0);
    const long long if2_lo =
        static_cast<long long>(std::floor(2.0 * std::cosh(rt2 * d_lo))) - 1;
    const long long if2_hi =
        static_cast<long long>(std::ceil(2.0 * std::cosh(rt2 * d_hi))) + 1;
    // max-heap on the residual so the worst kept pair is evictable in O(log)
    std::priority_queue<std::tuple<double, int, int>> keep;
    for (int i = 0; i < ncand; ++i) {
      const auto& gi = cands[i].m;
      const long long p = gi(1, 1), q = -gi(0, 1);
      const long long s = -gi(1, 0), t = gi(0, 0);
      for (int j = 0; j < ncand; ++j) {
        const auto& gj = cands[j].m;
        const long long a = p * gj(0, 0) + q * gj(1, 0);
        const long long b = p * gj(0, 1) + q * gj(1, 1);
        const long long c = s * gj(0, 0) + t * gj(1, 0);
        const long long d = s * gj(0, 1) + t * gj(1, 1);
        const long long f2i = a * a + b * b + c * c + d * d;
        if (f2i < if2_lo || f2i > if2_hi) continue;
        const double resid = std::abs(
            std::sqrt(dist_sq_from_f2(static_cast<double>(f2i))) -
            target[0][1]);
        if (resid > slack) continue;
        if (keep.size() < kMaxTuples) {
          keep.emplace(resid, i, j);
        } else if (resid < std::get<0>(keep.top())) {
          keep.pop();
          keep.emplace(resid, i, j);
        }
      }
    }
    while (!keep.empty()) {
      const auto& [resid, i, j] = keep.top();
      tuples.push_back({resid, {i, j}});
      keep.pop();
    }
  } else {
    const std::function<void(int, double)> dfs = [&](int pos, double score) {
      if (budget_hit || tuples.size() >= kMaxTuples) {
        budget_hit = budget_hit || tuples.size() >= kMaxTuples;
        return;
      }
      if (pos == r) {
        tuples.emplace_back(score, pick);
        return;
      }
      for (int cidx = 0; cidx < ncand; ++cidx) {
        if (++nodes > kNodeBudget) {
          budget_hit = true;
          return;
        }
        double sc = score;
        bool ok = true;
        for (int j = 0; j < pos; ++j) {
          const double resid =
              std::abs(cand_dist(pick[j], cidx) - target[j][pos]);
          if (resid > slack) {
            ok = false;
            break;
          }
          sc = std::max(sc, resid);
        }
        if (!ok) continue;
        pick[pos] = cidx;
        dfs(pos + 1, sc);
        if (budget_hit) return;
      }
    };
    dfs(0, 0.0);
  }

  if (tuples.empty()) {
    // nothing survives the pruning: still report a best-effort alignment,
    // assembled greedily against the pairwise targets
    std::vector<int> greedy(r, 0);
    for (int pos = 1; pos < r; ++pos) {
      double best_resid = std::numeric_limits<double>::infinity();
      for (int cidx = 0; cidx < ncand; ++cidx) {
        double resid = 0.0;
        for (int j = 0; j < pos; ++j)
          resid = std::max(resid,
                           std::abs(cand_dist(greedy[j], cidx) - target[j][pos]));
        if (resid < best_resid) {
          best_resid = resid;
          greedy[pos] = cidx;
        }
      }
    }
    tuples.emplace_back(0.0, greedy);
  }

  const auto objective_for = [&](const std::vector<int>& idx) {
    return [&, idx](const Eigen::Vector3d& v) {
      const Eigen::Matrix2d g = iwasawa_chart(v);
      double worst = 0.0;
      for (int i = 0; i < r; ++i) {
        const double f2 = (gs_inv[i] * g * cand_m[idx[i]]).squaredNorm();
        worst = std::max(worst, std::sqrt(dist_sq_from_f2(f2)));
      }
      return worst;
    };
  };

  // seed for one tuple: g = g_0 k c_0^{-1} keeps slot 0 exact for every
  // rotation k, and the best k is analytic: match the left frame of the
  // slot-1 relative element.  (The basin in k is exponentially narrow at
  // large widths, so the descent phase cannot be trusted to find it alone.)
  const auto seed_for = [&](const std::vector<int>& idx) {
    Eigen::Matrix2d k = Eigen::Matrix2d::Identity();
    if (r >= 2) {
      const Eigen::Matrix2d rel_c = inverse2(cand_m[idx[0]]) * cand_m[idx[1]];
      const Eigen::Matrix2d rel_g = gs_inv[0] * gs.gs[1].m;
      const double th = left_frame_angle(rel_g) - left_frame_angle(rel_c);
      k << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    }
    return chart_coords(GroupElement(gs.gs[0].m * k * inverse2(cand_m[idx[0]])));
  };

  // phase 2: rank every surviving tuple by its seed alignment before
  // spending any descent budget.  Pairwise residuals are a weak filter once
  // r >= 3: the lattice distance spectrum is discrete, so incongruent tuples
  // tie with the congruent ones at residual zero, and only the seed
  // objective pushes the genuinely alignable tuples to the front.
  struct SeedRank {
    double f0;
    Eigen::Vector3d v0;
    int tuple_index;
  };
  std::vector<SeedRank> ranked;
  ranked.reserve(tuples.size());
  for (int ti = 0; ti < static_cast<int>(tuples.size()); ++ti) {
    const Eigen::Vector3d v0 = seed_for(tuples[ti].second);
    ranked.push_back({objective_for(tuples[ti].second)(v0), v0, ti});
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const SeedRank& a, const SeedRank& b) { return a.f0 < b.f0; });

  constexpr int kMaxRestarts = 50;
  double best = std::numeric_limits<double>::infinity();
  Eigen::Matrix2d best_g = Eigen::Matrix2d::Identity();
  std::vector<int> best_idx;
  int restarts = 0;

  for (const SeedRank& sd : ranked) {
    if (restarts >= kMaxRestarts) break;
    ++restarts;
    const std::vector<int>& idx = tuples[sd.tuple_index].second;
    SimplexResult sr{sd.v0, sd.f0};
    if (sr.f >= eps) sr = nelder_mead(objective_for(idx), sd.v0, 0.35, 220);
    if (sr.f < best) {
      best = sr.f;
      best_g = iwasawa_chart(sr.v);
      best_idx = idx;
    }
    if (best < eps) break;
  }

  res.restarts_used = restarts;
  res.truncated = budget_hit || (best >= eps && restarts >= kMaxRestarts &&
                                 tuples.size() > static_cast<size_t>(restarts));
  if (best_idx.empty()) return res;
  res.max_distance = best;
  res.found = best < eps;
  res.g = GroupElement(best_g);
  for (int ix : best_idx) res.gammas.push_back(cands[ix]);
  return res;
}

DistanceHit distance_set_approximation(double D, double eps) {
  if (!(D > 0.0) || !std::isfinite(D))
    throw std::invalid_argument("distance_set_approximation: D must be positive");
  if (!(eps > 0.0) || !std::isfinite(eps))
    throw std::invalid_argument("distance_set_approximation: eps must be positive");
  if (D + eps > 21.0)
    throw std::length_error("distance_set_approximation: D capped at 21");

  const double margin = std::max(eps, 0.1);
  const long long s_max =
      static_cast<long long>(std::ceil(2.0 * std::cosh(D + margin))) + 1;
  const double s_target = 2.0 * std::cosh(D);

  const auto isqrt = [](long long n) {
    long long r = static_cast<long long>(std::sqrt(static_cast<double>(n)));
    while (r * r > n) --r;
    while ((r + 1) * (r + 1) <= n) ++r;
    return r;
  };

  // |D - delta| is monotone in the squared norm on each side of the target,
  // so it suffices to keep the nearest candidate from below and from above
  // as integers and take acosh twice at the very end.
  long long best_lo = -1, best_hi = -1;
  std::array<long long, 4> quad_lo{}, quad_hi{};
  const auto consider = [&](long long a, long long b, long long c,
                            long long d) {
    const long long s = a * a + b * b + c * c + d * d;
    if (static_cast<double>(s) <= s_target) {
      if (s > best_lo) {
        best_lo = s;
        quad_lo = {a, b, c, d};
      }
    } else if (best_hi < 0 || s < best_hi) {
      best_hi = s;
      quad_hi = {a, b, c, d};
    }
  };

  // a = 0 forces bc = -1; sign symmetry leaves (b,c) = (1,-1) with d >= 0
  for (long long d = 0; 2 + d * d <= s_max; ++d) consider(0, 1, -1, d);

  // Everything else is organized by the diagonal pair (a, d).  The norm
  // budget alone admits ~exp(D) such pairs, but b*b + c*c >= 2|bc| = 2|ad-1|
  // confines the live ones to |a| + |d| <~ sqrt(budget), and within that
  // strip the divisor splits of ad - 1 come from factoring the arithmetic
  // progression q(d) = a*d - 1 column by column.  No table of size exp(D)
  // is ever built, so memory stays flat no matter how deep D goes.
  std::vector<int32_t> primes;
  {
    const long long root = isqrt(s_max) + 1;
    std::vector<char> composite(static_cast<size_t>(root) + 1, 0);
    for (long long i = 2; i <= root; ++i) {
      if (composite[i]) continue;
      primes.push_back(static_cast<int32_t>(i));
      for (long long j = i * i; j <= root; j += i) composite[j] = 1;
    }
  }
  const auto mod_inverse = [](long long a, long long p) {
    long long t = 0, nt = 1, r = p, nr = a;
    while (nr != 0) {
      const long long q = r / nr;
      t -= q * nt;
      std::swap(t, nt);
      r -= q * nr;
      std::swap(r, nr);
    }
    return t < 0 ? t + p : t;
  };

  // one column's factorization: small primes from the progression sieve
  // plus at most one leftover prime above the root
  struct FactorColumn {
    int32_t p[9];
    uint8_t e[9];
    uint8_t cnt;
  };
  const long long l1cap = isqrt(s_max + 2);
  std::vector<FactorColumn> cols(static_cast<size_t>(2 * l1cap + 3));
  std::vector<long long> cof(cols.size());
  long long divs[2048];

  for (long long a = 1; a * a <= s_max; ++a) {
    const long long dhi = std::min(isqrt(s_max - a * a), l1cap - a + 1);
    const int len = static_cast<int>(2 * dhi + 1);
    for (int i = 0; i < len; ++i) {
      cof[i] = std::abs(a * (i - dhi) - 1);
      cols[i].cnt = 0;
    }
    for (const int32_t p : primes) {
      if (a % p == 0) continue;  // then a*d - 1 is never divisible by p
      // p divides q(d) exactly on the residue class d = a^{-1} (mod p)
      const long long i0 = (mod_inverse(a % p, p) + dhi) % p;
      for (long long i = i0; i < len; i += p) {
        long long& n = cof[i];
        if (n == 0) continue;  // the ad = 1 column, handled separately below
        int e = 0;
        while (n % p == 0) {
          n /= p;
          ++e;
        }
        if (e > 0) {
          auto& fc = cols[i];
          fc.p[fc.cnt] = p;
          fc.e[fc.cnt] = static_cast<uint8_t>(e);
          ++fc.cnt;
        }
      }
    }
    for (int i = 0; i < len; ++i) {
      const long long d = i - dhi;
      const long long rem = s_max - a * a - d * d;
      const long long q = a * d - 1;
      if (q == 0) {
        // bc = 0: one of them vanishes, the other ranges freely
        for (long long b = 0; b * b <= rem; ++b) consider(a, b, 0, d);
        for (long long c = 1; c * c <= rem; ++c) consider(a, 0, c, d);
        continue;
      }
      if (2 * std::abs(q) > rem) continue;  // no split b*c = q can fit
      const FactorColumn& fc = cols[i];
      int nd = 1;
      divs[0] = 1;
      for (int fi = 0; fi < fc.cnt; ++fi) {
        const int base = nd;
        long long pk = 1;
        for (int e = 1; e <= fc.e[fi]; ++e) {
          pk *= fc.p[fi];
          for (int b0 = 0; b0 < base; ++b0) divs[nd++] = divs[b0] * pk;
        }
      }
      if (cof[i] > 1) {  // leftover prime above the sieve root
        const int base = nd;
        for (int b0 = 0; b0 < base; ++b0) divs[nd++] = divs[b0] * cof[i];
      }
      for (int ui = 0; ui < nd; ++ui) {
        const long long u = divs[ui];
        const long long v = q / u;
        if (u * u + v * v > rem) continue;
        consider(a, u, v, d);
      }
    }
  }

  DistanceHit hit;
  hit.gap = std::numeric_limits<double>::infinity();
  if (best_lo >= 2) {
    hit.delta = std::acosh(static_cast<double>(best_lo) / 2.0);
    hit.gap = std::abs(D - hit.delta);
    hit.quadruple = quad_lo;
  }
  if (best_hi >= 2) {
    const double delta = std::acosh(static_cast<double>(best_hi) / 2.0);
    if (std::abs(delta - D) < hit.gap) {
      hit.delta = delta;
      hit.gap = std::abs(delta - D);
      hit.quadruple = quad_hi;
    }
  }

  hit.found = hit.gap < eps;
  // exactness guard: the recorded quadruple must genuinely be unimodular
  const auto& qd = hit.quadruple;
  if (det2(qd[0], qd[1], qd[2], qd[3]) != 1)
    throw std::logic_error("distance_set_approximation: non-unimodular hit");
  return hit;
}

}  // namespace mixlab
