#include "mixlab/homspace.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mixlab/rng.hpp"

namespace mixlab {

namespace {

constexpr int kMaxReductionSteps = 10000;
constexpr double kBoundaryTol = 1e-12;

std::complex<double> moebius(const Eigen::Matrix2d& m, std::complex<double> z) {
  return (m(0, 0) * z + m(0, 1)) / (m(1, 0) * z + m(1, 1));
}

// rep_inv = M(z) k(theta) with M(z) * i = z; used to assemble and to split
// representatives.
Eigen::Matrix2d shadow_frame(std::complex<double> z) {
  const double sy = std::sqrt(z.imag());
  Eigen::Matrix2d m;
  m << sy, z.real() / sy, 0.0, 1.0 / sy;
  return m;
}

void require_sl2(const GroupElement& g, const char* who) {
  if (g.dim() != 2)
    throw std::invalid_argument(std::string(who) + ": only SL(2,R) is supported");
}

// exp of a traceless 2x2 matrix: V^2 = -det(V) I collapses the series.
Eigen::Matrix2d exp_traceless(const Eigen::Matrix2d& v) {
  const double mu = -v.determinant();
  const Eigen::Matrix2d id = Eigen::Matrix2d::Identity();
  if (mu > 1e-30) {
    const double s = std::sqrt(mu);
    return std::cosh(s) * id + (std::sinh(s) / s) * v;
  }
  if (mu < -1e-30) {
    const double w = std::sqrt(-mu);
    return std::cos(w) * id + (std::sin(w) / w) * v;
  }
  return id + v;
}

}  // namespace

std::complex<double> shadow(const PointX& x) {
  return moebius(x.rep.inverse().m, std::complex<double>(0.0, 1.0));
}

double fiber_angle(const PointX& x) {
  const Eigen::Matrix2d rep_inv = x.rep.inverse().m;
  const std::complex<double> z = moebius(rep_inv, {0.0, 1.0});
  const Eigen::Matrix2d k = shadow_frame(z).inverse() * rep_inv;
  double theta = std::atan2(k(1, 0), k(0, 0));
  theta = std::fmod(theta, M_PI);
  if (theta < 0.0) theta += M_PI;
  return theta;
}

PointX reduce(const GroupElement& g) {
  require_sl2(g, "reduce");
  // Work on w = gamma * g^{-1}, so z = w * i is the shadow of the coset
  // representative g * gamma^{-1}. Both generator moves are integer row
  // operations, hence exact in floating point.
  Eigen::Matrix2d w = g.inverse().m;
  std::complex<double> z = moebius(w, {0.0, 1.0});
  int steps = 0;
  for (;;) {
    if (std::abs(z.real()) > 0.5 + kBoundaryTol) {
      const double n = std::round(z.real());
      w.row(0) -= n * w.row(1);
      z -= n;
      ++steps;
    }
    if (std::norm(z) < 1.0 - kBoundaryTol) {
      w = (Eigen::Matrix2d() << -w(1, 0), -w(1, 1), w(0, 0), w(0, 1)).finished();
      z = -1.0 / z;
      ++steps;
    } else if (std::abs(z.real()) <= 0.5 + kBoundaryTol) {
      break;
    }
    if (steps > kMaxReductionSteps)
      throw std::runtime_error("reduce: did not reach the fundamental domain");
  }
  // Long reductions (deep cusp excursions, large flows) accumulate rounding
  // in the massively cancelling product; restore the determinant before the
  // element validation sees it.
  const double det = w.determinant();
  if (!(det > 0.0))
    throw std::runtime_error("reduce: representative lost its orientation");
  w /= std::sqrt(det);
  // The tracked z and the matrix can drift apart once the integer moves start
  // cancelling more digits than a double carries (elements with singular
  // values beyond ~1e8). Such calls must fail loudly, not hand back a wrong
  // point; callers with long flows split them into short segments instead.
  const std::complex<double> zw = moebius(w, {0.0, 1.0});
  if (!(std::abs(zw.real()) <= 0.5 + 1e-6) || !(std::norm(zw) >= 1.0 - 1e-6) ||
      !(zw.imag() > 0.0))
    throw std::runtime_error("reduce: precision exhausted before the fundamental domain");
  return PointX{GroupElement{w}.inverse(), steps};
}

PointX sample_mu(std::mt19937_64& eng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // x has marginal density proportional to 1/sqrt(1-x^2) on [-1/2, 1/2]
  // (the y-integral of 1/y^2 down to the unit circle); envelope 2/sqrt(3).
  double x;
  for (;;) {
    x = unit(eng) - 0.5;
    const double accept = std::sqrt(3.0 / 4.0) / std::sqrt(1.0 - x * x);
    if (unit(eng) <= accept) break;
  }
  const double y_min = std::sqrt(1.0 - x * x);
  const double y = y_min / (1.0 - unit(eng));
  const double theta = 2.0 * M_PI * unit(eng);

  Eigen::Matrix2d rot;
  rot << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  const Eigen::Matrix2d rep_inv = shadow_frame({x, y}) * rot;
  return PointX{GroupElement{rep_inv}.inverse(), 0};
}

PointX sample_mu(uint64_t seed) {
  auto eng = make_engine(seed);
  return sample_mu(eng);
}

PointX act(const GroupElement& g, const PointX& x) {
  require_sl2(g, "act");
  return reduce(g * x.rep);
}

PointX geodesic_flow(double t, const PointX& x) {
  if (!(std::abs(t) <= 500.0))
    throw std::domain_error("geodesic_flow: |t| > 500 would overflow");
  // Flow in short segments, re-reducing in between: one long hop would need
  // ~t/2 decimal digits to keep the coset, which a double does not have. The
  // result is a pseudo-orbit endpoint, exact segment by segment.
  const int chunks = std::max(1, static_cast<int>(std::ceil(std::abs(t) / 10.0)));
  const GroupElement step = flow_element(FlowDirection::Diagonal, t / chunks);
  PointX cur = x;
  for (int i = 0; i < chunks; ++i) cur = act(step, cur);
  return cur;
}

double unit_speed_distance(const GroupElement& g, const GroupElement& h) {
  return std::sqrt(2.0) * riemannian_distance(g, h);
}

GroupElement flow_element(FlowDirection dir, double t) {
  Eigen::Matrix2d m = Eigen::Matrix2d::Identity();
  switch (dir) {
    case FlowDirection::Diagonal:
      m(0, 0) = std::exp(0.5 * t);
      m(1, 1) = std::exp(-0.5 * t);
      break;
    case FlowDirection::UpperHorocycle:
      m(0, 1) = t;
      break;
    case FlowDirection::LowerHorocycle:
      m(1, 0) = t;
      break;
  }
  return GroupElement{m};
}

Observable::Observable(PointX center_, double radial_width_,
                       double angular_width_, bool zero_mean_)
    : center(std::move(center_)),
      radial_width(radial_width_),
      angular_width(angular_width_),
      zero_mean(zero_mean_) {
  if (!(radial_width > 0.0) || !(angular_width > 0.0))
    throw std::invalid_argument("Observable: widths must be positive");
  const std::complex<double> zc = shadow(center);
  const double xc = zc.real(), yc = zc.imag();
  // The support is the hyperbolic ball of radius radial_width around zc,
  // i.e. the euclidean disk with center (xc, yc cosh w) and radius
  // yc sinh w. It must stay strictly inside the fundamental domain, or the
  // bump would not descend to a smooth function on the quotient.
  const double reach = yc * std::sinh(radial_width);
  if (!(std::abs(xc) + reach < 0.5))
    throw std::invalid_argument("Observable: support leaves |Re z| <= 1/2");
  const double dist0 = std::hypot(xc, yc * std::cosh(radial_width)) - reach;
  if (!(dist0 >= 1.0))
    throw std::invalid_argument("Observable: support dips below |z| = 1");
}

Observable Observable::default_bump(bool zero_mean) {
  Eigen::Matrix2d rep;
  rep << 1.0 / std::sqrt(2.0), 0.0, 0.0, std::sqrt(2.0);  // shadow 2i
  return Observable(PointX{GroupElement{rep}, 0}, 0.24, M_PI, zero_mean);
}

double evaluate(const Observable& phi, const PointX& x) {
  const std::complex<double> z = shadow(x);
  const std::complex<double> zc = shadow(phi.center);
  const double q = std::norm(z - zc) / (2.0 * z.imag() * zc.imag());
  const double dist = std::acosh(1.0 + q);
  const double u = dist / phi.radial_width;
  if (u >= 1.0) return 0.0;
  double val = std::exp(1.0 - 1.0 / (1.0 - u * u));
  if (phi.zero_mean) {
    const long m = std::max(1L, std::lround(M_PI / phi.angular_width));
    val *= std::cos(2.0 * m * fiber_angle(x));
  }
  return val;
}

namespace {

GroupElement direction_step(int dir, double h) {
  Eigen::Matrix2d m = Eigen::Matrix2d::Identity();
  if (dir == 0) {
    m(0, 0) = std::exp(0.5 * h);
    m(1, 1) = std::exp(-0.5 * h);
  } else if (dir == 1) {
    m(0, 1) = h;
  } else {
    m(1, 0) = h;
  }
  return GroupElement{m};
}

// Iterated central difference along the word of directions.
double word_derivative(const std::function<double(const PointX&)>& f,
                       const PointX& x, const std::vector<int>& word,
                       std::size_t pos, double h) {
  if (pos == word.size()) return f(x);
  const GroupElement fwd = direction_step(word[pos], h);
  const GroupElement bwd = direction_step(word[pos], -h);
  const double up = word_derivative(f, act(fwd, x), word, pos + 1, h);
  const double dn = word_derivative(f, act(bwd, x), word, pos + 1, h);
  return (up - dn) / (2.0 * h);
}

}  // namespace

double sobolev_estimate(const std::function<double(const PointX&)>& f, int ell,
                        int samples, uint64_t seed) {
  if (ell < 0 || ell > 3)
    throw std::invalid_argument("sobolev_estimate: only orders 0..3 are supported");
  if (samples < 1) throw std::invalid_argument("sobolev_estimate: no samples");

  // all direction words of length 1..ell
  std::vector<std::vector<int>> words;
  std::vector<std::vector<int>> frontier{{}};
  for (int k = 1; k <= ell; ++k) {
    std::vector<std::vector<int>> next;
    for (const auto& w : frontier)
      for (int d = 0; d < 3; ++d) {
        auto e = w;
        e.push_back(d);
        next.push_back(e);
        words.push_back(e);
      }
    frontier = std::move(next);
  }

  const double h = 1e-3;
  const MeanSE acc = mc_mean(
      static_cast<uint64_t>(samples), seed,
      [&](std::mt19937_64& eng) {
        const PointX x = sample_mu(eng);
        double total = f(x) * f(x);
        for (const auto& w : words) {
          const double coarse = word_derivative(f, x, w, 0, h);
          const double fine = word_derivative(f, x, w, 0, 0.5 * h);
          const double der = (4.0 * fine - coarse) / 3.0;
          total += der * der;
        }
        return total;
      });
  return std::sqrt(std::max(0.0, acc.mean));
}

double sobolev_estimate(const Observable& phi, int ell, int samples,
                        uint64_t seed) {
  return sobolev_estimate(
      [&phi](const PointX& x) { return evaluate(phi, x); }, ell, samples, seed);
}

void to_json(nlohmann::json& j, const CorrelationEstimate& est) {
  nlohmann::json tuple = nlohmann::json::array();
  for (const GroupElement& g : est.tuple) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < g.dim(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < g.dim(); ++c) row.push_back(g.m(r, c));
      rows.push_back(row);
    }
    tuple.push_back(rows);
  }
  j = nlohmann::json{{"value", est.value},
                     {"standard_error", est.standard_error},
                     {"samples", est.samples},
                     {"tuple", tuple}};
}

CorrelationEstimate correlation(const std::vector<GroupElement>& gs,
                                const std::vector<Observable>& phis,
                                uint64_t samples, uint64_t seed,
                                unsigned workers) {
  if (gs.empty() || gs.size() != phis.size())
    throw std::invalid_argument("correlation: needs one observable per element");
  if (samples < 1000)
    throw std::invalid_argument("correlation: needs at least 1000 samples");
  for (const GroupElement& g : gs) require_sl2(g, "correlation");

  std::vector<GroupElement> inv;
  inv.reserve(gs.size());
  for (const GroupElement& g : gs) inv.push_back(g.inverse());

  const MeanSE acc = mc_mean(
      samples, seed,
      [&](std::mt19937_64& eng) {
        const PointX x = sample_mu(eng);
        double prod = 1.0;
        for (std::size_t i = 0; i < inv.size() && prod != 0.0; ++i)
          prod *= evaluate(phis[i], act(inv[i], x));
        return prod;
      },
      workers);
  return CorrelationEstimate{acc.mean, acc.se, samples, gs};
}

CorrelationEstimate correlation(const GroupTuple& gs,
                                const std::vector<Observable>& phis,
                                uint64_t samples, uint64_t seed,
                                unsigned workers) {
  return correlation(gs.gs, phis, samples, seed, workers);
}

namespace {

// Composite Simpson along the orbit, stepping node to node with one short
// element and re-reducing at every node. Walking (instead of flowing to each
// node from scratch) keeps every matrix small, so long windows stay exact
// segment by segment; the path is a pseudo-orbit, as any fixed-precision
// integration of this flow must be.
template <typename F>
double orbit_average(const F& f, double T, FlowDirection dir, const PointX& x) {
  uint64_t n = static_cast<uint64_t>(std::ceil(T / 0.05));
  n += n % 2;
  n = std::max<uint64_t>(n, 2);
  const double h = T / static_cast<double>(n);
  const GroupElement step = flow_element(dir, h);
  PointX cur = x;
  double acc = f(cur);
  for (uint64_t k = 1; k < n; ++k) {
    cur = act(step, cur);
    acc += (k % 2 ? 4.0 : 2.0) * f(cur);
  }
  cur = act(step, cur);
  acc += f(cur);
  return (h / 3.0) * acc / T;
}

double time_average_fn(const std::function<double(const PointX&)>& f, double T,
                       FlowDirection dir, const PointX& x) {
  return orbit_average([&](const PointX& p) { return f(p); }, T, dir, x);
}

}  // namespace

double time_average_PT(const Observable& phi, double T, FlowDirection dir,
                       const PointX& x) {
  if (!(T > 0.0)) throw std::domain_error("time_average_PT: T must be positive");
  if (T > 500.0) throw std::domain_error("time_average_PT: T > 500 would overflow");
  return orbit_average([&](const PointX& p) { return evaluate(phi, p); }, T,
                       dir, x);
}

namespace {

double deviation_with_mean(const std::function<double(const PointX&)>& f,
                           double mean, double T, uint64_t samples,
                           uint64_t seed, FlowDirection dir) {
  const MeanSE acc = mc_mean(samples, seed, [&](std::mt19937_64& eng) {
    const PointX x = sample_mu(eng);
    const double d = time_average_fn(f, T, dir, x) - mean;
    return d * d;
  });
  return std::sqrt(std::max(0.0, acc.mean));
}

}  // namespace

double deviation_DT(const std::function<double(const PointX&)>& f, double T,
                    uint64_t samples, uint64_t seed, FlowDirection dir) {
  if (!(T > 0.0)) throw std::domain_error("deviation_DT: T must be positive");
  if (T > 500.0) throw std::domain_error("deviation_DT: T > 500 would overflow");
  const MeanSE m = mc_mean(samples, derive_seed(seed, 0xD7),
                           [&](std::mt19937_64& eng) { return f(sample_mu(eng)); });
  return deviation_with_mean(f, m.mean, T, samples, seed, dir);
}

double deviation_DT(const Observable& phi, double T, uint64_t samples,
                    uint64_t seed, FlowDirection dir) {
  auto f = [&phi](const PointX& x) { return evaluate(phi, x); };
  if (phi.zero_mean) {
    if (!(T > 0.0)) throw std::domain_error("deviation_DT: T must be positive");
    if (T > 500.0) throw std::domain_error("deviation_DT: T > 500 would overflow");
    return deviation_with_mean(f, 0.0, T, samples, seed, dir);
  }
  return deviation_DT(std::function<double(const PointX&)>(f), T, samples, seed,
                      dir);
}

namespace {

// Frozen regression constants for the norm hypotheses; each bound is the
// observed trial maximum at seed 8675309 / 20 trials with a 1.5x margin.
constexpr double kN1Bound = 0.90;   // observed 0.597
constexpr double kN2Bound = 0.38;   // observed 0.251
constexpr double kN3Sigma = 2.0;    // operator norm of Ad(a(t)) grows like t^2
constexpr double kN3Bound = 1.12;   // observed 0.741 (fitted exponent ~1.87)
constexpr double kN4Bound = 6.0e-4; // observed 3.44e-4; tiny because the
                                    // denominator multiplies two norms

Observable random_observable(std::mt19937_64& eng, bool force_zero_mean) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double xc = -0.05 + 0.1 * unit(eng);
  const double yc = 1.5 + 0.7 * unit(eng);
  const double cap = std::min(0.3, std::asinh((0.45 - std::abs(xc)) / yc));
  const double wr = 0.1 + (cap - 0.1) * unit(eng);
  const int m = 1 + static_cast<int>(3.0 * unit(eng));
  const bool zm = force_zero_mean || unit(eng) < 0.5;

  Eigen::Matrix2d rot = Eigen::Matrix2d::Identity();
  const Eigen::Matrix2d rep_inv = shadow_frame({xc, yc}) * rot;
  PointX center{GroupElement{rep_inv}.inverse(), 0};
  return Observable(std::move(center), wr, M_PI / m, zm);
}

double empirical_sup(const std::function<double(const PointX&)>& f,
                     const PointX& center, std::mt19937_64& eng, int probes) {
  double sup = std::abs(f(center));
  for (int i = 0; i < probes; ++i) sup = std::max(sup, std::abs(f(sample_mu(eng))));
  return sup;
}

}  // namespace

NormCheckReport norm_property_check(NormProperty prop, int trials,
                                    uint64_t seed) {
  if (trials < 20)
    throw std::invalid_argument("norm_property_check: needs at least 20 trials");

  NormCheckReport rep;
  rep.property = prop;
  const int sob_samples = 800;

  std::vector<double> log_norm, log_ratio;  // N3 regression data
  for (int trial = 0; trial < trials; ++trial) {
    auto eng = make_engine(seed, static_cast<uint64_t>(trial));
    const uint64_t sub = derive_seed(seed, 1000 + static_cast<uint64_t>(trial));
    const Observable phi = random_observable(eng, false);
    auto phi_fn = [&phi](const PointX& x) { return evaluate(phi, x); };

    double ratio = 0.0;
    switch (prop) {
      case NormProperty::N1: {
        const double sup = empirical_sup(phi_fn, phi.center, eng, 4000);
        ratio = sup / sobolev_estimate(phi, 1, sob_samples, sub);
        break;
      }
      case NormProperty::N2: {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        Eigen::Matrix2d v;
        v << unit(eng) - 0.5, unit(eng) - 0.5, unit(eng) - 0.5, 0.0;
        v(1, 1) = -v(0, 0);  // traceless direction
        v *= (0.01 + 0.19 * unit(eng)) / v.norm();
        const GroupElement g{exp_traceless(v)};
        const GroupElement ginv = g.inverse();
        auto moved = [&](const PointX& x) {
          return evaluate(phi, act(ginv, x)) - evaluate(phi, x);
        };
        const double sup = empirical_sup(moved, phi.center, eng, 4000);
        const double gap = (g.m - Eigen::Matrix2d::Identity()).norm();
        ratio = sup / (gap * sobolev_estimate(phi, 2, sob_samples, sub));
        break;
      }
      case NormProperty::N3: {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const double t = std::exp(std::log(10.0) * unit(eng));
        Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
        a(0, 0) = t;
        a(1, 1) = 1.0 / t;
        const double th1 = 2.0 * M_PI * unit(eng), th2 = 2.0 * M_PI * unit(eng);
        Eigen::Matrix2d k1, k2;
        k1 << std::cos(th1), -std::sin(th1), std::sin(th1), std::cos(th1);
        k2 << std::cos(th2), -std::sin(th2), std::sin(th2), std::cos(th2);
        const GroupElement g{k1 * a * k2};
        const GroupElement ginv = g.inverse();
        auto moved = [&](const PointX& x) { return evaluate(phi, act(ginv, x)); };
        const double s_moved = sobolev_estimate(moved, 1, sob_samples, sub);
        const double s_base = sobolev_estimate(phi, 1, sob_samples, sub);
        const double growth = s_moved / s_base;
        log_norm.push_back(std::log(t));
        log_ratio.push_back(std::log(std::max(growth, 1e-12)));
        ratio = growth / std::pow(t, kN3Sigma);
        break;
      }
      case NormProperty::N4: {
        // share the center so the supports overlap and the product is not
        // trivially zero
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const Observable psi(phi.center, phi.radial_width * (0.6 + 0.8 * unit(eng)),
                             M_PI / (1 + static_cast<int>(3.0 * unit(eng))),
                             unit(eng) < 0.5);
        auto prod = [&](const PointX& x) {
          return evaluate(phi, x) * evaluate(psi, x);
        };
        const double s_prod = sobolev_estimate(prod, 1, sob_samples, sub);
        const double s1 = sobolev_estimate(phi, 2, sob_samples, derive_seed(sub, 1));
        const double s2 = sobolev_estimate(psi, 2, sob_samples, derive_seed(sub, 2));
        ratio = s_prod / (s1 * s2);
        break;
      }
    }
    rep.max_ratio = std::max(rep.max_ratio, ratio);
  }

  switch (prop) {
    case NormProperty::N1: rep.bound = kN1Bound; break;
    case NormProperty::N2: rep.bound = kN2Bound; break;
    case NormProperty::N3: rep.bound = kN3Bound; break;
    case NormProperty::N4: rep.bound = kN4Bound; break;
  }
  if (prop == NormProperty::N3 && log_norm.size() >= 2) {
    // least-squares slope of log growth against log |g|
    const std::size_t n = log_norm.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sx += log_norm[i];
      sy += log_ratio[i];
      sxx += log_norm[i] * log_norm[i];
      sxy += log_norm[i] * log_ratio[i];
    }
    rep.fitted_sigma = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  }
  rep.pass = rep.max_ratio <= rep.bound;
  return rep;
}

}  // namespace mixlab
