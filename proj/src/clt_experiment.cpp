#include "mixlab/clt_experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <thread>

#include "mixlab/rng.hpp"

namespace mixlab {

namespace {

void check_window(double t) {
  if (!std::isfinite(t) || t <= 0.0 || t > 400.0) {
    throw std::domain_error("normalized_average_Ft: window length must lie in (0, 400]");
  }
}

}  // namespace

double normalized_average_Ft(const PointX& x,
                             const std::function<double(const PointX&)>& f,
                             double t, AverageSide side, double step) {
  check_window(t);
  if (!f) throw std::invalid_argument("normalized_average_Ft: empty function");
  if (!std::isfinite(step) || step <= 0.0 || step > 0.1) {
    throw std::invalid_argument("normalized_average_Ft: step must lie in (0, 0.1]");
  }
  const double lo = (side == AverageSide::TwoSided) ? -t : 0.0;
  const double len = t - lo;
  long n = std::lround(std::ceil(len / step - 1e-12));
  if (n < 2) n = 2;
  if (n % 2 == 1) ++n;
  const double h = len / static_cast<double>(n);

  PointX cur = (lo == 0.0) ? x : geodesic_flow(lo, x);
  const GroupElement hop = flow_element(FlowDirection::Diagonal, h);
  double acc = f(cur);
  for (long k = 1; k < n; ++k) {
    cur = act(hop, cur);
    acc += ((k % 2 == 1) ? 4.0 : 2.0) * f(cur);
  }
  cur = act(hop, cur);
  acc += f(cur);
  const double integral = acc * h / 3.0;
  return integral / std::sqrt(len);
}

double normalized_average_Ft(const PointX& x, const Observable& phi, double t,
                             AverageSide side, double step) {
  return normalized_average_Ft(
      x, [&phi](const PointX& p) { return evaluate(phi, p); }, t, side, step);
}

DecayFit fit_exponential_envelope(const std::vector<double>& xs,
                                  const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw std::invalid_argument("fit_exponential_envelope: need two or more matched points");
  }
  const std::size_t n = xs.size();
  double sx = 0.0, sz = 0.0;
  std::vector<double> zs(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) {
      throw std::invalid_argument("fit_exponential_envelope: non-finite data");
    }
    zs[i] = std::log(std::max(std::abs(ys[i]), 1e-300));
    sx += xs[i];
    sz += zs[i];
  }
  const double mx = sx / static_cast<double>(n);
  const double mz = sz / static_cast<double>(n);
  double sxx = 0.0, sxz = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxz += (xs[i] - mx) * (zs[i] - mz);
  }
  if (sxx <= 0.0) {
    throw std::invalid_argument("fit_exponential_envelope: abscissae must not coincide");
  }
  const double slope = sxz / sxx;
  return DecayFit{std::exp(mz - slope * mx), -slope};
}

VarianceEstimate variance_sigma2(const std::function<double(const PointX&)>& f,
                                 double S, uint64_t samples, uint64_t seed,
                                 unsigned workers) {
  if (!f) throw std::invalid_argument("variance_sigma2: empty function");
  if (!std::isfinite(S) || S < 20.0) {
    throw std::invalid_argument("variance_sigma2: window S must be >= 20");
  }
  // The grid must resolve the central peak of the correlation curve, which
  // for a bump of radial width w is gone by |s| ~ 2w. Coarser grids (0.5 and
  // up) overweight the s = 0 node and overstate the integral severalfold.
  const double h = 0.05;
  const long n = std::lround(std::ceil(S / h - 1e-12));
  const double s_eff = h * static_cast<double>(n);

  // Applying diag(e^{s/2}, e^{-s/2}) in one multiplication stops reducing
  // reliably near s = 36 (the quadratic forms overflow the integer range of
  // doubles), so the translated point is reached by the chunked flow instead.
  std::vector<double> corr(n + 1), err(n + 1);
  for (long k = 0; k <= n; ++k) {
    const double s = h * static_cast<double>(k);
    const MeanSE est = mc_mean(
        samples, derive_seed(seed, static_cast<uint64_t>(k)),
        [&f, s, k](std::mt19937_64& eng) {
          const PointX x = sample_mu(eng);
          const double p = f(x);
          if (p == 0.0) return 0.0;
          if (k == 0) return p * p;
          return p * f(geodesic_flow(-s, x));
        },
        workers);
    corr[k] = est.mean;
    err[k] = est.se;
  }

  bool all_zero = true;
  for (long k = 0; k <= n && all_zero; ++k) {
    all_zero = corr[k] == 0.0 && err[k] == 0.0;
  }
  if (all_zero) return VarianceEstimate{};

  // The curve is even, so the two-sided trapezoid collapses onto s >= 0 with
  // doubled interior weights.
  double value = h * (corr[0] + corr[n]);
  double var = h * h * (err[0] * err[0] + err[n] * err[n]);
  for (long k = 1; k < n; ++k) {
    value += 2.0 * h * corr[k];
    var += 4.0 * h * h * err[k] * err[k];
  }

  // Envelope from the early part of the curve, where the decay is visible
  // above the Monte Carlo noise; magnitudes are floored at their standard
  // errors so nodes lost in the noise plateau instead of dragging the fit.
  std::vector<double> xs, ys;
  for (long k = 0; k <= n; ++k) {
    const double s = h * static_cast<double>(k);
    if (s <= std::min(8.0, s_eff)) {
      xs.push_back(s);
      ys.push_back(std::max(std::abs(corr[k]), err[k]));
    }
  }
  const DecayFit fit = fit_exponential_envelope(xs, ys);

  VarianceEstimate out;
  out.value = value;
  out.standard_error = std::sqrt(var);
  out.envelope_rate = fit.rate;
  out.tail_bound = (fit.rate > 1e-9)
                       ? 2.0 * fit.amplitude * std::exp(-fit.rate * s_eff) / fit.rate
                       : std::numeric_limits<double>::infinity();
  return out;
}

VarianceEstimate variance_sigma2(const Observable& phi, double S,
                                 uint64_t samples, uint64_t seed,
                                 unsigned workers) {
  if (!phi.zero_mean) {
    throw std::invalid_argument("variance_sigma2: needs a zero-mean observable");
  }
  return variance_sigma2([&phi](const PointX& x) { return evaluate(phi, x); },
                         S, samples, seed, workers);
}

void to_json(nlohmann::json& j, const CltReport& rep) {
  j = nlohmann::json{{"t", rep.t},
                     {"samples", rep.samples},
                     {"mean", rep.mean},
                     {"mean_se", rep.mean_se},
                     {"variance", rep.variance},
                     {"cum3", rep.cum3},
                     {"cum3_se", rep.cum3_se},
                     {"cum4", rep.cum4},
                     {"cum4_se", rep.cum4_se},
                     {"cum5", rep.cum5},
                     {"cum5_se", rep.cum5_se},
                     {"sigma2", rep.sigma2},
                     {"sigma2_se", rep.sigma2_se},
                     {"sigma2_tail", rep.sigma2_tail},
                     {"ks_distance", rep.ks_distance},
                     {"mean_pass", rep.mean_pass},
                     {"cum3_pass", rep.cum3_pass},
                     {"cum4_pass", rep.cum4_pass},
                     {"ks_pass", rep.ks_pass},
                     {"degenerate", rep.degenerate}};
}

CltRun clt_run(const std::function<double(const PointX&)>& f, double t,
               uint64_t n, uint64_t seed, unsigned workers) {
  check_window(t);
  if (!f) throw std::invalid_argument("clt_run: empty function");
  if (n < 1000) throw std::invalid_argument("clt_run: need at least 1000 samples");
  if (workers == 0) workers = 1;
  workers = std::min<unsigned>(workers, 256);

  CltRun run;
  run.ft.assign(n, 0.0);

  // Sample i depends only on (seed, i), so the split across workers cannot
  // change any output byte.
  std::atomic<uint64_t> next{0};
  auto work = [&]() {
    for (;;) {
      const uint64_t i = next.fetch_add(1);
      if (i >= n) return;
      auto eng = make_engine(seed, i);
      const PointX x = sample_mu(eng);
      run.ft[i] = normalized_average_Ft(x, f, t);
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  const double dn = static_cast<double>(n);
  double mean = 0.0;
  for (double v : run.ft) mean += v;
  mean /= dn;

  double m2 = 0.0, m3 = 0.0, m4 = 0.0, m5 = 0.0;
  for (double v : run.ft) {
    const double d = v - mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
    m5 += d2 * d2 * d;
  }
  m2 /= dn;
  m3 /= dn;
  m4 /= dn;
  m5 /= dn;

  CltReport rep;
  rep.t = t;
  rep.samples = n;
  rep.mean = mean;
  rep.mean_se = std::sqrt(m2 / dn);
  rep.variance = m2;
  rep.cum3 = m3;
  rep.cum4 = m4 - 3.0 * m2 * m2;
  rep.cum5 = m5 - 10.0 * m3 * m2;

  // Influence functions of the centered cumulants give first-order standard
  // errors (for a normal law the cum3 band reproduces the classical 6 m2^3 / n).
  double s3 = 0.0, s4 = 0.0, s5 = 0.0;
  for (double v : run.ft) {
    const double d = v - mean;
    const double if3 = d * d * d - 3.0 * m2 * d - m3;
    const double if4 =
        d * d * d * d - m4 - 4.0 * m3 * d - 6.0 * m2 * (d * d - m2);
    const double if5 = d * d * d * d * d - m5 - 5.0 * m4 * d -
                       10.0 * m2 * if3 - 10.0 * m3 * (d * d - m2);
    s3 += if3 * if3;
    s4 += if4 * if4;
    s5 += if5 * if5;
  }
  rep.cum3_se = std::sqrt(s3 / dn / dn);
  rep.cum4_se = std::sqrt(s4 / dn / dn);
  rep.cum5_se = std::sqrt(s5 / dn / dn);

  const uint64_t node_samples = std::max<uint64_t>(10000, 8 * n);
  const VarianceEstimate v2 =
      variance_sigma2(f, 40.0, node_samples,
                      derive_seed(seed, 0xFFFF'FFFF'0000'0001ULL), workers);
  rep.sigma2 = v2.value;
  rep.sigma2_se = v2.standard_error;
  rep.sigma2_tail = v2.tail_bound;
  rep.degenerate = v2.value <= 2.0 * v2.standard_error;

  if (rep.degenerate) {
    rep.ks_distance = 1.0;
  } else {
    std::vector<double> sorted = run.ft;
    std::sort(sorted.begin(), sorted.end());
    const double sigma = std::sqrt(v2.value);
    double d_stat = 0.0;
    for (uint64_t i = 0; i < n; ++i) {
      const double cdf = 0.5 * std::erfc(-sorted[i] / (sigma * std::sqrt(2.0)));
      d_stat = std::max(d_stat, cdf - static_cast<double>(i) / dn);
      d_stat = std::max(d_stat, static_cast<double>(i + 1) / dn - cdf);
    }
    rep.ks_distance = d_stat;
  }

  rep.mean_pass = std::abs(rep.mean) <= 3.0 * rep.mean_se;
  rep.cum3_pass = std::abs(rep.cum3) <= 3.0 * rep.cum3_se;
  rep.cum4_pass = std::abs(rep.cum4) <= 3.0 * rep.cum4_se;
  rep.ks_pass = !rep.degenerate && rep.ks_distance < 0.03;

  run.report = rep;
  return run;
}

CltRun clt_run(const Observable& phi, double t, uint64_t n, uint64_t seed,
               unsigned workers) {
  return clt_run([&phi](const PointX& x) { return evaluate(phi, x); }, t, n,
                 seed, workers);
}

std::string ft_samples_csv(const std::vector<double>& ft) {
  std::string out = "index,ft\n";
  char buf[64];
  for (std::size_t i = 0; i < ft.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, ft[i]);
    out += buf;
  }
  return out;
}

std::string ft_histogram_csv(const std::vector<double>& ft, double sigma) {
  if (!std::isfinite(sigma) || sigma <= 0.0) {
    throw std::invalid_argument("ft_histogram_csv: sigma must be positive");
  }
  constexpr int kBins = 64;
  const double lo = -4.0 * sigma;
  const double width = 8.0 * sigma / kBins;
  std::vector<uint64_t> counts(kBins, 0);
  for (double v : ft) {
    const double pos = (v - lo) / width;
    if (pos >= 0.0 && pos < kBins) ++counts[static_cast<int>(pos)];
  }
  std::string out = "bin_lo,bin_hi,count\n";
  char buf[96];
  for (int b = 0; b < kBins; ++b) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%llu\n", lo + b * width,
                  lo + (b + 1) * width,
                  static_cast<unsigned long long>(counts[b]));
    out += buf;
  }
  return out;
}

void to_json(nlohmann::json& j, const FolnerReport& rep) {
  j = nlohmann::json{{"ts", rep.ts},
                     {"growths", rep.growths},
                     {"overlaps", rep.overlaps},
                     {"s", rep.s},
                     {"growth_decreasing", rep.growth_decreasing},
                     {"overlap_increasing", rep.overlap_increasing}};
}

FolnerReport growth_and_folner_check(const std::vector<double>& t_grid,
                                     double s) {
  if (t_grid.empty()) {
    throw std::invalid_argument("growth_and_folner_check: empty grid");
  }
  if (!std::isfinite(s)) {
    throw std::invalid_argument("growth_and_folner_check: non-finite shift");
  }
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    if (!std::isfinite(t_grid[i]) || t_grid[i] <= 0.0) {
      throw std::invalid_argument("growth_and_folner_check: grid must be positive");
    }
    if (i > 0 && t_grid[i] <= t_grid[i - 1]) {
      throw std::invalid_argument("growth_and_folner_check: grid must increase");
    }
  }

  FolnerReport rep;
  rep.ts = t_grid;
  rep.s = s;
  for (double t : t_grid) {
    rep.growths.push_back(std::log(2.0 * t) / t);
    rep.overlaps.push_back(std::max(0.0, 2.0 * t - std::abs(s)) / (2.0 * t));
  }
  rep.growth_decreasing = true;
  rep.overlap_increasing = true;
  for (std::size_t i = 1; i < t_grid.size(); ++i) {
    if (rep.growths[i] >= rep.growths[i - 1]) rep.growth_decreasing = false;
    if (rep.overlaps[i] <= rep.overlaps[i - 1]) rep.overlap_increasing = false;
  }
  return rep;
}

void to_json(nlohmann::json& j, const ClusteredCumulantReport& rep) {
  j = nlohmann::json{{"cumulant", rep.cumulant},
                     {"standard_error", rep.standard_error},
                     {"r", rep.r},
                     {"alpha", rep.alpha},
                     {"beta", rep.beta}};
}

ClusteredCumulantReport clustered_cumulant_check(const GroupTuple& h,
                                                 const Partition& Q,
                                                 double alpha, double beta,
                                                 const Observable& phi,
                                                 uint64_t samples,
                                                 uint64_t seed) {
  const int r = h.size();
  if (r > 4) {
    throw std::invalid_argument("clustered_cumulant_check: order capped at 4");
  }
  if (Q.r != r) {
    throw std::invalid_argument("clustered_cumulant_check: partition order mismatch");
  }
  const TupleClass cls = classify_tuple(h, Q, alpha, beta);
  if (!cls.member) {
    throw std::invalid_argument(
        "clustered_cumulant_check: tuple is not in the declared cell");
  }

  const uint32_t full = (1u << r) - 1u;
  std::vector<double> mom(full + 1, 0.0), err(full + 1, 0.0);
  mom[0] = 1.0;
  for (uint32_t mask = 1; mask <= full; ++mask) {
    std::vector<GroupElement> gs;
    for (int i = 0; i < r; ++i) {
      if (mask & (1u << i)) gs.push_back(h.gs[static_cast<std::size_t>(i)]);
    }
    const std::vector<Observable> phis(gs.size(), phi);
    const CorrelationEstimate c =
        correlation(gs, phis, samples, derive_seed(seed, mask));
    mom[mask] = c.value;
    err[mask] = c.standard_error;
  }

  const double cum = cumulant_from_moments(MomentFunctional(r, mom), r);

  // First-order error propagation through the partition formula. The subset
  // moments come from disjoint seed streams, so they combine in quadrature.
  std::vector<double> grad(full + 1, 0.0);
  for (const Partition& p : enumerate_partitions(r)) {
    double sign_fact = (p.size() % 2 == 1) ? 1.0 : -1.0;
    for (std::size_t b = 2; b < p.size(); ++b) {
      sign_fact *= static_cast<double>(b);
    }
    std::vector<uint32_t> masks;
    for (const auto& block : p.blocks) {
      uint32_t m = 0;
      for (int i : block) m |= 1u << i;
      masks.push_back(m);
    }
    for (std::size_t b = 0; b < masks.size(); ++b) {
      double prod_others = sign_fact;
      for (std::size_t o = 0; o < masks.size(); ++o) {
        if (o != b) prod_others *= mom[masks[o]];
      }
      grad[masks[b]] += prod_others;
    }
  }
  double var = 0.0;
  for (uint32_t mask = 1; mask <= full; ++mask) {
    var += grad[mask] * grad[mask] * err[mask] * err[mask];
  }

  ClusteredCumulantReport rep;
  rep.cumulant = cum;
  rep.standard_error = std::sqrt(var);
  rep.r = r;
  rep.alpha = alpha;
  rep.beta = beta;
  return rep;
}

}  // namespace mixlab
