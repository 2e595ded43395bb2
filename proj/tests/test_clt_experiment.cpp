#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mixlab/clt_experiment.hpp"
#include "mixlab/group_core.hpp"
#include "mixlab/homspace.hpp"
#include "mixlab/rng.hpp"

using namespace mixlab;

namespace {

// Smooth on the whole quotient: a cusp-height cutoff with all derivatives
// vanishing at the support edge. Unlike the compactly supported bumps it has
// no steep shoulder, so quadrature convergence tests see clean behavior.
double cusp_height(const PointX& x) {
  const double y = shadow(x).imag();
  return (y > 1.1) ? std::exp(-1.0 / (y - 1.1)) : 0.0;
}

PointX point_from_seed(uint64_t seed) {
  auto eng = make_engine(seed, 1);
  return sample_mu(eng);
}

}  // namespace

TEST_CASE("normalized averages: exact normalization and window validation") {
  const PointX x = point_from_seed(7);

  // Simpson is exact on constants, so the normalization shows up bare.
  auto one = [](const PointX&) { return 1.0; };
  CHECK(normalized_average_Ft(x, one, 4.0) ==
        doctest::Approx(std::sqrt(8.0)).epsilon(1e-12));
  CHECK(normalized_average_Ft(x, one, 4.0, AverageSide::OneSided) ==
        doctest::Approx(2.0).epsilon(1e-12));

  auto zero = [](const PointX&) { return 0.0; };
  CHECK(normalized_average_Ft(x, zero, 3.0) == 0.0);
  CHECK(normalized_average_Ft(x, zero, 3.0, AverageSide::OneSided) == 0.0);

  // Shrinking windows: the average tends to sqrt(2t) * phi(x).
  const double tiny = 1e-6;
  CHECK(normalized_average_Ft(x, cusp_height, tiny) ==
        doctest::Approx(std::sqrt(2.0 * tiny) * cusp_height(x)).epsilon(1e-5));

  const Observable phi = Observable::default_bump(true);
  CHECK_THROWS_AS(normalized_average_Ft(x, phi, 0.0), std::domain_error);
  CHECK_THROWS_AS(normalized_average_Ft(x, phi, -1.0), std::domain_error);
  CHECK_THROWS_AS(normalized_average_Ft(x, phi, 401.0), std::domain_error);
  CHECK_THROWS_AS(normalized_average_Ft(x, cusp_height, 5.0,
                                        AverageSide::TwoSided, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(normalized_average_Ft(x, cusp_height, 5.0,
                                        AverageSide::TwoSided, 0.2),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      normalized_average_Ft(x, std::function<double(const PointX&)>(), 5.0),
      std::invalid_argument);
}

TEST_CASE("normalized averages: one-sided form matches the plain time average") {
  const Observable phi = Observable::default_bump(true);
  for (uint64_t seed : {3ULL, 8ULL}) {
    const PointX x = point_from_seed(seed);
    const double t = 5.0;
    const double f = normalized_average_Ft(x, phi, t, AverageSide::OneSided);
    const double avg = time_average_PT(phi, t, FlowDirection::Diagonal, x);
    CHECK(f == doctest::Approx(std::sqrt(t) * avg).epsilon(1e-9));
  }
}

TEST_CASE("normalized averages: step refinement") {
  // Smooth observable: halving the default step moves the value by far less
  // than a part in a thousand.
  for (uint64_t seed : {7ULL, 11ULL, 42ULL, 99ULL}) {
    const PointX x = point_from_seed(seed);
    const double a =
        normalized_average_Ft(x, cusp_height, 5.0, AverageSide::TwoSided, 0.05);
    const double b = normalized_average_Ft(x, cusp_height, 5.0,
                                           AverageSide::TwoSided, 0.025);
    CHECK(std::abs(a - b) / std::max(std::abs(b), 1e-12) < 1e-3);
  }

  // The narrow bump converges too, just from further away: successive
  // halvings must keep shrinking the change. (Only moderate windows: beyond
  // t around 16 the e^t orbit sensitivity amplifies the different rounding
  // of the two walks above the quadrature error, and pointwise comparisons
  // stop being meaningful even though distributions are unaffected.)
  const Observable phi = Observable::default_bump(true);
  const PointX x = point_from_seed(7);
  const double f1 = normalized_average_Ft(x, phi, 5.0, AverageSide::TwoSided, 0.05);
  const double f2 = normalized_average_Ft(x, phi, 5.0, AverageSide::TwoSided, 0.025);
  const double f3 = normalized_average_Ft(x, phi, 5.0, AverageSide::TwoSided, 0.0125);
  CHECK(std::abs(f2 - f3) < std::abs(f1 - f2));
}

TEST_CASE("variance estimate: zero function, positivity, window stability") {
  auto zero = [](const PointX&) { return 0.0; };
  const VarianceEstimate z = variance_sigma2(zero, 20.0, 2000, 5);
  CHECK(z.value == 0.0);
  CHECK(z.standard_error == 0.0);
  CHECK(z.tail_bound == 0.0);
  CHECK(z.envelope_rate == 0.0);

  const Observable phi = Observable::default_bump(true);
  const VarianceEstimate v20 = variance_sigma2(phi, 20.0, 4000, 101);
  const VarianceEstimate v40 = variance_sigma2(phi, 40.0, 4000, 99);
  CHECK(v20.standard_error > 0.0);
  // A limit of variances: nonnegative up to estimation error.
  CHECK(v20.value > -2.0 * v20.standard_error);
  CHECK(v40.value > -2.0 * v40.standard_error);
  // Integrable correlations: doubling the window is within noise.
  const double combined = std::sqrt(v20.standard_error * v20.standard_error +
                                    v40.standard_error * v40.standard_error);
  CHECK(std::abs(v40.value - v20.value) < 2.0 * combined);
  // The fitted envelope decays and leaves almost nothing outside the window.
  CHECK(v40.envelope_rate > 0.0);
  CHECK(v40.tail_bound >= 0.0);
  CHECK(v40.tail_bound < 1e-4);

  CHECK_THROWS_AS(variance_sigma2(Observable::default_bump(false), 20.0, 1000, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(variance_sigma2(phi, 19.0, 1000, 1), std::invalid_argument);
}

TEST_CASE("clt run: report shape, recomputable statistics, determinism") {
  const Observable phi = Observable::default_bump(true);
  const CltRun run = clt_run(phi, 8.0, 1200, 77, 3);
  const CltReport& r = run.report;

  REQUIRE(run.ft.size() == 1200);
  CHECK(r.samples == 1200);
  CHECK(r.t == 8.0);
  CHECK(r.variance > 0.0);
  CHECK(r.sigma2 > 0.0);
  CHECK(!r.degenerate);
  CHECK(r.ks_distance > 0.0);
  CHECK(r.ks_distance < 1.0);
  CHECK(std::abs(r.mean) <= 3.0 * r.mean_se);

  // Every reported statistic is recomputable from the raw values.
  const double n = 1200.0;
  double mean = 0.0;
  for (double v : run.ft) mean += v;
  mean /= n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0, m5 = 0.0;
  for (double v : run.ft) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
    m5 += d * d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  m5 /= n;
  CHECK(r.mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(r.variance == doctest::Approx(m2).epsilon(1e-12));
  CHECK(r.mean_se == doctest::Approx(std::sqrt(m2 / n)).epsilon(1e-12));
  CHECK(r.cum3 == doctest::Approx(m3).epsilon(1e-12));
  CHECK(r.cum4 == doctest::Approx(m4 - 3.0 * m2 * m2).epsilon(1e-12));
  CHECK(r.cum5 == doctest::Approx(m5 - 10.0 * m3 * m2).epsilon(1e-12));
  CHECK(r.cum3_se > 0.0);
  CHECK(r.cum4_se > 0.0);
  CHECK(r.cum5_se > 0.0);

  std::vector<double> sorted = run.ft;
  std::sort(sorted.begin(), sorted.end());
  const double sigma = std::sqrt(r.sigma2);
  double d_stat = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double cdf = 0.5 * std::erfc(-sorted[i] / (sigma * std::sqrt(2.0)));
    d_stat = std::max(d_stat, cdf - static_cast<double>(i) / n);
    d_stat = std::max(d_stat, static_cast<double>(i + 1) / n - cdf);
  }
  CHECK(r.ks_distance == doctest::Approx(d_stat).epsilon(1e-12));

  // Pass flags restate the bands.
  CHECK(r.mean_pass == (std::abs(r.mean) <= 3.0 * r.mean_se));
  CHECK(r.cum3_pass == (std::abs(r.cum3) <= 3.0 * r.cum3_se));
  CHECK(r.ks_pass == (r.ks_distance < 0.03));

  // The empirical variance has settled onto the limit variance.
  const double band =
      std::sqrt(r.sigma2_se * r.sigma2_se + 2.0 * m2 * m2 / n);
  CHECK(std::abs(r.variance - r.sigma2) < 4.0 * band);

  // Byte-identical reruns, any worker count.
  const CltRun again = clt_run(phi, 8.0, 1200, 77, 1);
  CHECK(again.ft == run.ft);
  CHECK(again.report.ks_distance == r.ks_distance);
  CHECK(again.report.cum4 == r.cum4);
  CHECK(again.report.sigma2 == r.sigma2);

  CHECK_THROWS_AS(clt_run(phi, 8.0, 999, 1), std::invalid_argument);
  CHECK_THROWS_AS(clt_run(phi, 0.0, 1000, 1), std::domain_error);
  CHECK_THROWS_AS(clt_run(phi, 401.0, 1000, 1), std::domain_error);
}

TEST_CASE("clt run: identically zero observable degenerates cleanly") {
  auto zero = [](const PointX&) { return 0.0; };
  const CltRun run = clt_run(zero, 5.0, 1000, 9);
  const CltReport& r = run.report;
  for (double v : run.ft) CHECK(v == 0.0);
  CHECK(r.degenerate);
  CHECK(r.ks_distance == 1.0);
  CHECK(!r.ks_pass);
  CHECK(r.mean == 0.0);
  CHECK(r.variance == 0.0);
  CHECK(r.cum3 == 0.0);
  CHECK(r.cum4 == 0.0);
  CHECK(r.cum5 == 0.0);
  CHECK(r.sigma2 == 0.0);
}

TEST_CASE("csv emitters") {
  CHECK(ft_samples_csv({0.5, -0.25}) == "index,ft\n0,0.5\n1,-0.25\n");
  CHECK(ft_samples_csv({}) == "index,ft\n");

  const std::string hist = ft_histogram_csv({0.0, 1.0, -1.0, 5.0}, 1.0);
  // Header plus 64 bins; the out-of-range value is dropped.
  CHECK(std::count(hist.begin(), hist.end(), '\n') == 65);
  CHECK(hist.rfind("bin_lo,bin_hi,count\n", 0) == 0);
  uint64_t total = 0;
  std::size_t pos = hist.find('\n') + 1;
  while (pos < hist.size()) {
    const std::size_t last_comma = hist.rfind(',', hist.find('\n', pos));
    total += std::stoull(hist.substr(last_comma + 1));
    pos = hist.find('\n', pos) + 1;
  }
  CHECK(total == 3);
  CHECK(hist.find("\n-4,") != std::string::npos);

  CHECK_THROWS_AS(ft_histogram_csv({1.0}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(ft_histogram_csv({1.0}, -2.0), std::invalid_argument);
}

TEST_CASE("json serialization of reports") {
  CltReport rep;
  rep.t = 50.0;
  rep.samples = 10000;
  rep.ks_distance = 0.015;
  rep.degenerate = false;
  rep.ks_pass = true;
  nlohmann::json j = rep;
  CHECK(j["t"] == 50.0);
  CHECK(j["samples"] == 10000);
  CHECK(j["ks_distance"] == 0.015);
  CHECK(j["ks_pass"] == true);
  CHECK(j.contains("cum5_se"));

  const FolnerReport fr = growth_and_folner_check({10.0, 100.0}, 1.0);
  nlohmann::json fj = fr;
  CHECK(fj["growths"].size() == 2);
  CHECK(fj["overlaps"][0] == 0.95);

  ClusteredCumulantReport cr;
  cr.cumulant = -0.003;
  cr.r = 2;
  nlohmann::json cj = cr;
  CHECK(cj["cumulant"] == -0.003);
  CHECK(cj["r"] == 2);
}

TEST_CASE("window growth and overlap calculus") {
  const FolnerReport rep = growth_and_folner_check({10.0, 25.0, 50.0, 100.0}, 1.0);
  REQUIRE(rep.ts.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(rep.growths[i] == std::log(2.0 * rep.ts[i]) / rep.ts[i]);
    CHECK(rep.overlaps[i] == (2.0 * rep.ts[i] - 1.0) / (2.0 * rep.ts[i]));
  }
  CHECK(rep.overlaps[0] == 0.95);
  CHECK(rep.growths[3] == doctest::Approx(0.052983173665).epsilon(1e-9));
  CHECK(rep.growth_decreasing);
  CHECK(rep.overlap_increasing);

  // log(2t)/t only decreases past t = e/2; the flag reports what is there.
  CHECK_FALSE(growth_and_folner_check({1.0, 1.2}, 1.0).growth_decreasing);
  // Zero shift: full overlap everywhere, so no strict increase.
  const FolnerReport zs = growth_and_folner_check({10.0, 20.0}, 0.0);
  CHECK(zs.overlaps[0] == 1.0);
  CHECK_FALSE(zs.overlap_increasing);

  CHECK_THROWS_AS(growth_and_folner_check({}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(growth_and_folner_check({10.0, 10.0}, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(growth_and_folner_check({-1.0, 10.0}, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(growth_and_folner_check({10.0},
                                          std::numeric_limits<double>::infinity()),
                  std::invalid_argument);
}

TEST_CASE("exponential envelope fit") {
  std::vector<double> xs{0.0, 1.0, 2.0, 3.0};
  std::vector<double> ys, flipped;
  for (double x : xs) {
    ys.push_back(3.0 * std::exp(-0.7 * x));
    flipped.push_back((static_cast<int>(x) % 2 == 0 ? 1.0 : -1.0) * ys.back());
  }
  const DecayFit fit = fit_exponential_envelope(xs, ys);
  CHECK(fit.amplitude == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(fit.rate == doctest::Approx(0.7).epsilon(1e-9));
  // Only magnitudes matter.
  const DecayFit fit2 = fit_exponential_envelope(xs, flipped);
  CHECK(fit2.rate == doctest::Approx(0.7).epsilon(1e-9));

  CHECK_THROWS_AS(fit_exponential_envelope({1.0}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(fit_exponential_envelope({1.0, 2.0}, {1.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(fit_exponential_envelope({1.0, 1.0}, {1.0, 2.0}),
                  std::invalid_argument);
}

TEST_CASE("clustered cumulants: coincident pair reproduces the variance") {
  const Observable phi = Observable::default_bump(true);
  const GroupElement e = GroupElement::identity(2);
  const GroupTuple h({e, e});
  const ClusteredCumulantReport rep =
      clustered_cumulant_check(h, Partition::one_block(2), 0.1, 0.0, phi,
                               100000, 32);
  CHECK(rep.r == 2);
  CHECK(rep.alpha == 0.1);
  CHECK(rep.beta == 0.0);

  // Independent estimate of Var(phi) straight from the sampler.
  const MeanSE sq = mc_mean(100000, derive_seed(55, 1),
                            [&phi](std::mt19937_64& eng) {
                              const double p = evaluate(phi, sample_mu(eng));
                              return p * p;
                            });
  const MeanSE m1 = mc_mean(100000, derive_seed(55, 2),
                            [&phi](std::mt19937_64& eng) {
                              return evaluate(phi, sample_mu(eng));
                            });
  const double oracle = sq.mean - m1.mean * m1.mean;
  CHECK(std::abs(rep.cumulant - oracle) <
        3.0 * (rep.standard_error + sq.se + 2.0 * std::abs(m1.mean) * m1.se));
  CHECK(rep.cumulant > 0.01);
}

TEST_CASE("clustered cumulants: separation kills the pair cumulant") {
  const Observable phi = Observable::default_bump(true);
  const GroupElement e = GroupElement::identity(2);
  std::vector<double> betas{1.0, 2.0, 4.0};
  std::vector<double> cums, ses;
  for (double beta : betas) {
    // Separation is measured in the tuple metric, where the diagonal flow
    // covers sqrt(2) less ground than its time parameter.
    const GroupElement g =
        flow_element(FlowDirection::Diagonal, std::sqrt(2.0) * beta);
    const GroupTuple h({e, g});
    CHECK(riemannian_distance(e, g) == doctest::Approx(beta).epsilon(1e-9));
    const ClusteredCumulantReport rep = clustered_cumulant_check(
        h, Partition::singletons(2), 0.1, 0.9 * beta, phi, 250000, 31);
    cums.push_back(rep.cumulant);
    ses.push_back(rep.standard_error);
  }
  CHECK(std::abs(cums[0]) > std::abs(cums[1]));
  CHECK(std::abs(cums[1]) > std::abs(cums[2]));
  CHECK(std::abs(cums[0]) > 10.0 * ses[0]);
  const DecayFit fit = fit_exponential_envelope(betas, cums);
  CHECK(fit.rate > 0.0);
}

TEST_CASE("clustered cumulants: a far singleton block suppresses cum3") {
  const Observable phi = Observable::default_bump(true);
  const GroupElement e = GroupElement::identity(2);
  const Partition q(3, {{0, 1}, {2}});
  double far_mag = 0.0, near_mag = 0.0;
  for (double beta : {1.0, 4.0}) {
    const GroupElement g1 = flow_element(FlowDirection::Diagonal, 0.3);
    const GroupElement g2 = flow_element(
        FlowDirection::Diagonal, 0.3 + std::sqrt(2.0) * beta);
    const GroupTuple h({e, g1, g2});
    const ClusteredCumulantReport rep =
        clustered_cumulant_check(h, q, 0.5, 0.9 * beta, phi, 200000, 33);
    (beta == 1.0 ? near_mag : far_mag) = std::abs(rep.cumulant);
  }
  CHECK(far_mag < near_mag);
}

TEST_CASE("clustered cumulants: input validation") {
  const Observable phi = Observable::default_bump(true);
  const GroupElement e = GroupElement::identity(2);

  const GroupTuple five({e, e, e, e, e});
  CHECK_THROWS_AS(clustered_cumulant_check(five, Partition::one_block(5), 0.1,
                                           0.0, phi, 1000, 1),
                  std::invalid_argument);

  // Tuple not in the declared cell: the gap is only ~0.7.
  const GroupTuple pair({e, flow_element(FlowDirection::Diagonal, 1.0)});
  CHECK_THROWS_AS(clustered_cumulant_check(pair, Partition::singletons(2), 0.1,
                                           5.0, phi, 1000, 1),
                  std::invalid_argument);

  CHECK_THROWS_AS(clustered_cumulant_check(pair, Partition::singletons(3), 0.1,
                                           0.5, phi, 1000, 1),
                  std::invalid_argument);
}
