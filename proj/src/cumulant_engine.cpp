#include "mixlab/cumulant_engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mixlab {

namespace {

constexpr int kMaxOrder = 10;  // Bell(10) = 115975 partitions, still cheap

double factorial(int n) {
  double f = 1.0;
  for (int k = 2; k <= n; ++k) f *= k;
  return f;
}

// max in-block diameter and min cross-block gap in one sweep
struct BlockGeometry {
  double diameter = 0.0;
  double gap = std::numeric_limits<double>::infinity();
};

BlockGeometry block_geometry(const GroupTuple& h, const Partition& Q) {
  BlockGeometry geo;
  const auto& blocks = Q.blocks;
  for (std::size_t a = 0; a < blocks.size(); ++a) {
    for (int i : blocks[a])
      for (int j : blocks[a]) {
        if (i >= j) continue;
        geo.diameter =
            std::max(geo.diameter, riemannian_distance(h.gs[i], h.gs[j]));
      }
    for (std::size_t b = a + 1; b < blocks.size(); ++b)
      for (int i : blocks[a])
        for (int j : blocks[b])
          geo.gap = std::min(geo.gap, riemannian_distance(h.gs[i], h.gs[j]));
  }
  return geo;
}

}  // namespace

Partition::Partition(int r_, std::vector<std::vector<int>> blocks_)
    : r(r_), blocks(std::move(blocks_)) {
  if (r < 1) throw std::invalid_argument("Partition: r must be >= 1");
  std::vector<bool> seen(r, false);
  for (auto& block : blocks) {
    if (block.empty()) throw std::invalid_argument("Partition: empty block");
    std::sort(block.begin(), block.end());
    for (int i : block) {
      if (i < 0 || i >= r || seen[i])
        throw std::invalid_argument("Partition: blocks must partition 0..r-1");
      seen[i] = true;
    }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end())
    throw std::invalid_argument("Partition: blocks must cover 0..r-1");
  std::sort(blocks.begin(), blocks.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
}

Partition Partition::singletons(int r) {
  std::vector<std::vector<int>> blocks(r);
  for (int i = 0; i < r; ++i) blocks[i] = {i};
  return Partition(r, std::move(blocks));
}

Partition Partition::one_block(int r) {
  std::vector<int> all(r);
  std::iota(all.begin(), all.end(), 0);
  return Partition(r, {all});
}

bool operator==(const Partition& a, const Partition& b) {
  return a.r == b.r && a.blocks == b.blocks;
}

void to_json(nlohmann::json& j, const Partition& p) {
  j = nlohmann::json{{"r", p.r}, {"blocks", p.blocks}};
}

MomentFunctional::MomentFunctional(int r_, std::vector<double> vals_)
    : r(r_), vals(std::move(vals_)) {
  if (r < 1 || r > kMaxOrder)
    throw std::invalid_argument("MomentFunctional: order out of range");
  if (vals.size() != (std::size_t{1} << r))
    throw std::invalid_argument("MomentFunctional: needs one value per subset");
  if (vals[0] != 1.0)
    throw std::invalid_argument("MomentFunctional: empty set must map to 1");
  for (double v : vals)
    if (!std::isfinite(v))
      throw std::invalid_argument("MomentFunctional: values must be finite");
}

std::vector<Partition> enumerate_partitions(int r) {
  if (r < 1) throw std::invalid_argument("enumerate_partitions: r must be >= 1");
  if (r > kMaxOrder)
    throw std::length_error("enumerate_partitions: r > 10 is not supported");
  std::vector<Partition> out;
  std::vector<int> rgs(r, 0);
  while (true) {
    int nblocks = 1 + *std::max_element(rgs.begin(), rgs.end());
    std::vector<std::vector<int>> blocks(nblocks);
    for (int i = 0; i < r; ++i) blocks[rgs[i]].push_back(i);
    out.emplace_back(r, std::move(blocks));

    // next restricted growth string
    int i = r - 1;
    for (; i > 0; --i) {
      int cap = 1 + *std::max_element(rgs.begin(), rgs.begin() + i);
      if (rgs[i] < cap) break;
    }
    if (i == 0) break;
    ++rgs[i];
    std::fill(rgs.begin() + i + 1, rgs.end(), 0);
  }
  return out;
}

double cumulant_from_moments(const MomentFunctional& m, int r) {
  if (m.r != r)
    throw std::invalid_argument("cumulant_from_moments: order mismatch");
  double total = 0.0;
  for (const Partition& p : enumerate_partitions(r)) {
    double prod = 1.0;
    for (const auto& block : p.blocks) {
      std::uint32_t mask = 0;
      for (int i : block) mask |= 1u << i;
      prod *= m(mask);
    }
    const double sign = (p.size() % 2 == 1) ? 1.0 : -1.0;
    total += sign * factorial(static_cast<int>(p.size()) - 1) * prod;
  }
  return total;
}

MomentFunctional moments_from_cumulants(const std::vector<double>& c, int r) {
  if (r < 1 || r > kMaxOrder)
    throw std::invalid_argument("moments_from_cumulants: order out of range");
  if (c.size() != (std::size_t{1} << r))
    throw std::invalid_argument(
        "moments_from_cumulants: needs one value per subset");

  std::vector<double> vals(std::size_t{1} << r, 0.0);
  vals[0] = 1.0;
  for (std::uint32_t s = 1; s < (1u << r); ++s) {
    std::vector<int> bits;
    for (int i = 0; i < r; ++i)
      if (s & (1u << i)) bits.push_back(i);
    double total = 0.0;
    for (const Partition& p : enumerate_partitions(static_cast<int>(bits.size()))) {
      double prod = 1.0;
      for (const auto& block : p.blocks) {
        std::uint32_t mask = 0;
        for (int i : block) mask |= 1u << bits[i];
        prod *= c[mask];
      }
      total += prod;
    }
    vals[s] = total;
  }
  return MomentFunctional(r, std::move(vals));
}

double conditional_cumulant(const MomentFunctional& m, const Partition& Q,
                            int r) {
  if (m.r != r || Q.r != r)
    throw std::invalid_argument("conditional_cumulant: order mismatch");
  std::vector<std::uint32_t> qmasks;
  for (const auto& block : Q.blocks) {
    std::uint32_t mask = 0;
    for (int i : block) mask |= 1u << i;
    qmasks.push_back(mask);
  }
  double total = 0.0;
  for (const Partition& p : enumerate_partitions(r)) {
    double prod = 1.0;
    for (const auto& block : p.blocks) {
      std::uint32_t mask = 0;
      for (int i : block) mask |= 1u << i;
      for (std::uint32_t q : qmasks) prod *= m(mask & q);
    }
    const double sign = (p.size() % 2 == 1) ? 1.0 : -1.0;
    total += sign * factorial(static_cast<int>(p.size()) - 1) * prod;
  }
  return total;
}

double empirical_cumulant(const std::vector<double>& x, int order) {
  if (x.empty()) throw std::invalid_argument("empirical_cumulant: no samples");
  if (order < 1 || order > kMaxOrder)
    throw std::invalid_argument("empirical_cumulant: order out of range");
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  if (order == 1) return mean;

  std::vector<double> central(order + 1, 0.0);
  for (double v : x) {
    const double d = v - mean;
    double pw = d;
    for (int k = 2; k <= order; ++k) {
      pw *= d;
      central[k] += pw;
    }
  }
  for (int k = 2; k <= order; ++k) central[k] /= n;
  central[0] = 1.0;
  central[1] = 0.0;

  std::vector<double> vals(std::size_t{1} << order);
  for (std::uint32_t s = 0; s < (1u << order); ++s)
    vals[s] = central[std::popcount(s)];
  return cumulant_from_moments(MomentFunctional(order, std::move(vals)), order);
}

TupleClass classify_tuple(const GroupTuple& h, const Partition& Q,
                          double alpha, double beta) {
  if (Q.r != h.size())
    throw std::invalid_argument("classify_tuple: partition order mismatch");
  const BlockGeometry geo = block_geometry(h, Q);
  TupleClass out;
  out.dq_max = geo.diameter;
  out.dq_min = geo.gap;
  out.member = (geo.diameter <= alpha) && (geo.gap > beta);
  return out;
}

Partition coarsen(const GroupTuple& h, const Partition& Q, double alpha,
                  double beta) {
  if (Q.r != h.size())
    throw std::invalid_argument("coarsen: partition order mismatch");
  if (!(alpha <= beta)) throw std::invalid_argument("coarsen: needs alpha <= beta");
  const BlockGeometry geo = block_geometry(h, Q);
  if (geo.diameter > alpha)
    throw std::invalid_argument("coarsen: in-block diameter exceeds alpha");
  if (!(geo.gap <= beta))
    throw std::invalid_argument("coarsen: no block gap within beta");

  const auto& blocks = Q.blocks;
  const std::size_t nb = blocks.size();
  std::vector<std::size_t> parent(nb);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };

  for (std::size_t a = 0; a < nb; ++a)
    for (std::size_t b = a + 1; b < nb; ++b) {
      double gap = std::numeric_limits<double>::infinity();
      for (int i : blocks[a])
        for (int j : blocks[b])
          gap = std::min(gap, riemannian_distance(h.gs[i], h.gs[j]));
      if (gap <= beta) parent[find(a)] = find(b);
    }

  std::vector<std::vector<int>> merged(nb);
  for (std::size_t a = 0; a < nb; ++a) {
    auto& dst = merged[find(a)];
    dst.insert(dst.end(), blocks[a].begin(), blocks[a].end());
  }
  merged.erase(std::remove_if(merged.begin(), merged.end(),
                              [](const auto& b) { return b.empty(); }),
               merged.end());
  Partition out(Q.r, std::move(merged));

  // Transitive merging is only guaranteed to respect the 3*beta budget for
  // small tuples; long merge chains could overshoot, so re-check here.
  const BlockGeometry after = block_geometry(h, out);
  if (after.diameter > 3.0 * beta)
    throw std::logic_error("coarsen: merged diameter exceeded 3*beta");
  return out;
}

DecompositionCell decompose_cover(const GroupTuple& h,
                                  const std::vector<double>& ladder) {
  const int r = h.size();
  if (static_cast<int>(ladder.size()) != r + 1)
    throw std::invalid_argument("decompose_cover: ladder needs r + 1 scales");
  if (ladder[0] != 0.0)
    throw std::invalid_argument("decompose_cover: ladder must start at 0");
  if (!(ladder[1] > 0.0))
    throw std::invalid_argument("decompose_cover: beta_1 must be positive");
  for (int j = 1; j < r; ++j)
    if (!(ladder[j + 1] >= 3.0 * ladder[j]))
      throw std::invalid_argument("decompose_cover: needs beta_{j+1} >= 3 beta_j");

  Partition Q = Partition::singletons(r);
  for (int j = 0;; ++j) {
    if (Q.trivial()) return DecompositionCell{true, std::move(Q), -1};
    const TupleClass cls = classify_tuple(h, Q, 3.0 * ladder[j], ladder[j + 1]);
    if (cls.dq_min > ladder[j + 1])
      return DecompositionCell{false, std::move(Q), j};
    Q = coarsen(h, Q, 3.0 * ladder[j], ladder[j + 1]);
  }
}

BetaLadder beta_ladder(double theta, double delta_r, double sigma_r, int r) {
  if (!(theta > 0.0) || !(delta_r > 0.0) || !(sigma_r > 0.0))
    throw std::invalid_argument("beta_ladder: parameters must be positive");
  if (r < 1) throw std::invalid_argument("beta_ladder: r must be >= 1");
  BetaLadder out;
  out.beta.assign(r + 1, 0.0);
  for (int j = 0; j < r; ++j)
    out.beta[j + 1] = std::max(3.0 * out.beta[j],
                               (theta + 3.0 * sigma_r * out.beta[j]) / delta_r);
  for (int j = 1; j < r; ++j)
    if (!(out.beta[j + 1] >= 3.0 * out.beta[j]) ||
        !(out.beta[j] < out.beta[j + 1]))
      throw std::logic_error("beta_ladder: recursion broke the scale order");
  out.c_r = out.beta[r] / theta;
  return out;
}

void to_json(nlohmann::json& j, const BetaLadder& ladder) {
  j = nlohmann::json{{"beta", ladder.beta}, {"c_r", ladder.c_r}};
}

ScalePair pigeonhole_scales(const std::vector<double>& weights, double q,
                            double theta) {
  const int r = static_cast<int>(weights.size());
  if (r < 2) throw std::invalid_argument("pigeonhole_scales: needs r >= 2");
  if (!(q > 1.0)) throw std::invalid_argument("pigeonhole_scales: q must be > 1");
  if (std::abs(weights[0] - 1.0) > 1e-12)
    throw std::invalid_argument("pigeonhole_scales: w_1 must equal 1");
  for (int i = 0; i < r; ++i) {
    if (!(weights[i] > 0.0))
      throw std::invalid_argument("pigeonhole_scales: weights must be positive");
    if (i > 0 && weights[i] > weights[i - 1])
      throw std::invalid_argument("pigeonhole_scales: weights must be sorted");
  }
  if (weights[r - 1] > 1.0 / q)
    throw std::invalid_argument("pigeonhole_scales: needs w_r <= 1/q");
  if (!(theta > 0.0) || !(theta < 1.0 / (r - 1)))
    throw std::invalid_argument("pigeonhole_scales: needs 0 < theta < 1/(r-1)");

  for (int i = 0; i + 1 < r; ++i) {
    const double hi = std::pow(q, -theta * i);
    const double lo = std::pow(q, -theta * (i + 1));
    for (int p = 1; p < r; ++p)
      if (weights[p] <= lo && hi <= weights[p - 1]) return ScalePair{p, i};
  }
  throw std::logic_error("pigeonhole_scales: no bracketed pair found");
}

ExponentResult derive_exponent(const ExponentParams& params) {
  if (!(params.tau > 0.0) || !(params.a > 0.0) || !(params.b > 0.0))
    throw std::invalid_argument("derive_exponent: parameters must be positive");
  if (params.r < 2) throw std::invalid_argument("derive_exponent: r must be >= 2");

  // With T = q^((i+1/2) theta) the three decay exponents are theta/2,
  // tau/2 - (a/2)(i+1/2) theta, and b theta/4. The middle one is worst at
  // i = r-2, so the objective is min(mu theta, tau/2 - c theta) with
  const double mu = std::min(0.5, params.b / 4.0);
  const double c = params.a * (2.0 * params.r - 3.0) / 4.0;
  const double cap = 1.0 / (params.r - 1);
  const double cross = (params.tau / 2.0) / (mu + c);

  ExponentResult out;
  // theta ranges over the open interval (0, cap); when the crossing sits
  // outside, the supremum at the right end is reported.
  out.theta_star = std::min(cross, cap);
  out.tau_prime = mu * out.theta_star;

  char rule[64];
  std::snprintf(rule, sizeof rule, "T = q^((i + 1/2) * %.6g)", out.theta_star);
  out.t_rule = rule;
  return out;
}

std::vector<double> exponent_chain(double delta, double a, double b,
                                   int r_max) {
  if (!(delta > 0.0))
    throw std::invalid_argument("exponent_chain: delta must be positive");
  if (r_max < 2) throw std::invalid_argument("exponent_chain: r_max must be >= 2");
  std::vector<double> taus{delta};
  for (int r = 3; r <= r_max; ++r)
    taus.push_back(derive_exponent({taus.back(), a, b, r}).tau_prime);
  return taus;
}

}  // namespace mixlab
