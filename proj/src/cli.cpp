#include "mixlab/cli.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "mixlab/clt_experiment.hpp"
#include "mixlab/cumulant_engine.hpp"
#include "mixlab/group_core.hpp"
#include "mixlab/harish.hpp"
#include "mixlab/homspace.hpp"
#include "mixlab/lattice_lab.hpp"
#include "mixlab/rng.hpp"

namespace mixlab {
namespace {

struct SubSpec {
  bool needs_seed;  // draws random samples, so a seed must be supplied
  const char* default_format;
  std::vector<std::pair<const char*, const char*>> defaults;
};

const std::map<std::string, SubSpec>& subcommands() {
  static const std::map<std::string, SubSpec> table = {
      {"xi", {false, "csv", {{"t-max", "1000"}}}},
      {"count", {false, "csv", {{"t-max", "40"}}}},
      {"wellround",
       {true,
        "json",
        {{"t", "10"}, {"rho", "0.01"}, {"delta", "1.05"}, {"samples", "64"}}}},
      {"correlate",
       {true, "json", {{"t", "1"}, {"samples", "100000"}, {"workers", "1"}}}},
      {"configs",
       {true,
        "json",
        {{"trials", "20"}, {"width", "10"}, {"eps", "0.5"}, {"radius", "80"}}}},
      // pseudorandom but reproducible by default, so no seed is demanded
      {"cumulant-selftest", {false, "json", {{"seed", "1"}}}},
      {"clt",
       {true, "json", {{"t", "50"}, {"n", "10000"}, {"workers", "1"}}}},
      {"exponents",
       {false,
        "csv",
        {{"delta", "0.5"}, {"a", "1"}, {"b", "1"}, {"r-max", "6"}}}},
  };
  return table;
}

std::string usage_line() {
  std::string u =
      "usage: mixlab <subcommand> [--key=value ...] [--config=file]\n"
      "  subcommands:";
  for (const auto& [name, spec] : subcommands()) {
    u += ' ';
    u += name;
  }
  return u;
}

std::string trimmed(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// ---- typed access to the resolved parameters -------------------------------

double as_number(const RunConfig& cfg, const char* key) {
  const std::string& s = cfg.params.at(key);
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v))
    throw std::invalid_argument(std::string(key) + " is not a finite number: '" +
                                s + "'");
  return v;
}

std::uint64_t as_uint(const RunConfig& cfg, const char* key) {
  const std::string& s = cfg.params.at(key);
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw std::invalid_argument(std::string(key) +
                                " is not a non-negative integer: '" + s + "'");
  return v;
}

long as_int(const RunConfig& cfg, const char* key, long lo, long hi) {
  const std::string& s = cfg.params.at(key);
  long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || v < lo || v > hi)
    throw std::invalid_argument(std::string(key) + " must be an integer in [" +
                                std::to_string(lo) + ", " + std::to_string(hi) +
                                "], got '" + s + "'");
  return v;
}

unsigned as_workers(const RunConfig& cfg) {
  return static_cast<unsigned>(as_int(cfg, "workers", 1, 256));
}

// ---- report envelopes -------------------------------------------------------

nlohmann::json config_echo(const RunConfig& cfg) {
  return nlohmann::json{
      {"subcommand", cfg.subcommand},
      {"format", cfg.format},
      {"out", cfg.output_path.empty() ? "-" : cfg.output_path},
      {"params", nlohmann::json(cfg.params)}};
}

std::string json_report(const RunConfig& cfg, nlohmann::json body) {
  body["schema_version"] = "1";
  body["config"] = config_echo(cfg);
  return body.dump(2) + "\n";
}

// CSV reports open with comment lines carrying the same provenance the JSON
// envelope does, then a plain header row.
std::string csv_preamble(const RunConfig& cfg) {
  std::string s = "# schema-version: 1\n# config: subcommand=" +
                  cfg.subcommand + " format=" + cfg.format + " out=" +
                  (cfg.output_path.empty() ? "-" : cfg.output_path);
  for (const auto& [k, v] : cfg.params) s += " " + k + "=" + v;
  s += '\n';
  return s;
}

std::string gstr(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---- subcommands ------------------------------------------------------------

// Spherical function table on a 1-2-5 ladder, with the t^0.9-damped column
// alongside so decay plots need no postprocessing.
int run_xi(const RunConfig& cfg, std::string& out) {
  const double tmax = as_number(cfg, "t-max");
  if (tmax < 1.0) throw std::invalid_argument("t-max must be at least 1");
  std::vector<double> grid;
  for (double dec = 1.0; dec <= tmax * (1.0 + 1e-12); dec *= 10.0)
    for (double m : {1.0, 2.0, 5.0})
      if (dec * m <= tmax * (1.0 + 1e-12)) grid.push_back(dec * m);
  if (grid.empty() || grid.back() < tmax * (1.0 - 1e-12))
    grid.push_back(tmax);

  if (cfg.format == "csv") {
    out = csv_preamble(cfg) + "t,xi,xi_damped\n";
    for (double t : grid) {
      const double x = xi_sl2(t);
      out += gstr(t) + "," + gstr(x) + "," + gstr(x * std::pow(t, 0.9)) + "\n";
    }
  } else {
    nlohmann::json rows = nlohmann::json::array();
    for (double t : grid) {
      const double x = xi_sl2(t);
      rows.push_back({{"t", t}, {"xi", x}, {"xi_damped", x * std::pow(t, 0.9)}});
    }
    out = json_report(cfg, {{"xi", rows}});
  }
  return 0;
}

int run_count(const RunConfig& cfg, std::string& out) {
  const double tmax = as_number(cfg, "t-max");
  if (tmax < 10.0 || tmax > 80.0)
    throw std::invalid_argument("t-max must lie in [10, 80]");
  std::vector<double> grid;
  for (double t = 10.0; t <= tmax * (1.0 + 1e-12); t *= 2.0) grid.push_back(t);
  const CountReport rep = count_ratio_experiment(grid);
  if (cfg.format == "csv")
    out = csv_preamble(cfg) + count_report_csv(rep);
  else
    out = json_report(cfg, {{"count", rep}});
  return 0;
}

int run_wellround(const RunConfig& cfg, std::string& out) {
  const double t = as_number(cfg, "t");
  const double rho = as_number(cfg, "rho");
  const double delta = as_number(cfg, "delta");
  if (t <= 0.0) throw std::invalid_argument("t must be positive");
  if (rho <= 0.0) throw std::invalid_argument("rho must be positive");
  if (delta <= 1.0) throw std::invalid_argument("delta must exceed 1");
  const int samples = static_cast<int>(as_int(cfg, "samples", 1, 1000000));
  const WellRoundedReport rep =
      well_rounded_check(t, rho, delta, samples, as_uint(cfg, "seed"));
  if (cfg.format == "csv") {
    out = csv_preamble(cfg) + "pass,m_ball,m_plus,m_minus,factor,pairs\n" +
          (rep.pass ? "1" : "0") + "," + gstr(rep.m_ball) + "," +
          gstr(rep.m_plus) + "," + gstr(rep.m_minus) + "," + gstr(rep.factor) +
          "," + std::to_string(rep.pairs) + "\n";
  } else {
    out = json_report(cfg, {{"wellround",
                             {{"pass", rep.pass},
                              {"m_ball", rep.m_ball},
                              {"m_plus", rep.m_plus},
                              {"m_minus", rep.m_minus},
                              {"factor", rep.factor},
                              {"pairs", rep.pairs}}}});
  }
  return rep.pass ? 0 : 1;
}

int run_correlate(const RunConfig& cfg, std::string& out) {
  const double t = as_number(cfg, "t");
  if (t < 0.0) throw std::invalid_argument("t must be non-negative");
  const std::uint64_t samples = as_uint(cfg, "samples");
  if (samples == 0) throw std::invalid_argument("samples must be positive");
  const std::vector<GroupElement> gs = {GroupElement::identity(2),
                                        flow_element(FlowDirection::Diagonal, t)};
  const std::vector<Observable> phis = {Observable::default_bump(true),
                                        Observable::default_bump(true)};
  const CorrelationEstimate est =
      correlation(gs, phis, samples, as_uint(cfg, "seed"), as_workers(cfg));
  if (cfg.format == "csv") {
    out = csv_preamble(cfg) + "value,standard_error,samples\n" +
          gstr(est.value) + "," + gstr(est.standard_error) + "," +
          std::to_string(est.samples) + "\n";
  } else {
    out = json_report(cfg, {{"correlation", est}});
  }
  return 0;
}

// Random pair configurations at a requested separation: each trial draws a
// fresh target of width in [width, width+1) and reports whether the lattice
// search aligned it.
int run_configs(const RunConfig& cfg, std::string& out) {
  const long trials = as_int(cfg, "trials", 1, 10000);
  const double width = as_number(cfg, "width");
  const double eps = as_number(cfg, "eps");
  const double radius = as_number(cfg, "radius");
  if (width <= 0.0) throw std::invalid_argument("width must be positive");
  if (eps <= 0.0) throw std::invalid_argument("eps must be positive");
  if (radius <= 0.0 || radius > 80.0)
    throw std::invalid_argument("radius must lie in (0, 80]");
  const std::uint64_t seed = as_uint(cfg, "seed");

  nlohmann::json rows = nlohmann::json::array();
  std::string csv_rows;
  int found = 0;
  for (long i = 0; i < trials; ++i) {
    auto eng = make_engine(seed, static_cast<std::uint64_t>(i) + 1);
    std::uniform_real_distribution<double> ang(0.0, 2.0 * M_PI);
    std::uniform_real_distribution<double> jitter(0.0, 1.0);
    const double w = width + jitter(eng);
    const double lam = w * std::sqrt(2.0);
    const double t1 = ang(eng), t2 = ang(eng);
    Eigen::Matrix2d k1, k2, a;
    k1 << std::cos(t1), -std::sin(t1), std::sin(t1), std::cos(t1);
    k2 << std::cos(t2), -std::sin(t2), std::sin(t2), std::cos(t2);
    a << std::exp(lam / 2.0), 0.0, 0.0, std::exp(-lam / 2.0);
    const GroupTuple target({GroupElement(Eigen::Matrix2d::Identity()),
                             GroupElement(k1 * a * k2)});
    const ConfigurationResult res =
        approximate_configuration(target, eps, radius);
    found += res.found ? 1 : 0;
    if (cfg.format == "csv") {
      csv_rows += std::to_string(i) + "," + gstr(w) + "," +
                  (res.found ? "1" : "0") + "," + gstr(res.max_distance) + "," +
                  std::to_string(res.restarts_used) + "," +
                  (res.truncated ? "1" : "0") + "\n";
    } else {
      rows.push_back({{"trial", i},
                      {"width", w},
                      {"found", res.found},
                      {"max_distance", res.max_distance},
                      {"restarts", res.restarts_used},
                      {"truncated", res.truncated}});
    }
  }
  const double fraction = static_cast<double>(found) / trials;
  if (cfg.format == "csv")
    out = csv_preamble(cfg) +
          "trial,width,found,max_distance,restarts,truncated\n" + csv_rows;
  else
    out = json_report(
        cfg, {{"configs", {{"trials", rows}, {"found_fraction", fraction}}}});
  return fraction >= 0.8 ? 0 : 1;
}

// moment functional restricted to the index subset `mask`, bits renumbered
MomentFunctional restrict_moments(const MomentFunctional& m,
                                  std::uint32_t mask) {
  std::vector<int> bits;
  for (int i = 0; i < m.r; ++i)
    if (mask & (1u << i)) bits.push_back(i);
  const int k = static_cast<int>(bits.size());
  std::vector<double> vals(std::size_t{1} << k);
  for (std::uint32_t s = 0; s < vals.size(); ++s) {
    std::uint32_t big = 0;
    for (int i = 0; i < k; ++i)
      if (s & (1u << i)) big |= 1u << bits[i];
    vals[s] = m(big);
  }
  return MomentFunctional(k, std::move(vals));
}

// Exercises the combinatorial core end to end: partition counts against the
// Bell numbers, both round trips between moments and cumulants, and the
// vanishing of conditional cumulants over every nontrivial partition.
int run_cumulant_selftest(const RunConfig& cfg, std::string& out) {
  auto eng = make_engine(as_uint(cfg, "seed"));
  std::uniform_real_distribution<double> val(-1.0, 1.0);

  const std::vector<std::size_t> bell_expected = {1, 2, 5, 15, 52, 203};
  std::vector<std::size_t> bell(6);
  bool bell_ok = true;
  for (int r = 1; r <= 6; ++r) {
    bell[r - 1] = enumerate_partitions(r).size();
    bell_ok = bell_ok && bell[r - 1] == bell_expected[r - 1];
  }

  double top_err = 0.0, back_err = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int r = 2 + rep % 5;
    std::vector<double> c(std::size_t{1} << r, 0.0);
    for (std::size_t s = 1; s < c.size(); ++s) c[s] = val(eng);
    const MomentFunctional m = moments_from_cumulants(c, r);
    top_err = std::max(
        top_err, std::abs(cumulant_from_moments(m, r) - c[(1u << r) - 1]));

    std::vector<double> mv(std::size_t{1} << r, 0.0);
    mv[0] = 1.0;
    for (std::size_t s = 1; s < mv.size(); ++s) mv[s] = val(eng);
    const MomentFunctional m2(r, mv);
    std::vector<double> extracted(std::size_t{1} << r, 0.0);
    for (std::uint32_t s = 1; s < (1u << r); ++s) {
      const MomentFunctional sub = restrict_moments(m2, s);
      extracted[s] = cumulant_from_moments(sub, sub.r);
    }
    const MomentFunctional back = moments_from_cumulants(extracted, r);
    for (std::uint32_t s = 0; s < (1u << r); ++s)
      back_err = std::max(back_err, std::abs(back(s) - m2(s)));
  }

  double cond_max = 0.0;
  for (int r = 2; r <= 5; ++r)
    for (const Partition& Q : enumerate_partitions(r)) {
      if (Q.trivial()) continue;
      for (int rep = 0; rep < 3; ++rep) {
        std::vector<double> mv(std::size_t{1} << r, 0.0);
        mv[0] = 1.0;
        for (std::size_t s = 1; s < mv.size(); ++s) mv[s] = val(eng);
        cond_max = std::max(
            cond_max,
            std::abs(conditional_cumulant(MomentFunctional(r, mv), Q, r)));
      }
    }

  const bool pass =
      bell_ok && top_err <= 1e-12 && back_err <= 1e-12 && cond_max <= 1e-12;
  if (cfg.format == "csv") {
    out = csv_preamble(cfg) +
          "pass,bell_ok,round_trip_top_err,round_trip_back_err,conditional_max\n" +
          (pass ? "1" : "0") + "," + (bell_ok ? "1" : "0") + "," +
          gstr(top_err) + "," + gstr(back_err) + "," + gstr(cond_max) + "\n";
  } else {
    out = json_report(cfg, {{"selftest",
                             {{"pass", pass},
                              {"bell", bell},
                              {"bell_ok", bell_ok},
                              {"round_trip_top_err", top_err},
                              {"round_trip_back_err", back_err},
                              {"conditional_max", cond_max}}}});
  }
  return pass ? 0 : 1;
}

// Full windowed-average experiment on the default bump. JSON carries the
// report; CSV carries the raw samples so distributions can be plotted.
int run_clt(const RunConfig& cfg, std::string& out) {
  const double t = as_number(cfg, "t");
  if (!(t > 0.0 && t <= 400.0))
    throw std::invalid_argument("t must lie in (0, 400]");
  const std::uint64_t n = as_uint(cfg, "n");
  if (n < 1000)
    throw std::invalid_argument(
        "n must be at least 1000; smaller runs say nothing about the limit");
  const CltRun run = clt_run(Observable::default_bump(true), t, n,
                             as_uint(cfg, "seed"), as_workers(cfg));
  if (cfg.format == "csv")
    out = csv_preamble(cfg) + ft_samples_csv(run.ft);
  else
    out = json_report(cfg, {{"clt", run.report}});
  const CltReport& rep = run.report;
  const bool ok = !rep.degenerate && rep.mean_pass && rep.cum3_pass &&
                  rep.cum4_pass && rep.ks_pass;
  return ok ? 0 : 1;
}

int run_exponents(const RunConfig& cfg, std::string& out) {
  const double delta = as_number(cfg, "delta");
  const double a = as_number(cfg, "a");
  const double b = as_number(cfg, "b");
  if (delta <= 0.0) throw std::invalid_argument("delta must be positive");
  if (a <= 0.0 || b <= 0.0)
    throw std::invalid_argument("a and b must be positive");
  const int rmax = static_cast<int>(as_int(cfg, "r-max", 2, 16));
  const std::vector<double> taus = exponent_chain(delta, a, b, rmax);
  bool all_positive = true;
  for (double tau : taus) all_positive = all_positive && tau > 0.0;
  if (cfg.format == "csv") {
    out = csv_preamble(cfg) + "r,tau\n";
    for (std::size_t i = 0; i < taus.size(); ++i)
      out += std::to_string(i + 2) + "," + gstr(taus[i]) + "\n";
  } else {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < taus.size(); ++i)
      rows.push_back({{"r", i + 2}, {"tau", taus[i]}});
    out = json_report(cfg, {{"exponents", rows}});
  }
  return all_positive ? 0 : 1;
}

bool write_output(const std::string& path, const std::string& data) {
  if (path.empty()) {
    std::fwrite(data.data(), 1, data.size(), stdout);
    std::fflush(stdout);
    return true;
  }
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) return false;
  const bool wrote = std::fwrite(data.data(), 1, data.size(), f) == data.size();
  return (std::fclose(f) == 0) && wrote;
}

}  // namespace

RunConfig parse_config(const std::vector<std::string>& args,
                       const std::string& config_file) {
  if (args.empty()) throw std::invalid_argument(usage_line());
  const std::string& sub = args[0];
  const auto it = subcommands().find(sub);
  if (it == subcommands().end())
    throw std::invalid_argument("unknown subcommand '" + sub + "'\n" +
                                usage_line());
  const SubSpec& spec = it->second;

  RunConfig cfg;
  cfg.subcommand = sub;
  cfg.format = spec.default_format;
  for (const auto& [k, v] : spec.defaults) cfg.params[k] = v;

  const auto known = [&spec](const std::string& key) {
    if (key == "seed" || key == "out" || key == "format") return true;
    for (const auto& [k, v] : spec.defaults)
      if (key == k) return true;
    return false;
  };
  const auto assign = [&](const std::string& key, const std::string& value,
                          const std::string& where) {
    if (!known(key))
      throw std::invalid_argument("unknown key '" + key + "' for '" + sub +
                                  "' (" + where + ")");
    if (key == "out") {
      cfg.output_path = value;
    } else if (key == "format") {
      if (value != "csv" && value != "json")
        throw std::invalid_argument("format must be csv or json, got '" +
                                    value + "'");
      cfg.format = value;
    } else {
      cfg.params[key] = value;
    }
  };

  // the config file, if any, is applied before the flags so the flags win
  std::string file = config_file;
  for (const std::string& a : args)
    if (a.rfind("--config=", 0) == 0) file = a.substr(9);
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in)
      throw std::invalid_argument("cannot read config file '" + file + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string t = trimmed(line);
      if (t.empty() || t[0] == '#') continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument(file + ":" + std::to_string(lineno) +
                                    ": expected key=value");
      assign(trimmed(t.substr(0, eq)), trimmed(t.substr(eq + 1)), file);
    }
  }

  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--config=", 0) == 0) continue;
    const auto eq = a.find('=', 2);
    if (a.rfind("--", 0) != 0 || eq == std::string::npos || eq == 2)
      throw std::invalid_argument("malformed argument '" + a +
                                  "', expected --key=value");
    assign(a.substr(2, eq - 2), a.substr(eq + 1), "flag");
  }

  if (spec.needs_seed && cfg.params.find("seed") == cfg.params.end())
    throw std::invalid_argument("'" + sub +
                                "' draws random samples; pass --seed=<n>");
  return cfg;
}

int run(const RunConfig& config) {
  try {
    if (subcommands().find(config.subcommand) == subcommands().end())
      throw std::invalid_argument("unknown subcommand '" + config.subcommand +
                                  "'");
    if (config.format != "csv" && config.format != "json")
      throw std::invalid_argument("format must be csv or json");

    std::string out;
    int verdict = 0;
    if (config.subcommand == "xi")
      verdict = run_xi(config, out);
    else if (config.subcommand == "count")
      verdict = run_count(config, out);
    else if (config.subcommand == "wellround")
      verdict = run_wellround(config, out);
    else if (config.subcommand == "correlate")
      verdict = run_correlate(config, out);
    else if (config.subcommand == "configs")
      verdict = run_configs(config, out);
    else if (config.subcommand == "cumulant-selftest")
      verdict = run_cumulant_selftest(config, out);
    else if (config.subcommand == "clt")
      verdict = run_clt(config, out);
    else
      verdict = run_exponents(config, out);

    if (!write_output(config.output_path, out)) {
      std::fprintf(stderr, "mixlab: cannot write '%s'\n",
                   config.output_path.c_str());
      return 2;
    }
    return verdict;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mixlab: %s\n", e.what());
    return 2;
  }
}

int cli_main(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  RunConfig cfg;
  try {
    cfg = parse_config(args);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mixlab: %s\n", e.what());
    return 2;
  }
  return run(cfg);
}

}  // namespace mixlab
