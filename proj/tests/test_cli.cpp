#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>
#include <unistd.h>

#include "mixlab/cli.hpp"

using namespace mixlab;
using nlohmann::json;

namespace {

std::string tmp_path(const std::string& name) {
  return "/tmp/mixlab_cli_" + std::to_string(::getpid()) + "_" + name;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(static_cast<bool>(out));
  out << text;
}

json run_to_json(const std::vector<std::string>& args,
                 const std::string& path, int expected_exit) {
  std::vector<std::string> full = args;
  full.push_back("--out=" + path);
  const RunConfig cfg = parse_config(full);
  CHECK(run(cfg) == expected_exit);
  return json::parse(slurp(path));
}

}  // namespace

TEST_CASE("parse: flags fill params on top of defaults") {
  const RunConfig cfg = parse_config({"count", "--t-max=40", "--seed=7"});
  CHECK(cfg.subcommand == "count");
  CHECK(cfg.params.at("t-max") == "40");
  CHECK(cfg.params.at("seed") == "7");
  CHECK(cfg.format == "csv");
  CHECK(cfg.output_path.empty());

  const RunConfig clt = parse_config({"clt", "--seed=2"});
  CHECK(clt.params.at("t") == "50");
  CHECK(clt.params.at("n") == "10000");
  CHECK(clt.params.at("workers") == "1");
  CHECK(clt.params.at("seed") == "2");
  CHECK(clt.format == "json");

  // later duplicates win, as usual for command lines
  CHECK(parse_config({"xi", "--t-max=5", "--t-max=9"}).params.at("t-max") ==
        "9");
}

TEST_CASE("parse: config file applies first, flags override") {
  const std::string file = tmp_path("cfg.txt");
  spit(file, "# comment line\n\n  seed = 1\nt=25\n");

  const RunConfig both = parse_config({"clt", "--seed=2"}, file);
  CHECK(both.params.at("seed") == "2");
  CHECK(both.params.at("t") == "25");

  const RunConfig file_only = parse_config({"clt"}, file);
  CHECK(file_only.params.at("seed") == "1");

  // the same file through the flag spelling, with another override
  const RunConfig flagged = parse_config({"clt", "--config=" + file,
                                          "--seed=9"});
  CHECK(flagged.params.at("seed") == "9");
  CHECK(flagged.params.at("t") == "25");

  const std::string bad = tmp_path("bad.txt");
  spit(bad, "bogus=3\n");
  CHECK_THROWS_AS(parse_config({"clt", "--seed=1"}, bad),
                  std::invalid_argument);
  spit(bad, "seed\n");
  CHECK_THROWS_AS(parse_config({"clt"}, bad), std::invalid_argument);
  CHECK_THROWS_AS(parse_config({"clt", "--config=/nonexistent_mixlab"}),
                  std::invalid_argument);
  std::remove(file.c_str());
  std::remove(bad.c_str());
}

TEST_CASE("parse: rejects unknown keys, bad shapes, missing seed") {
  CHECK_THROWS_AS(parse_config({"count", "--bogus=1"}), std::invalid_argument);
  CHECK_THROWS_AS(parse_config({}), std::invalid_argument);
  CHECK_THROWS_AS(parse_config({"frobnicate"}), std::invalid_argument);
  CHECK_THROWS_AS(parse_config({"clt"}), std::invalid_argument);
  CHECK_THROWS_AS(parse_config({"count", "--t-max"}), std::invalid_argument);
  CHECK_THROWS_AS(parse_config({"count", "-t=1"}), std::invalid_argument);
  CHECK_THROWS_AS(parse_config({"count", "--format=xml"}),
                  std::invalid_argument);
  // a seed is accepted (and recorded) even where nothing is random
  CHECK(parse_config({"xi", "--seed=5"}).params.at("seed") == "5");
}

TEST_CASE("count: csv envelope, known counts, byte-stable reruns") {
  const std::string p1 = tmp_path("count1.csv");
  const std::string p2 = tmp_path("count2.csv");
  const RunConfig cfg = parse_config({"count", "--t-max=20", "--out=" + p1});
  CHECK(run(cfg) == 0);
  const std::string text = slurp(p1);
  CHECK(text.rfind("# schema-version: 1\n# config: subcommand=count", 0) == 0);
  CHECK(text.find("t,count,volume,ratio\n") != std::string::npos);
  CHECK(text.find("\n10,580,") != std::string::npos);
  CHECK(text.find("\n20,2356,") != std::string::npos);

  const RunConfig cfg2 = parse_config({"count", "--t-max=20", "--out=" + p2});
  CHECK(run(cfg2) == 0);
  // the out path is part of the echoed config, so compare past the preamble
  const std::string t1 = slurp(p1), t2 = slurp(p2);
  CHECK(t1.substr(t1.find("t,count")) == t2.substr(t2.find("t,count")));

  const json j = run_to_json({"count", "--t-max=10", "--format=json"},
                             tmp_path("count.json"), 0);
  CHECK(j["schema_version"] == "1");
  CHECK(j["config"]["subcommand"] == "count");
  CHECK(j["config"]["params"]["t-max"] == "10");
  CHECK(j["count"]["counts"][0] == 580);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("xi: ladder table with damped column") {
  const std::string p = tmp_path("xi.csv");
  const RunConfig cfg = parse_config({"xi", "--t-max=10", "--out=" + p});
  CHECK(run(cfg) == 0);
  const std::string text = slurp(p);
  CHECK(text.find("t,xi,xi_damped\n") != std::string::npos);
  // grid 1, 2, 5, 10: four data rows after the two comments and the header
  int rows = 0;
  for (char c : text) rows += (c == '\n') ? 1 : 0;
  CHECK(rows == 3 + 4);
  CHECK(text.find("\n1,1,1\n") != std::string::npos);  // the base point is exact

  const json j =
      run_to_json({"xi", "--t-max=10", "--format=json"}, tmp_path("xi.json"), 0);
  REQUIRE(j["xi"].size() == 4);
  CHECK(j["xi"][3]["t"] == 10.0);
  CHECK(j["xi"][0]["xi"] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("exponents: positive chain, delta passthrough") {
  const std::string p = tmp_path("expo.csv");
  const RunConfig cfg = parse_config({"exponents", "--out=" + p});
  CHECK(run(cfg) == 0);
  const std::string text = slurp(p);
  CHECK(text.find("r,tau\n") != std::string::npos);
  CHECK(text.find("\n2,0.5\n") != std::string::npos);
  CHECK(text.find("\n6,") != std::string::npos);

  const json j = run_to_json({"exponents", "--r-max=4", "--format=json"},
                             tmp_path("expo.json"), 0);
  REQUIRE(j["exponents"].size() == 3);
  CHECK(j["exponents"][0]["tau"] == 0.5);
  for (const auto& row : j["exponents"]) CHECK(row["tau"].get<double>() > 0.0);
}

TEST_CASE("cumulant-selftest: all checks green") {
  const json j =
      run_to_json({"cumulant-selftest"}, tmp_path("self.json"), 0);
  CHECK(j["selftest"]["pass"] == true);
  CHECK(j["selftest"]["bell"] == json::array({1, 2, 5, 15, 52, 203}));
  CHECK(j["selftest"]["round_trip_top_err"].get<double>() <= 1e-12);
  CHECK(j["selftest"]["round_trip_back_err"].get<double>() <= 1e-12);
  CHECK(j["selftest"]["conditional_max"].get<double>() <= 1e-12);
  CHECK(j["config"]["params"]["seed"] == "1");

  const std::string p = tmp_path("self.csv");
  const RunConfig csv = parse_config({"cumulant-selftest", "--format=csv",
                                      "--seed=3", "--out=" + p});
  CHECK(run(csv) == 0);
  CHECK(slurp(p).find("pass,bell_ok,") != std::string::npos);
  std::remove(p.c_str());
}

TEST_CASE("correlate: worker count recorded but irrelevant to the value") {
  const std::string p1 = tmp_path("corr1.json");
  const std::string p2 = tmp_path("corr2.json");
  const std::vector<std::string> base = {"correlate", "--t=0.5",
                                         "--samples=4000", "--seed=5"};
  const json j1 = run_to_json(base, p1, 0);
  CHECK(j1["correlation"]["samples"] == 4000);
  CHECK(j1["config"]["params"]["workers"] == "1");

  // byte-identical rerun with the same resolved config
  std::vector<std::string> again = base;
  again.push_back("--out=" + p1);
  const std::string first = slurp(p1);
  CHECK(run(parse_config(again)) == 0);
  CHECK(slurp(p1) == first);

  std::vector<std::string> threaded = base;
  threaded.push_back("--workers=3");
  const json j3 = run_to_json(threaded, p2, 0);
  CHECK(j3["correlation"]["value"].get<double>() ==
        j1["correlation"]["value"].get<double>());
  CHECK(j3["config"]["params"]["workers"] == "3");
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("wellround: exit mirrors the sandwich verdict") {
  const std::string p = tmp_path("well.json");
  std::vector<std::string> args = {"wellround", "--t=10", "--samples=16",
                                   "--seed=1", "--out=" + p};
  const int code = run(parse_config(args));
  const json j = json::parse(slurp(p));
  CHECK(code == (j["wellround"]["pass"].get<bool>() ? 0 : 1));
  CHECK(j["wellround"]["m_plus"].get<double>() >=
        j["wellround"]["m_minus"].get<double>());
  CHECK(j["wellround"]["m_ball"].get<double>() > 0.0);
  std::remove(p.c_str());
}

TEST_CASE("configs: small instances all align") {
  const std::string p = tmp_path("cfgs.json");
  const json j = run_to_json({"configs", "--trials=3", "--width=2",
                              "--radius=8", "--eps=0.3", "--seed=9"},
                             p, 0);
  REQUIRE(j["configs"]["trials"].size() == 3);
  CHECK(j["configs"]["found_fraction"] == 1.0);
  for (const auto& row : j["configs"]["trials"]) {
    CHECK(row["found"] == true);
    CHECK(row["width"].get<double>() >= 2.0);
    CHECK(row["max_distance"].get<double>() < 0.3);
  }
  std::remove(p.c_str());
}

TEST_CASE("clt: report round trip, n floor, sample csv") {
  const std::string p = tmp_path("clt.json");
  std::vector<std::string> args = {"clt", "--t=2", "--n=1000", "--seed=4",
                                   "--out=" + p};
  const int code = run(parse_config(args));
  const json j = json::parse(slurp(p));
  const auto& rep = j["clt"];
  const bool ok = !rep["degenerate"].get<bool>() &&
                  rep["mean_pass"].get<bool>() && rep["cum3_pass"].get<bool>() &&
                  rep["cum4_pass"].get<bool>() && rep["ks_pass"].get<bool>();
  CHECK(code == (ok ? 0 : 1));
  CHECK(rep["samples"] == 1000);
  CHECK(rep["t"] == 2.0);
  CHECK(j["config"]["params"]["n"] == "1000");

  const std::string pc = tmp_path("clt.csv");
  const RunConfig csv = parse_config({"clt", "--t=2", "--n=1000", "--seed=4",
                                      "--format=csv", "--out=" + pc});
  CHECK(run(csv) >= 0);
  const std::string text = slurp(pc);
  CHECK(text.find("index,ft\n") != std::string::npos);
  CHECK(text.find("\n999,") != std::string::npos);
  CHECK(text.find("\n1000,") == std::string::npos);

  // under the sample floor the run is refused as a usage error
  CHECK(run(parse_config({"clt", "--t=10", "--n=100", "--seed=4"})) == 2);
  std::remove(p.c_str());
  std::remove(pc.c_str());
}

TEST_CASE("run: operational failures exit 2") {
  CHECK(run(parse_config({"count", "--t-max=abc"})) == 2);
  CHECK(run(parse_config({"count", "--t-max=500"})) == 2);
  CHECK(run(parse_config({"correlate", "--t=1", "--seed=1",
                          "--workers=999"})) == 2);
  const RunConfig bad_out =
      parse_config({"xi", "--t-max=2", "--out=/nonexistent_dir/x.csv"});
  CHECK(run(bad_out) == 2);
}

TEST_CASE("cli_main: argv in, exit codes out") {
  const std::string p = tmp_path("main.csv");
  const std::string out_flag = "--out=" + p;
  {
    const char* argv[] = {"mixlab", "xi", "--t-max=5", out_flag.c_str()};
    CHECK(cli_main(4, argv) == 0);
    CHECK(slurp(p).find("t,xi,xi_damped") != std::string::npos);
  }
  {
    const char* argv[] = {"mixlab"};
    CHECK(cli_main(1, argv) == 2);
  }
  {
    const char* argv[] = {"mixlab", "clt"};
    CHECK(cli_main(2, argv) == 2);
  }
  {
    const char* argv[] = {"mixlab", "count", "--bogus=1"};
    CHECK(cli_main(3, argv) == 2);
  }
  std::remove(p.c_str());
}
