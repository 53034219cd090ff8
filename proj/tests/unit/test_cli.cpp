#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dkmlmc/cli.hpp"

using namespace dkmlmc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json base_config() {
  return json{{"kind", "mlmc"}, {"dimension", 2}, {"n0", 4},          {"tau0", 1.024}, {"coupling", "nn"},
              {"L_max", 5},     {"N", 2e9},       {"T", 1.024},       {"psi", "square"}, {"phi", "sinsum"},
              {"density", "reg"}, {"seed", 1}};
}

std::vector<std::string> violations_of(const json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.violations();
  }
  return {};
}

bool mentions(const std::vector<std::string>& v, const std::string& needle) {
  for (const auto& s : v) {
    if (s.find(needle) != std::string::npos) return true;
  }
  return false;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("dkmlmc_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("the full ladder parses") {
    const ExperimentConfig c = parse_config(base_config());
    CHECK(c.L_max == 5);
    const auto ladder = c.ladder();
    CHECK(ladder.level(5).grid.n() == 128);
    CHECK(ladder.level(5).tau == doctest::Approx(1e-3));
    CHECK(ladder.mu() == doctest::Approx(0.4150115681990155));
  }

  TEST_CASE("n0 = 8 with tau0 = 1.024 violates the CFL bound") {
    json doc = base_config();
    doc["n0"] = 8;
    const auto v = violations_of(doc);
    CHECK(mentions(v, "CFL"));
    CHECK(mentions(v, "1/d"));
  }

  TEST_CASE("mu = 0.6 in two dimensions is rejected") {
    json doc = base_config();
    doc.erase("tau0");
    doc["mu"] = 0.6;
    CHECK(mentions(violations_of(doc), "CFL"));
    doc["mu"] = 0.4150115681990155;
    CHECK(parse_config(doc).tau0 == doctest::Approx(1.024));
  }

  TEST_CASE("an empty document lists every required key") {
    const auto v = violations_of(json::object());
    for (const auto& key : required_config_keys()) CHECK(mentions(v, "'" + key + "'"));
  }

  TEST_CASE("unknown keys, bad horizons and bad values are rejected") {
    json doc = base_config();
    doc["epsilon_list"] = {0.1};
    CHECK(mentions(violations_of(doc), "unknown key 'epsilon_list'"));
    doc = base_config();
    doc["T"] = 1.0;
    CHECK(mentions(violations_of(doc), "integer multiple"));
    doc = base_config();
    doc["coupling"] = "spline";
    CHECK(mentions(violations_of(doc), "coupling"));
    doc = base_config();
    doc["dimension"] = "two";
    CHECK(mentions(violations_of(doc), "wrong type"));
    doc = base_config();
    doc["kind"] = "mc";
    CHECK(mentions(violations_of(doc), "samples"));
    doc = base_config();
    doc["coupling"] = "fourier";
    doc["n0"] = 3;
    doc["tau0"] = 0.4 * std::pow(2 * 3.141592653589793 / 3, 2);
    doc["T"] = doc["tau0"];
    doc["L_max"] = 2;
    CHECK(violations_of(doc).empty());
    doc["symmetric_nn"] = true;
    CHECK(mentions(violations_of(doc), "symmetric_nn"));
  }

  TEST_CASE("configs echo back unchanged") {
    json doc = base_config();
    doc["epsilons"] = {0.04, 0.02};
    doc["b0"] = 0.5;
    doc["workers"] = 3;
    const ExperimentConfig c = parse_config(doc);
    CHECK(c.weights.b1 == doctest::Approx(0.5));
    const ExperimentConfig d = parse_config(c.to_json());
    CHECK(d.to_json() == c.to_json());
    CHECK(parse_config(json{{"config", c.to_json()}, {"result", json::object()}}).to_json() == c.to_json());
  }

  TEST_CASE("mfl runs are byte-reproducible") {
    json doc = base_config();
    doc["kind"] = "mfl";
    doc["L_max"] = 2;
    doc["snapshot_steps"] = {0, 8};
    const auto a = scratch("mfl_a");
    const auto b = scratch("mfl_b");
    doc["output_dir"] = a.string();
    const RunOutcome ra = run(parse_config(doc));
    doc["output_dir"] = b.string();
    run(parse_config(doc));
    CHECK(ra.exit_code == 0);
    for (const char* f : {"mfl.csv", "oracle.csv", "mfl_final.csv", "mfl_step_8.csv", "path_step_8.csv"}) {
      CAPTURE(f);
      REQUIRE(fs::exists(a / f));
      CHECK(slurp(a / f) == slurp(b / f));
    }
    CHECK(ra.summary["result"]["max_relative_mass_drift"].get<double>() < 1e-12);
  }

  TEST_CASE("convergence table with worker-count independent bytes and summary replay") {
    json doc = base_config();
    doc["kind"] = "convergence-table";
    doc["L_max"] = 2;
    doc["table_samples"] = 8;
    const auto a = scratch("tab_a");
    const auto b = scratch("tab_b");
    doc["output_dir"] = a.string();
    doc["workers"] = 1;
    run(parse_config(doc));
    doc["output_dir"] = b.string();
    doc["workers"] = 3;
    run(parse_config(doc));
    CHECK(slurp(a / "convergence.csv") == slurp(b / "convergence.csv"));
    const auto header = slurp(a / "convergence.csv").substr(0, 40);
    CHECK(header.rfind("ell,n,tau,samples,mean_Y,var_Y", 0) == 0);

    const auto c = scratch("tab_c");
    std::ifstream is(a / "summary.json");
    ExperimentConfig replay = parse_config(json::parse(is));
    replay.output_dir = c.string();
    run(replay);
    CHECK(slurp(a / "convergence.csv") == slurp(c / "convergence.csv"));
  }

  TEST_CASE("output directory override from the environment") {
    json doc = base_config();
    doc["kind"] = "noise-selftest";
    doc["selftest_samples"] = 200;
    doc["output_dir"] = scratch("ignored").string();
    const auto env_dir = scratch("env");
    setenv("DKMLMC_OUTPUT_DIR", env_dir.string().c_str(), 1);
    run(parse_config(doc));
    unsetenv("DKMLMC_OUTPUT_DIR");
    CHECK(fs::exists(env_dir / "noise_selftest.csv"));
    CHECK(fs::exists(env_dir / "summary.json"));
  }

  TEST_CASE("cancelled runs are flagged incomplete") {
    json doc = base_config();
    doc["kind"] = "convergence-table";
    doc["L_max"] = 2;
    doc["output_dir"] = scratch("cancel").string();
    std::atomic<bool> cancel{true};
    const RunOutcome r = run(parse_config(doc), &cancel);
    CHECK(r.incomplete);
    CHECK(r.exit_code == 3);
    CHECK(r.summary["incomplete"].get<bool>());
  }

  TEST_CASE("number formatting round-trips") {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 12345.678, -2.5}) CHECK(std::stod(format_number(v)) == v);
    CHECK(format_number(std::nan("")) == "nan");
  }
}
