#include <atomic>
#include <csignal>
#include <cmath>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dkmlmc/cli.hpp"

namespace {

std::atomic<bool> g_cancel{false};

void on_sigint(int) { g_cancel.store(true); }

int report_error(const std::string& cls, const std::string& message, const nlohmann::json& details = {}) {
  nlohmann::json j = {{"error", cls}, {"message", message}};
  if (!details.is_null()) j["violations"] = details;
  std::cerr << j.dump() << '\n';
  return cls == "config" ? 2 : 3;
}

void print_ladder(const dkmlmc::ExperimentConfig& cfg) {
  const auto ladder = cfg.ladder();
  std::cout << "ell,n,h,tau,mu,steps,N_h^d\n";
  for (const auto& lv : ladder.levels()) {
    const double h = lv.grid.h();
    std::cout << lv.ell << ',' << lv.grid.n() << ',' << dkmlmc::format_number(h) << ','
              << dkmlmc::format_number(lv.tau) << ',' << dkmlmc::format_number(lv.mu) << ',' << lv.steps << ','
              << dkmlmc::format_number(cfg.N * std::pow(h, cfg.dimension)) << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multilevel Monte Carlo for the finite-difference Dean-Kawasaki equation"};
  app.require_subcommand(1);

  std::string config_path;
  int workers = 0;
  std::string output_dir;
  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config_path, "JSON config (or a summary.json to replay)")->required();
  run->add_option("-j,--workers", workers, "Worker threads (overrides the config)");
  run->add_option("-o,--output-dir", output_dir, "Output directory (overrides the config)");

  auto* validate = app.add_subcommand("validate", "Validate a config file and print its normalised form");
  validate->add_option("config", config_path, "JSON config")->required();

  auto* inspect = app.add_subcommand("inspect", "Print the level ladder of a config file");
  inspect->add_option("config", config_path, "JSON config")->required();

  std::string coupling = "nn";
  int dim = 1;
  int n_fine = 12;
  std::uint64_t samples = 10000;
  std::uint64_t seed = 0;
  auto* selftest = app.add_subcommand("noise-selftest", "Empirical moments of the coupled noise");
  selftest->add_option("--coupling", coupling, "nn or fourier");
  selftest->add_option("--dim", dim, "Dimension");
  selftest->add_option("--n", n_fine, "Fine grid points per axis");
  selftest->add_option("--samples", samples, "Number of samples");
  selftest->add_option("--seed", seed, "Master seed");
  selftest->add_option("-o,--output-dir", output_dir, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*selftest) {
      dkmlmc::ExperimentConfig cfg;
      cfg.kind = dkmlmc::RunKind::noise_selftest;
      cfg.coupling = dkmlmc::parse_coupling(coupling);
      cfg.dimension = dim;
      cfg.selftest_n = n_fine;
      cfg.selftest_samples = samples;
      cfg.seed = seed;
      cfg.output_dir = output_dir.empty() ? "out" : output_dir;
      nlohmann::json doc = cfg.to_json();
      cfg = dkmlmc::parse_config(doc);
      const auto outcome = dkmlmc::run(cfg, &g_cancel);
      std::cout << outcome.summary["result"].dump(2) << '\n';
      return outcome.exit_code;
    }

    dkmlmc::ExperimentConfig cfg = dkmlmc::load_config(config_path);
    if (*validate) {
      std::cout << cfg.to_json().dump(2) << '\n';
      return 0;
    }
    if (*inspect) {
      print_ladder(cfg);
      return 0;
    }
    if (workers > 0) cfg.workers = workers;
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    std::signal(SIGINT, on_sigint);
    const auto outcome = dkmlmc::run(cfg, &g_cancel);
    std::cout << outcome.summary["result"].dump(2) << '\n';
    if (outcome.incomplete) std::cerr << "interrupted: partial results written and flagged incomplete\n";
    return outcome.exit_code;
  } catch (const dkmlmc::ConfigError& e) {
    return report_error("config", e.what(), e.violations());
  } catch (const std::invalid_argument& e) {
    return report_error("config", e.what());
  } catch (const std::exception& e) {
    return report_error("runtime", e.what());
  }
}
