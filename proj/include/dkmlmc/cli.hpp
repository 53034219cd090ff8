#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dkmlmc/mlmc.hpp"

namespace dkmlmc {

/// Every violation found while validating a configuration document.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

private:
  std::vector<std::string> violations_;
};

enum class RunKind { mlmc, mc, varred, convergence_table, mfl, noise_selftest };

std::string to_string(RunKind kind);

struct ExperimentConfig {
  RunKind kind = RunKind::mlmc;
  int dimension = 2;
  int n0 = 4;
  double tau0 = 1.024;
  CouplingKind coupling = CouplingKind::nearest_neighbour;
  int L_max = 5;
  double N = 2e9;
  double T = 1.024;
  std::string psi = "square";
  std::string phi = "sinsum";
  std::string density = "reg";
  std::uint64_t seed = 0;

  SchemeWeights weights;
  bool symmetric_nn = false;
  InitMode init_mode = InitMode::deterministic;
  std::vector<double> epsilons{0.1};
  std::uint64_t initial_samples = 100;
  double alpha = 2.0;
  bool fit_alpha = false;
  double density_guard = 0.0;
  bool mc_compare = true;
  std::uint64_t mc_pilot_samples = 100;
  std::uint64_t mc_max_samples = 0;
  int level = -1;
  std::uint64_t samples = 0;
  double epsilon = 0.0;
  std::vector<int> varred_levels;
  std::uint64_t finest_samples = 100;
  std::uint64_t table_samples = 100;
  int workers = 1;
  std::string output_dir = "out";
  std::vector<long> snapshot_steps;
  int selftest_n = 12;
  std::uint64_t selftest_samples = 10000;

  LevelLadder ladder() const;
  QoISpec qoi() const;
  /// Normalised key-value echo, accepted back by parse_config.
  nlohmann::json to_json() const;
};

/// Keys that must be present in every configuration document.
const std::vector<std::string>& required_config_keys();

/// Parses and validates a configuration document (or a run summary carrying
/// one under "config").  Throws ConfigError listing every violation.
ExperimentConfig parse_config(const nlohmann::json& document);
ExperimentConfig load_config(const std::string& path);

struct RunOutcome {
  int exit_code = 0;
  bool incomplete = false;
  nlohmann::json summary;
};

/// Runs the configured experiment and writes CSV tables plus summary.json
/// into config.output_dir.  Wall-clock figures go to timing.csv only.
RunOutcome run(const ExperimentConfig& config, const std::atomic<bool>* cancel = nullptr);

/// Shortest round-trip decimal form.
std::string format_number(double v);

}  // namespace dkmlmc
