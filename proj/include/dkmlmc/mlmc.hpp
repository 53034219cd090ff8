#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dkmlmc/noise.hpp"
#include "dkmlmc/pde.hpp"
#include "dkmlmc/qoi.hpp"
#include "dkmlmc/stats.hpp"

namespace dkmlmc {

/// Geometric ladder h_ℓ = h_0 / s^ℓ, τ_ℓ = τ_0 / s^{2ℓ} (s the coupling's space ratio).
class LevelLadder {
public:
  LevelLadder(CouplingKind coupling, int dim, int n0, double tau0, int L_max, double horizon,
              SchemeWeights weights = {}, bool cell_centered = false);

  CouplingKind coupling() const { return coupling_; }
  int L_max() const { return static_cast<int>(levels_.size()) - 1; }
  double horizon() const { return horizon_; }
  double mu() const { return levels_.front().mu; }
  const LevelParams& level(int ell) const;
  const std::vector<LevelParams>& levels() const { return levels_; }

  /// Model cost of one Y_ℓ sample: n_ℓ^d steps_ℓ, plus the coarse companion for ℓ ≥ 1.
  double coupled_cost(int ell) const;
  /// Model cost of one single-level P_ℓ sample.
  double single_cost(int ell) const;

private:
  CouplingKind coupling_;
  double horizon_;
  std::vector<LevelParams> levels_;
};

/// One replicate on level ℓ: P_ℓ and (for ℓ ≥ 1) its coupled coarse partner.
struct LevelSample {
  double P_fine = 0.0;
  double P_coarse = 0.0;
  double Y = 0.0;
};

/// Immutable problem data per level (interpolated ρ̄⁰, mean-field ρ̄^T, I_h φ)
/// plus the sampler.  `sample` is safe to call concurrently.
class Problem {
public:
  Problem(LevelLadder ladder, QoISpec spec, std::uint64_t master_seed, double noise_amplitude = 1.0);

  const LevelLadder& ladder() const { return ladder_; }
  const QoISpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }

  LevelSample sample(int ell, std::uint64_t replicate, StreamFamily family = StreamFamily::mlmc) const;
  /// Plain single-level P_ℓ (stream of the given family at level ℓ, role single).
  double sample_P(int ell, std::uint64_t replicate, StreamFamily family = StreamFamily::mc) const;

  const Field& rhobar_final(int ell) const { return cache_.at(static_cast<std::size_t>(ell)).rhobarT; }
  const Field& rho0bar(int ell) const { return cache_.at(static_cast<std::size_t>(ell)).rho0bar; }

private:
  struct LevelCache {
    Field rho0bar;
    Field rhobarT;
    Field phi;
  };
  std::pair<Field, Field> initial_pair(int ell, const NoiseStream& stream) const;

  LevelLadder ladder_;
  QoISpec spec_;
  std::uint64_t seed_;
  double noise_amplitude_;
  std::vector<LevelCache> cache_;
};

double sample_Y(const Problem& problem, int ell, std::uint64_t replicate);

// ============================================================================
// Execution
// ============================================================================

struct ExecutionOptions {
  int workers = 1;
  /// Polled between samples; once set, batches stop and results are marked incomplete.
  const std::atomic<bool>* cancel = nullptr;
};

/// Runs fn(i) for i in [0, count) on a worker pool.  Returns the length of the
/// longest fully completed prefix (count unless cancelled).  The first
/// exception thrown by fn is rethrown after all workers stop.
std::size_t parallel_for(std::size_t count, const ExecutionOptions& exec, const std::function<void(std::size_t)>& fn);

/// Samples replicates [first, first + count) of level ℓ in replicate order.
std::vector<LevelSample> sample_batch(const Problem& problem, int ell, std::uint64_t first, std::size_t count,
                                      StreamFamily family, const ExecutionOptions& exec);

// ============================================================================
// Statistics per level
// ============================================================================

struct LevelStats {
  int ell = 0;
  MomentAccumulator Y{true};
  MomentAccumulator P_fine{true};
  MomentAccumulator P_coarse{true};
  /// Model cost per sample.
  double cost = 0.0;
  double wall_seconds = 0.0;

  std::uint64_t samples() const { return Y.count(); }
  void add(std::span<const LevelSample> batch);
};

/// M_ℓ = ⌈2 ε^{-2} √(V_ℓ/C_ℓ) Σ_k √(V_k C_k)⌉, floored at `floor`.
std::vector<std::uint64_t> optimal_samples(std::span<const double> V, std::span<const double> C, double epsilon,
                                           std::uint64_t floor = 2);

/// max_{i∈{0,1,2}} 2^{-iα}|Ŷ_{L-i}| / (2^α - 1) < ε/√2, with `level_means`
/// ordered (Ŷ_{L-2}, Ŷ_{L-1}, Ŷ_L).
bool converged(std::span<const double> level_means, double alpha, double epsilon);

/// Regresses log2|Ŷ_ℓ| (ℓ ≥ 1) against ℓ; returns -slope, or `fallback` when
/// fewer than two usable points exist.
double fit_alpha(std::span<const LevelStats> levels, double fallback);

// ============================================================================
// Drivers
// ============================================================================

struct MlmcOptions {
  double epsilon = 0.1;
  std::uint64_t initial_samples = 100;
  double alpha = 2.0;
  bool fit_alpha = false;
  /// When > 0, a level is only added if N h_ℓ^d ≥ density_guard.
  double density_guard = 0.0;
  StreamFamily family = StreamFamily::mlmc;
  ExecutionOptions exec;
  /// Optional per-iteration progress callback.
  std::function<void(const std::string&)> log;
};

struct MlmcResult {
  double estimate = 0.0;
  /// Σ_ℓ V̂_ℓ / M_ℓ
  double estimator_variance = 0.0;
  double total_cost = 0.0;
  double epsilon = 0.0;
  int L = 0;
  bool converged = false;
  bool density_guard_hit = false;
  bool incomplete = false;
  double alpha = 2.0;
  double wall_seconds = 0.0;
  std::vector<LevelStats> levels;
};

MlmcResult run_mlmc(const Problem& problem, const MlmcOptions& options);

struct McBudget {
  /// Fixed sample count (used when > 0).
  std::uint64_t samples = 0;
  /// Accuracy target used when samples == 0: M = ⌈2 V̂ / ε²⌉.
  double epsilon = 0.0;
  std::uint64_t pilot_samples = 100;
  /// Cap on simulated samples (0 = none); beyond it M and the cost are
  /// projected from the pilot variance and flagged as extrapolated.
  std::uint64_t max_samples = 0;
};

struct McResult {
  int ell = 0;
  /// Samples the estimator is sized for.
  std::uint64_t target_samples = 0;
  MomentAccumulator P{true};
  /// V̂ / target_samples
  double estimator_variance = 0.0;
  /// target_samples × single-level cost
  double cost = 0.0;
  double wall_seconds = 0.0;
  bool extrapolated = false;
  bool incomplete = false;
};

McResult run_mc(const Problem& problem, int ell, const McBudget& budget, const ExecutionOptions& exec = {},
                StreamFamily family = StreamFamily::mc);

/// Type-2 experiment on the finest level L: MLMC with M_{ℓ-1} = 4 M_ℓ and
/// M_L = finest_samples, against single-level MC at L with the same model cost.
struct VarRedRow {
  int L = 0;
  int n_min = 0;
  double mlmc_variance = 0.0;
  double mlmc_cost = 0.0;
  double mc_variance = 0.0;
  std::uint64_t mc_samples = 0;
  double factor = 0.0;
};

struct VarRedResult {
  std::vector<VarRedRow> rows;
  /// Level statistics of the shared MLMC sample pool (allocation of the largest L).
  std::vector<LevelStats> levels;
  bool incomplete = false;
};

/// Runs the experiment for every L in `finest_levels`.  Row L uses the first
/// M_ℓ = finest_samples·4^{L-ℓ} replicates of each level ℓ ≤ L, a prefix of
/// one shared pool drawn for the largest L.
VarRedResult variance_reduction_experiment(const Problem& problem, std::span<const int> finest_levels,
                                           std::uint64_t finest_samples, const ExecutionOptions& exec = {});

/// Fixed-sample per-level table (Y and P statistics) for levels 0..L.
std::vector<LevelStats> level_table(const Problem& problem, int L, std::uint64_t samples_per_level,
                                    const ExecutionOptions& exec = {}, bool* incomplete = nullptr);

}  // namespace dkmlmc
