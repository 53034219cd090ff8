#pragma once

#include <vector>

#include "dkmlmc/grid.hpp"

namespace dkmlmc {

enum class InitMode { deterministic, particles };

/// θ-scheme weights: b0 on the implicit Laplacian, b1 on the explicit one.
struct SchemeWeights {
  double b0 = 0.0;
  double b1 = 1.0;

  bool is_explicit() const { return b0 == 0.0; }
  void validate() const;
};

/// One space-time resolution (h_ℓ, τ_ℓ) of a level ladder.
struct LevelParams {
  int ell = 0;
  TorusGrid grid;
  double tau = 0.0;
  /// τ/h²
  double mu = 0.0;
  SchemeWeights weights;
  long steps = 0;

  double horizon() const { return static_cast<double>(steps) * tau; }
  /// Deterministic work model: grid points × time steps.
  double work() const { return static_cast<double>(grid.size()) * static_cast<double>(steps); }
};

/// Builds and validates a level: T must be an integer multiple of τ, and the
/// explicit scheme requires μ ≤ 1/d.
LevelParams make_level(int ell, const TorusGrid& grid, double tau, double horizon,
                       SchemeWeights weights = {});

/// A_h = (I - τ b0 Δ_h/2)^{-1} (I + τ b1 Δ_h/2) on one level.
///
/// `apply` uses the direct stencil when b0 = 0 and the FFT diagonalisation
/// otherwise; `apply_spectral` always goes through Fourier space.
class ThetaOperator {
public:
  explicit ThetaOperator(const LevelParams& level);

  void apply(const Field& in, Field& out) const;
  void apply_spectral(const Field& in, Field& out) const;
  /// out = (I + τ b1 Δ_h/2) in, by stencil.
  void explicit_part(const Field& in, Field& out) const;
  /// rhs <- (I - τ b0 Δ_h/2)^{-1} rhs.  No-op when b0 = 0.
  void solve_implicit(Field& rhs) const;

  const LevelParams& level() const { return level_; }

private:
  LevelParams level_;
  std::vector<double> symbol_;
};

/// A_h f via exact Fourier diagonalisation.
Field theta_step(const Field& f, const LevelParams& level);

/// Noiseless (mean-field) trajectory ρ̄^{mτ}, m = 0..steps.
std::vector<Field> solve_mfl(const Field& rho0, const LevelParams& level);
/// ρ̄^T only, without storing the trajectory.
Field solve_mfl_final(const Field& rho0, const LevelParams& level);

/// Backward test-function trajectory; element m is φ^{mτ}, element `steps` is φ^T.
std::vector<Field> backward_test(const Field& phiT, const LevelParams& level);

/// m ↦ (ρ^{mτ}, φ^{mτ})_h.
std::vector<double> martingale_pairing(const std::vector<Field>& rho_traj,
                                       const std::vector<Field>& phi_traj,
                                       const LevelParams& level);

/// Per-step contributions τ (ρ̄^{mτ}, |∇_h B φ^{(m+1)τ}|²)_h, m = 0..steps-1, with
/// B = (I - τ b0 Δ_h/2)^{-1}.  Streams the backward trajectory with O(√steps)
/// checkpoints instead of storing it.
struct OracleProfile {
  double initial = 0.0;
  std::vector<double> increments;

  double total() const;
};

OracleProfile fluctuation_variance_profile(const TorusFunction& rho0bar, const TorusFunction& phi,
                                           const LevelParams& level, InitMode init_mode);

/// Predicted E[(N^{1/2}(ρ^T - ρ̄^T, I_h φ)_h)²] for the linear fluctuation
/// statistic on `level`.
double fluctuation_variance_oracle(const TorusFunction& rho0bar, const TorusFunction& phi, double horizon,
                                   const LevelParams& level, InitMode init_mode);

}  // namespace dkmlmc
