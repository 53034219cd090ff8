#pragma once

#include <functional>
#include <utility>

#include "dkmlmc/grid.hpp"
#include "dkmlmc/noise.hpp"
#include "dkmlmc/pde.hpp"

namespace dkmlmc {

struct DkState {
  Field rho;
  long step = 0;
  LevelParams level;
  /// Particle count N.
  double N = 1.0;
};

/// Fused stochastic θ-step on one level.
///
/// out solves (I - τ b0 Δ_h/2) out = (I + τ b1 Δ_h/2) in + a N^{-1/2} ∇_h·(√[in]⁺ ⊙ dW),
/// with a the noise amplitude (1 for the scheme itself, 0 for the mean-field
/// surrogate).  With a = 0 the update is exactly `ThetaOperator::apply`.
class DkStepper {
public:
  DkStepper(const LevelParams& level, double N, double noise_amplitude = 1.0);

  void step(const Field& in, const NoiseIncrement& dW, Field& out);
  void step_noiseless(const Field& in, Field& out) const;

  bool noiseless() const { return prefactor_ == 0.0; }
  const LevelParams& level() const { return op_.level(); }

private:
  ThetaOperator op_;
  double prefactor_;
  StencilWalker walker_;
  std::vector<double> root_;
  std::vector<double> flux_;
};

DkState dk_step(const DkState& state, const NoiseIncrement& dW);

/// Called after every completed step with (step index m ≥ 1, ρ^{mτ}).
using PathObserver = std::function<void(long, const Field&)>;

struct PathOptions {
  double noise_amplitude = 1.0;
  PathObserver observer;
};

/// ρ^T after level.steps steps driven by white noise from `stream`
/// (counter = starting step).
Field simulate_path(const Field& init, const LevelParams& level, double N, NoiseStream stream,
                    const PathOptions& options = {});

/// Observer for a coupled pair: (fine step m, ρ_fine, coarse step or -1, ρ_coarse).
struct PairOptions {
  double noise_amplitude = 1.0;
  std::function<void(long, const Field&)> fine_observer;
  std::function<void(long, const Field&)> coarse_observer;
};

/// Advances fine and coarse paths together; the coarse path takes one step per
/// κ_t fine steps with the coupled increment.  Returns (ρ^T_fine, ρ^T_coarse).
std::pair<Field, Field> simulate_coupled_pair(const Field& init_fine, const Field& init_coarse,
                                              const LevelParams& fine, const LevelParams& coarse,
                                              CouplingKind coupling, double N, NoiseStream stream,
                                              const PairOptions& options = {});

}  // namespace dkmlmc
