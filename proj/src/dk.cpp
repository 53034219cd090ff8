#include "dkmlmc/dk.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dkmlmc {

DkStepper::DkStepper(const LevelParams& level, double N, double noise_amplitude)
    : op_(level), prefactor_(0.0), walker_(level.grid) {
  if (!(N > 0.0)) throw std::invalid_argument("particle count N must be positive");
  if (!(noise_amplitude >= 0.0)) throw std::invalid_argument("noise amplitude must be non-negative");
  prefactor_ = noise_amplitude / std::sqrt(N);
  root_.resize(level.grid.size());
  flux_.resize(level.grid.size());
}

void DkStepper::step_noiseless(const Field& in, Field& out) const { op_.apply(in, out); }

void DkStepper::step(const Field& in, const NoiseIncrement& dW, Field& out) {
  if (prefactor_ == 0.0) {
    op_.apply(in, out);
    return;
  }
  const TorusGrid& grid = op_.level().grid;
  if (dW.grid() != grid || dW.dim() != grid.dim()) throw std::invalid_argument("dk_step: noise on a different grid");
  op_.explicit_part(in, out);

  const auto rho = in.values();
  for (std::size_t i = 0; i < rho.size(); ++i) root_[i] = std::sqrt(std::max(rho[i], 0.0));
  auto dst = out.values();
  const double c = prefactor_ * 0.5 / grid.h();
  for (int r = 0; r < grid.dim(); ++r) {
    const auto w = dW[r].values();
    for (std::size_t i = 0; i < w.size(); ++i) flux_[i] = root_[i] * w[i];
    walker_.for_each_axis(r, [&](std::size_t i, std::size_t p, std::size_t m) { dst[i] += c * (flux_[p] - flux_[m]); });
  }
  op_.solve_implicit(out);
}

DkState dk_step(const DkState& state, const NoiseIncrement& dW) {
  if (state.step >= state.level.steps) throw std::invalid_argument("dk_step: path already at final time");
  DkStepper stepper(state.level, state.N);
  DkState next = state;
  stepper.step(state.rho, dW, next.rho);
  ++next.step;
  return next;
}

Field simulate_path(const Field& init, const LevelParams& level, double N, NoiseStream stream,
                    const PathOptions& options) {
  if (init.grid() != level.grid) throw std::invalid_argument("simulate_path: initial field on a different grid");
  DkStepper stepper(level, N, options.noise_amplitude);
  WhiteNoise noise(level);
  auto source = stream.normals();
  NoiseIncrement dW(level.grid);
  Field cur = init;
  Field next(level.grid);
  for (long m = 1; m <= level.steps; ++m) {
    if (!stepper.noiseless()) {
      source.seek(stream.counter++);
      noise.next(source, dW);
    }
    stepper.step(cur, dW, next);
    std::swap(cur, next);
    if (options.observer) options.observer(m, cur);
  }
  return cur;
}

std::pair<Field, Field> simulate_coupled_pair(const Field& init_fine, const Field& init_coarse,
                                              const LevelParams& fine, const LevelParams& coarse,
                                              CouplingKind coupling, double N, NoiseStream stream,
                                              const PairOptions& options) {
  if (init_fine.grid() != fine.grid || init_coarse.grid() != coarse.grid) {
    throw std::invalid_argument("simulate_coupled_pair: initial fields do not match the levels");
  }
  if (stream.role == StreamRole::coarse) {
    throw std::invalid_argument("simulate_coupled_pair: pass the fine (or single) stream of the replicate");
  }
  auto gen = make_coupled_noise(coupling, fine, coarse);
  const int kappa = gen->time_ratio();
  if (fine.steps != kappa * coarse.steps) {
    throw std::invalid_argument("simulate_coupled_pair: fine steps must be kappa_t x coarse steps");
  }
  DkStepper fine_stepper(fine, N, options.noise_amplitude);
  DkStepper coarse_stepper(coarse, N, options.noise_amplitude);
  const bool noisy = !fine_stepper.noiseless();
  auto source = stream.normals();
  NoiseIncrement dWf(fine.grid);
  NoiseIncrement dWc(coarse.grid);
  Field f = init_fine;
  Field f_next(fine.grid);
  Field c = init_coarse;
  Field c_next(coarse.grid);
  long m = 0;
  for (long mc = 1; mc <= coarse.steps; ++mc) {
    for (int j = 0; j < kappa; ++j) {
      if (noisy) {
        source.seek(stream.counter++);
        gen->next_fine(source, dWf);
      }
      fine_stepper.step(f, dWf, f_next);
      std::swap(f, f_next);
      ++m;
      if (options.fine_observer) options.fine_observer(m, f);
    }
    if (noisy) gen->take_coarse(dWc);
    coarse_stepper.step(c, dWc, c_next);
    std::swap(c, c_next);
    if (options.coarse_observer) options.coarse_observer(mc, c);
  }
  return {std::move(f), std::move(c)};
}

}  // namespace dkmlmc
