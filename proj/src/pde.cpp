#include "dkmlmc/pde.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "dkmlmc/spectral.hpp"

namespace dkmlmc {

void SchemeWeights::validate() const {
  if (!(b0 >= 0.0) || !(b1 >= 0.0)) throw std::invalid_argument("scheme weights must be non-negative");
  if (std::abs(b0 + b1 - 1.0) > 1e-12) throw std::invalid_argument("scheme weights must satisfy b0 + b1 = 1");
}

LevelParams make_level(int ell, const TorusGrid& grid, double tau, double horizon, SchemeWeights weights) {
  weights.validate();
  if (!(tau > 0.0)) throw std::invalid_argument("time step must be positive");
  if (!(horizon > 0.0)) throw std::invalid_argument("final time must be positive");
  const double ratio = horizon / tau;
  const long steps = std::lround(ratio);
  if (steps < 1 || std::abs(ratio - static_cast<double>(steps)) > 1e-9 * std::max(1.0, ratio)) {
    throw std::invalid_argument("level " + std::to_string(ell) + ": T = " + std::to_string(horizon) +
                                " is not an integer multiple of tau = " + std::to_string(tau));
  }
  LevelParams level;
  level.ell = ell;
  level.grid = grid;
  level.tau = tau;
  level.mu = tau / (grid.h() * grid.h());
  level.weights = weights;
  level.steps = steps;
  if (weights.is_explicit() && level.mu > (1.0 + 1e-12) / grid.dim()) {
    throw std::invalid_argument("CFL violation on level " + std::to_string(ell) + ": mu = tau/h^2 = " +
                                std::to_string(level.mu) + " exceeds 1/d = " + std::to_string(1.0 / grid.dim()) +
                                " required by the explicit scheme (b0 = 0)");
  }
  return level;
}

// ============================================================================
// ThetaOperator
// ============================================================================

ThetaOperator::ThetaOperator(const LevelParams& level) : level_(level) {
  level_.weights.validate();
  const double tau = level_.tau;
  const double b0 = level_.weights.b0;
  const double b1 = level_.weights.b1;
  symbol_ = laplacian_symbol(level_.grid);
  // Store the full multiplier of A_h (FFT normalisation folded in).
  const double inv_size = 1.0 / static_cast<double>(level_.grid.size());
  for (double& s : symbol_) s = inv_size * (1.0 + 0.5 * tau * b1 * s) / (1.0 - 0.5 * tau * b0 * s);
}

void ThetaOperator::explicit_part(const Field& in, Field& out) const {
  const TorusGrid& grid = level_.grid;
  if (in.grid() != grid) throw std::invalid_argument("ThetaOperator: field is on a different grid");
  if (out.grid() != grid) out = Field(grid);
  const double c = 0.5 * level_.tau * level_.weights.b1 / (grid.h() * grid.h());
  const auto src = in.values();
  auto dst = out.values();
  const double center = 1.0 - 2.0 * grid.dim() * c;
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = center * src[i];
  const StencilWalker walker(grid);
  for (int r = 0; r < grid.dim(); ++r) {
    walker.for_each_axis(r, [&](std::size_t i, std::size_t p, std::size_t m) { dst[i] += c * (src[p] + src[m]); });
  }
}

void ThetaOperator::solve_implicit(Field& rhs) const {
  if (level_.weights.is_explicit()) return;
  const TorusGrid& grid = level_.grid;
  if (rhs.grid() != grid) throw std::invalid_argument("ThetaOperator: field is on a different grid");
  const SpectralTransform fft(grid);
  const auto sym = laplacian_symbol(grid);
  const double half = 0.5 * level_.tau * level_.weights.b0;
  const double inv_size = 1.0 / static_cast<double>(grid.size());
  std::vector<Complex> buf(rhs.values().begin(), rhs.values().end());
  fft.forward(buf);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] *= inv_size / (1.0 - half * sym[i]);
  fft.backward(buf);
  auto dst = rhs.values();
  for (std::size_t i = 0; i < buf.size(); ++i) dst[i] = buf[i].real();
}

void ThetaOperator::apply_spectral(const Field& in, Field& out) const {
  const TorusGrid& grid = level_.grid;
  if (in.grid() != grid) throw std::invalid_argument("ThetaOperator: field is on a different grid");
  if (out.grid() != grid) out = Field(grid);
  const SpectralTransform fft(grid);
  std::vector<Complex> buf(in.values().begin(), in.values().end());
  fft.forward(buf);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] *= symbol_[i];
  fft.backward(buf);
  auto dst = out.values();
  for (std::size_t i = 0; i < buf.size(); ++i) dst[i] = buf[i].real();
}

void ThetaOperator::apply(const Field& in, Field& out) const {
  if (level_.weights.is_explicit()) {
    explicit_part(in, out);
  } else {
    apply_spectral(in, out);
  }
}

Field theta_step(const Field& f, const LevelParams& level) {
  Field out(f.grid());
  ThetaOperator(level).apply_spectral(f, out);
  return out;
}

// ============================================================================
// Trajectories
// ============================================================================

std::vector<Field> solve_mfl(const Field& rho0, const LevelParams& level) {
  const ThetaOperator op(level);
  std::vector<Field> traj;
  traj.reserve(static_cast<std::size_t>(level.steps) + 1);
  traj.push_back(rho0);
  for (long m = 1; m <= level.steps; ++m) {
    Field next(rho0.grid());
    op.apply(traj.back(), next);
    traj.push_back(std::move(next));
  }
  return traj;
}

Field solve_mfl_final(const Field& rho0, const LevelParams& level) {
  const ThetaOperator op(level);
  Field cur = rho0;
  Field next(rho0.grid());
  for (long m = 1; m <= level.steps; ++m) {
    op.apply(cur, next);
    std::swap(cur, next);
  }
  return cur;
}

std::vector<Field> backward_test(const Field& phiT, const LevelParams& level) {
  const ThetaOperator op(level);
  const auto steps = static_cast<std::size_t>(level.steps);
  std::vector<Field> traj(steps + 1);
  traj[steps] = phiT;
  for (std::size_t m = steps; m-- > 0;) {
    traj[m] = Field(phiT.grid());
    op.apply(traj[m + 1], traj[m]);
  }
  return traj;
}

std::vector<double> martingale_pairing(const std::vector<Field>& rho_traj, const std::vector<Field>& phi_traj,
                                       const LevelParams& level) {
  if (rho_traj.size() != phi_traj.size()) throw std::invalid_argument("martingale_pairing: length mismatch");
  std::vector<double> out;
  out.reserve(rho_traj.size());
  for (std::size_t m = 0; m < rho_traj.size(); ++m) {
    if (rho_traj[m].grid() != level.grid || phi_traj[m].grid() != level.grid) {
      throw std::invalid_argument("martingale_pairing: grid mismatch");
    }
    out.push_back(inner(rho_traj[m], phi_traj[m]));
  }
  return out;
}

// ============================================================================
// Fluctuation variance oracle
// ============================================================================

double OracleProfile::total() const {
  return std::accumulate(increments.begin(), increments.end(), initial);
}

namespace {

// (ρ, |∇_h g|²)_h
double weighted_gradient_energy(const Field& rho, const Field& g) {
  const VectorField grad = gradient(g);
  const auto w = rho.values();
  double s = 0.0;
  for (int r = 0; r < grad.dim(); ++r) {
    const auto c = grad[r].values();
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * c[i] * c[i];
  }
  return s * rho.grid().cell_volume();
}

}  // namespace

OracleProfile fluctuation_variance_profile(const TorusFunction& rho0bar, const TorusFunction& phi,
                                           const LevelParams& level, InitMode init_mode) {
  const TorusGrid& grid = level.grid;
  const ThetaOperator op(level);
  const long steps = level.steps;
  const long stride = std::max(1L, static_cast<long>(std::ceil(std::sqrt(static_cast<double>(steps)))));

  // Backward sweep keeping every stride-th slice, counted down from T.
  std::vector<long> checkpoint_index;
  std::vector<Field> checkpoints;
  {
    Field cur = interpolate(phi, grid);
    Field next(grid);
    for (long m = steps; m >= 1; --m) {
      if ((steps - m) % stride == 0) {
        checkpoint_index.push_back(m);
        checkpoints.push_back(cur);
      }
      op.apply(cur, next);
      std::swap(cur, next);
    }
  }

  OracleProfile profile;
  profile.increments.resize(static_cast<std::size_t>(steps));
  Field rho = interpolate(rho0bar, grid);
  const Field rho0 = rho;
  Field rho_next(grid);
  Field phi0;

  // Walk blocks (hi - stride, hi] from the earliest one forwards.
  for (std::size_t b = checkpoints.size(); b-- > 0;) {
    const long hi = checkpoint_index[b];
    const long lo = std::max(1L, hi - stride + 1);
    std::vector<Field> block(static_cast<std::size_t>(hi - lo + 1));
    block.back() = checkpoints[b];
    for (long j = hi - 1; j >= lo; --j) {
      block[static_cast<std::size_t>(j - lo)] = Field(grid);
      op.apply(block[static_cast<std::size_t>(j - lo + 1)], block[static_cast<std::size_t>(j - lo)]);
    }
    if (lo == 1) {
      phi0 = Field(grid);
      op.apply(block.front(), phi0);
    }
    for (long j = lo; j <= hi; ++j) {
      // term m = j - 1 pairs ρ̄^{m} with B φ^{m+1}
      Field g = block[static_cast<std::size_t>(j - lo)];
      op.solve_implicit(g);
      profile.increments[static_cast<std::size_t>(j - 1)] = level.tau * weighted_gradient_energy(rho, g);
      op.apply(rho, rho_next);
      std::swap(rho, rho_next);
    }
  }

  if (init_mode == InitMode::particles) {
    Field phi0_sq = phi0;
    for (double& v : phi0_sq.values()) v *= v;
    const double mean = inner(rho0, phi0);
    profile.initial = inner(rho0, phi0_sq) - mean * mean;
  }
  return profile;
}

double fluctuation_variance_oracle(const TorusFunction& rho0bar, const TorusFunction& phi, double horizon,
                                   const LevelParams& level, InitMode init_mode) {
  if (std::abs(horizon - level.horizon()) > 1e-9 * std::max(1.0, horizon)) {
    throw std::invalid_argument("fluctuation_variance_oracle: T does not match the level's step count");
  }
  return fluctuation_variance_profile(rho0bar, phi, level, init_mode).total();
}

}  // namespace dkmlmc
