#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dkmlmc/grid.hpp"
#include "dkmlmc/noise.hpp"
#include "dkmlmc/pde.hpp"

namespace dkmlmc {

using ScalarFunction = std::function<double(double)>;

/// Continuous initial density on [-π, π)^d with mass 1.
struct Density {
  std::string name;
  int dim = 2;
  TorusFunction value;
  /// Exact supremum, used as the rejection-sampling envelope.
  double max_value = 0.0;
  double min_value = 0.0;
};

/// "reg" and "irreg" (d = 2 only) or "uniform" (any d).
Density builtin_density(const std::string& name, int dim = 2);

/// "square" (x²) or "identity".
ScalarFunction builtin_psi(const std::string& name);

/// "sinsum" (Σ_j sin x_j), "sinx" (sin x_0), "cosx" (cos x_0) or "one".
TorusFunction builtin_phi(const std::string& name, int dim);

/// Rectangle-rule mass of a density on a uniform n^d lattice.
double quadrature_mass(const TorusFunction& f, int dim, int n);

struct QoISpec {
  /// Particle count.
  double N = 1.0;
  /// Horizon T.
  double T = 1.0;
  std::string psi_name = "square";
  ScalarFunction psi;
  std::string phi_name = "sinsum";
  TorusFunction phi;
  Density rho0bar;
  InitMode init_mode = InitMode::deterministic;
};

/// Resolves names into callables and checks the density integrates to 1.
QoISpec make_qoi(double N, double T, const std::string& psi, const std::string& phi, const std::string& density,
                 int dim, InitMode init_mode = InitMode::deterministic);

struct InitialData {
  Field rho0;
  Field rho0bar_h;
};

/// Per-level initial fields.  Deterministic mode returns I_h ρ̄⁰ on every
/// level; particles mode draws N points from ρ̄⁰ by rejection sampling (uniform
/// stream of `stream`) and bins the same points on every level, so coarse
/// cells are exact averages of their fine children.  Points in [x_k, x_k + h)
/// per axis go to cell k.
std::vector<InitialData> prepare_initial(const QoISpec& spec, const std::vector<LevelParams>& levels,
                                         const NoiseStream& stream);

/// Cell counts of `count` points drawn from `density`, on the finest grid among `grids`.
std::vector<Field> bin_particles(const Density& density, std::uint64_t count, const std::vector<TorusGrid>& grids,
                                 PhiloxUniformSource& uniforms);

/// N^{1/2} (ρ^T - ρ̄^T, I_h φ)_h
double fluctuation(const Field& rhoT, const Field& rhobarT, const QoISpec& spec, const LevelParams& level);
/// Same with a pre-interpolated test function.
double fluctuation(const Field& rhoT, const Field& rhobarT, const Field& phi_h, double N);

/// ψ(fluctuation)
double evaluate_P(const Field& rhoT, const Field& rhobarT, const QoISpec& spec, const LevelParams& level);

}  // namespace dkmlmc
