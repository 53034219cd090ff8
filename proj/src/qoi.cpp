#include "dkmlmc/qoi.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dkmlmc {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kQuadraturePoints = 1024;

// sin²(x - π/2) + sin²(y - 3π/2)
double bump_exponent(std::span<const double> x) {
  const double a = std::sin(x[0] - 0.5 * kPi);
  const double b = std::sin(x[1] - 1.5 * kPi);
  return a * a + b * b;
}

double reg_unnormalised(std::span<const double> x) {
  return 1.0 + std::exp(-0.5 * bump_exponent(x)) / std::sqrt(2.0 * kPi);
}

double irreg_unnormalised(std::span<const double> x) { return std::exp(-bump_exponent(x) / 0.2); }

double normaliser(double (*f)(std::span<const double>)) {
  return quadrature_mass([f](std::span<const double> x) { return f(x); }, 2, kQuadraturePoints);
}

}  // namespace

double quadrature_mass(const TorusFunction& f, int dim, int n) {
  const TorusGrid grid(dim, n);
  std::vector<double> x(static_cast<std::size_t>(dim));
  double s = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.coordinates(i, x);
    s += f(x);
  }
  return s * grid.cell_volume();
}

Density builtin_density(const std::string& name, int dim) {
  Density d;
  d.name = name;
  d.dim = dim;
  if (name == "uniform") {
    const double v = std::pow(2.0 * kPi, -dim);
    d.value = [v](std::span<const double>) { return v; };
    d.max_value = v;
    d.min_value = v;
    return d;
  }
  if (name != "reg" && name != "irreg") throw std::invalid_argument("unknown density '" + name + "'");
  if (dim != 2) throw std::invalid_argument("density '" + name + "' is defined for d = 2 only");
  if (name == "reg") {
    static const double z = normaliser(reg_unnormalised);
    d.value = [](std::span<const double> x) { return reg_unnormalised(x) / z; };
    d.max_value = (1.0 + 1.0 / std::sqrt(2.0 * kPi)) / z;
    d.min_value = (1.0 + std::exp(-1.0) / std::sqrt(2.0 * kPi)) / z;
  } else {
    static const double z = normaliser(irreg_unnormalised);
    d.value = [](std::span<const double> x) { return irreg_unnormalised(x) / z; };
    d.max_value = 1.0 / z;
    d.min_value = std::exp(-2.0 / 0.2) / z;
  }
  return d;
}

ScalarFunction builtin_psi(const std::string& name) {
  if (name == "square") return [](double z) { return z * z; };
  if (name == "identity") return [](double z) { return z; };
  throw std::invalid_argument("unknown psi '" + name + "' (expected square or identity)");
}

TorusFunction builtin_phi(const std::string& name, int dim) {
  if (name == "sinsum") {
    return [dim](std::span<const double> x) {
      double s = 0.0;
      for (int r = 0; r < dim; ++r) s += std::sin(x[static_cast<std::size_t>(r)]);
      return s;
    };
  }
  if (name == "sinx") return [](std::span<const double> x) { return std::sin(x[0]); };
  if (name == "cosx") return [](std::span<const double> x) { return std::cos(x[0]); };
  if (name == "one") return [](std::span<const double>) { return 1.0; };
  throw std::invalid_argument("unknown phi '" + name + "' (expected sinsum, sinx, cosx or one)");
}

QoISpec make_qoi(double N, double T, const std::string& psi, const std::string& phi, const std::string& density,
                 int dim, InitMode init_mode) {
  if (!(N >= 1.0)) throw std::invalid_argument("N must be >= 1");
  if (!(T > 0.0)) throw std::invalid_argument("T must be positive");
  QoISpec spec;
  spec.N = N;
  spec.T = T;
  spec.psi_name = psi;
  spec.psi = builtin_psi(psi);
  spec.phi_name = phi;
  spec.phi = builtin_phi(phi, dim);
  spec.rho0bar = builtin_density(density, dim);
  spec.init_mode = init_mode;
  const int n = dim == 1 ? 4096 : (dim == 2 ? kQuadraturePoints : 64);
  const double mass = quadrature_mass(spec.rho0bar.value, dim, n);
  if (std::abs(mass - 1.0) > 1e-8) throw std::invalid_argument("density '" + density + "' does not integrate to 1");
  if (init_mode == InitMode::particles && N != std::floor(N)) {
    throw std::invalid_argument("particles mode needs an integer particle count");
  }
  return spec;
}

// ============================================================================
// Initial data
// ============================================================================

std::vector<Field> bin_particles(const Density& density, std::uint64_t count, const std::vector<TorusGrid>& grids,
                                 PhiloxUniformSource& uniforms) {
  if (grids.empty()) return {};
  const TorusGrid* finest = &grids.front();
  for (const auto& g : grids) {
    if (g.dim() != density.dim) throw std::invalid_argument("bin_particles: dimension mismatch");
    if (g.n() > finest->n()) finest = &g;
  }
  for (const auto& g : grids) {
    if (finest->n() % g.n() != 0) throw std::invalid_argument("bin_particles: grids are not nested");
  }
  const int d = density.dim;
  const int nf = finest->n();
  const double hf = 2.0 * kPi / nf;
  std::vector<std::uint64_t> counts(finest->size(), 0);
  std::vector<double> x(static_cast<std::size_t>(d));
  std::vector<int> k(static_cast<std::size_t>(d));
  for (std::uint64_t p = 0; p < count;) {
    for (int r = 0; r < d; ++r) x[static_cast<std::size_t>(r)] = -kPi + 2.0 * kPi * uniforms.next();
    const double u = uniforms.next() * density.max_value;
    const double f = density.value(x);
    if (f < 0.0) throw std::runtime_error("rejection sampling: density evaluates negative");
    if (u > f) continue;
    for (int r = 0; r < d; ++r) {
      const int kr = static_cast<int>(std::floor((x[static_cast<std::size_t>(r)] + kPi) / hf));
      k[static_cast<std::size_t>(r)] = std::clamp(kr, 0, nf - 1);
    }
    ++counts[finest->flat_index(k)];
    ++p;
  }

  std::vector<Field> out;
  out.reserve(grids.size());
  for (const auto& g : grids) {
    const int ratio = nf / g.n();
    std::vector<double> coarse(g.size(), 0.0);
    std::vector<int> kc(static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (counts[i] == 0) continue;
      finest->multi_index(i, k);
      for (int r = 0; r < d; ++r) kc[static_cast<std::size_t>(r)] = k[static_cast<std::size_t>(r)] / ratio;
      coarse[g.flat_index(kc)] += static_cast<double>(counts[i]);
    }
    const double scale = 1.0 / (static_cast<double>(count) * g.cell_volume());
    for (double& v : coarse) v *= scale;
    out.emplace_back(g, std::move(coarse));
  }
  return out;
}

std::vector<InitialData> prepare_initial(const QoISpec& spec, const std::vector<LevelParams>& levels,
                                         const NoiseStream& stream) {
  std::vector<InitialData> out;
  out.reserve(levels.size());
  for (const auto& level : levels) {
    Field bar = interpolate(spec.rho0bar.value, level.grid);
    out.push_back({bar, bar});
  }
  if (spec.init_mode == InitMode::particles && !levels.empty()) {
    std::vector<TorusGrid> grids;
    for (const auto& level : levels) grids.push_back(level.grid);
    auto uniforms = stream.uniforms();
    uniforms.seek(0);
    auto binned = bin_particles(spec.rho0bar, static_cast<std::uint64_t>(spec.N), grids, uniforms);
    for (std::size_t i = 0; i < levels.size(); ++i) out[i].rho0 = std::move(binned[i]);
  }
  return out;
}

// ============================================================================
// Fluctuation functional
// ============================================================================

double fluctuation(const Field& rhoT, const Field& rhobarT, const Field& phi_h, double N) {
  if (rhoT.grid() != rhobarT.grid() || rhoT.grid() != phi_h.grid()) {
    throw std::invalid_argument("fluctuation: grid mismatch");
  }
  const auto a = rhoT.values();
  const auto b = rhobarT.values();
  const auto p = phi_h.values();
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * p[i];
  return std::sqrt(N) * s * rhoT.grid().cell_volume();
}

double fluctuation(const Field& rhoT, const Field& rhobarT, const QoISpec& spec, const LevelParams& level) {
  if (rhoT.grid() != level.grid) throw std::invalid_argument("fluctuation: grid mismatch");
  return fluctuation(rhoT, rhobarT, interpolate(spec.phi, level.grid), spec.N);
}

double evaluate_P(const Field& rhoT, const Field& rhobarT, const QoISpec& spec, const LevelParams& level) {
  return spec.psi(fluctuation(rhoT, rhobarT, spec, level));
}

}  // namespace dkmlmc
