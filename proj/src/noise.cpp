#include "dkmlmc/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dkmlmc/spectral.hpp"
#include "dkmlmc/stats.hpp"

namespace dkmlmc {

CouplingRatios coupling_ratios(CouplingKind kind) {
  switch (kind) {
    case CouplingKind::nearest_neighbour: return {2, 4};
    case CouplingKind::fourier: return {3, 9};
  }
  throw std::invalid_argument("unknown coupling");
}

std::string to_string(CouplingKind kind) {
  return kind == CouplingKind::nearest_neighbour ? "nn" : "fourier";
}

CouplingKind parse_coupling(const std::string& name) {
  if (name == "nn" || name == "nearest_neighbour") return CouplingKind::nearest_neighbour;
  if (name == "fourier") return CouplingKind::fourier;
  throw std::invalid_argument("unknown coupling '" + name + "' (expected nn or fourier)");
}

PhiloxKey NoiseStream::key() const {
  return derive_key(master_seed, level, replicate, static_cast<std::uint32_t>(family));
}

PhiloxNormalSource NoiseStream::normals() const { return PhiloxNormalSource(key(), 0); }
PhiloxUniformSource NoiseStream::uniforms() const { return PhiloxUniformSource(key(), 1); }

// ============================================================================
// White noise
// ============================================================================

WhiteNoise::WhiteNoise(const LevelParams& level)
    : level_(level), scale_(std::sqrt(level.tau / level.grid.cell_volume())) {}

std::size_t WhiteNoise::normals_per_step() const {
  return static_cast<std::size_t>(level_.grid.dim()) * level_.grid.size();
}

void WhiteNoise::next(GaussianSource& source, NoiseIncrement& out) {
  if (out.grid() != level_.grid || out.dim() != level_.grid.dim()) out = NoiseIncrement(level_.grid);
  for (int r = 0; r < level_.grid.dim(); ++r) {
    auto v = out[r].values();
    source.fill(v);
    for (double& x : v) x *= scale_;
  }
}

NoiseIncrement white_increment(NoiseStream& stream, const LevelParams& level) {
  if (stream.role != StreamRole::single) throw std::invalid_argument("white_increment: stream role must be single");
  auto source = stream.normals();
  source.seek(stream.counter++);
  NoiseIncrement out(level.grid);
  WhiteNoise(level).next(source, out);
  return out;
}

// ============================================================================
// Level-pair validation
// ============================================================================

namespace {

void require_pair(CouplingKind kind, const LevelParams& fine, const LevelParams& coarse) {
  const auto ratios = coupling_ratios(kind);
  const TorusGrid& fg = fine.grid;
  if (fg.n() % ratios.space != 0 || coarse.grid != fg.coarsened(ratios.space)) {
    throw std::invalid_argument(to_string(kind) + " coupling: coarse grid must be the fine grid coarsened by " +
                                std::to_string(ratios.space));
  }
  if (std::abs(coarse.tau - ratios.time * fine.tau) > 1e-12 * coarse.tau) {
    throw std::invalid_argument(to_string(kind) + " coupling: coarse tau must be " + std::to_string(ratios.time) +
                                " x fine tau");
  }
}

}  // namespace

std::unique_ptr<CoupledNoise> make_coupled_noise(CouplingKind kind, const LevelParams& fine,
                                                 const LevelParams& coarse) {
  if (kind == CouplingKind::nearest_neighbour) return std::make_unique<NearestNeighbourNoise>(fine, coarse);
  return std::make_unique<FourierNoise>(fine, coarse);
}

// ============================================================================
// Nearest-neighbour coupling
// ============================================================================

NearestNeighbourNoise::NearestNeighbourNoise(const LevelParams& fine, const LevelParams& coarse)
    : fine_(fine), coarse_(coarse), fine_scale_(std::sqrt(fine.tau / fine.grid.cell_volume())) {
  require_pair(CouplingKind::nearest_neighbour, fine, coarse);
  const int d = fine.grid.dim();
  sums_.assign(static_cast<std::size_t>(d), std::vector<double>(fine.grid.size(), 0.0));

  coarse_base_.resize(coarse.grid.size());
  std::vector<int> k(static_cast<std::size_t>(d));
  for (std::size_t c = 0; c < coarse.grid.size(); ++c) {
    coarse.grid.multi_index(c, k);
    for (int& kr : k) kr *= 2;
    coarse_base_[c] = fine.grid.flat_index(k);
  }
  for (std::size_t mask = 0; mask < (std::size_t{1} << d); ++mask) {
    std::size_t off = 0;
    for (int r = 0; r < d; ++r) {
      if (mask & (std::size_t{1} << r)) off += fine.grid.stride(r);
    }
    child_offsets_.push_back(off);
  }
}

std::size_t NearestNeighbourNoise::normals_per_fine_step() const {
  return static_cast<std::size_t>(fine_.grid.dim()) * fine_.grid.size();
}

void NearestNeighbourNoise::next_fine(GaussianSource& source, NoiseIncrement& fine) {
  if (pending_ == time_ratio()) throw std::logic_error("NearestNeighbourNoise: coarse increment not taken");
  if (fine.grid() != fine_.grid || fine.dim() != fine_.grid.dim()) fine = NoiseIncrement(fine_.grid);
  for (int r = 0; r < fine_.grid.dim(); ++r) {
    auto v = fine[r].values();
    auto& acc = sums_[static_cast<std::size_t>(r)];
    source.fill(v);
    for (std::size_t i = 0; i < v.size(); ++i) {
      acc[i] += v[i];
      v[i] *= fine_scale_;
    }
  }
  ++pending_;
}

void NearestNeighbourNoise::take_coarse(NoiseIncrement& coarse) {
  if (pending_ != time_ratio()) throw std::logic_error("NearestNeighbourNoise: coarse step incomplete");
  if (coarse.grid() != coarse_.grid || coarse.dim() != coarse_.grid.dim()) coarse = NoiseIncrement(coarse_.grid);
  const double weight = fine_scale_ / static_cast<double>(child_offsets_.size());
  for (int r = 0; r < fine_.grid.dim(); ++r) {
    auto out = coarse[r].values();
    auto& acc = sums_[static_cast<std::size_t>(r)];
    for (std::size_t c = 0; c < out.size(); ++c) {
      double s = 0.0;
      for (std::size_t off : child_offsets_) s += acc[coarse_base_[c] + off];
      out[c] = weight * s;
    }
    std::fill(acc.begin(), acc.end(), 0.0);
  }
  pending_ = 0;
}

// ============================================================================
// Fourier coupling
// ============================================================================

std::vector<std::size_t> conjugate_bins(const TorusGrid& grid) {
  std::vector<std::size_t> out(grid.size());
  std::vector<int> k(static_cast<std::size_t>(grid.dim()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.multi_index(i, k);
    for (int& kr : k) kr = -kr;
    out[i] = grid.flat_index(k);
  }
  return out;
}

namespace {

// (2π)^{-d/2} e^{iξ·origin} per bin; real on a vertex grid since origin = -π.
std::vector<double> synthesis_phase(const TorusGrid& grid) {
  if (grid.cell_centered()) throw std::invalid_argument("Fourier noise requires a vertex-centred grid");
  std::vector<double> out(grid.size());
  const double norm = std::pow(2.0 * std::numbers::pi, -0.5 * grid.dim());
  std::vector<int> k(static_cast<std::size_t>(grid.dim()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.multi_index(i, k);
    int parity = 0;
    for (int kr : k) parity += signed_wavenumber(kr, grid.n());
    out[i] = (parity % 2 == 0) ? norm : -norm;
  }
  return out;
}

double synthesize_with_phase(const TorusGrid& grid, const std::vector<Complex>& beta,
                             const std::vector<double>& phase, std::span<double> out) {
  std::vector<Complex> buf(beta.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = beta[i] * phase[i];
  SpectralTransform(grid).backward(buf);
  double max_re = 0.0;
  double max_im = 0.0;
  for (std::size_t i = 0; i < buf.size(); ++i) {
    out[i] = buf[i].real();
    max_re = std::max(max_re, std::abs(buf[i].real()));
    max_im = std::max(max_im, std::abs(buf[i].imag()));
  }
  return max_re > 0.0 ? max_im / max_re : max_im;
}

}  // namespace

double synthesize_fourier_field(const TorusGrid& grid, const std::vector<Complex>& beta, std::span<double> out) {
  return synthesize_with_phase(grid, beta, synthesis_phase(grid), out);
}

FourierNoise::FourierNoise(const LevelParams& fine, const LevelParams& coarse)
    : fine_(fine), coarse_(coarse) {
  require_pair(CouplingKind::fourier, fine, coarse);
  const TorusGrid& fg = fine.grid;
  const TorusGrid& cg = coarse.grid;
  const int d = fg.dim();
  conj_index_ = conjugate_bins(fg);
  fine_phase_ = synthesis_phase(fg);
  coarse_phase_ = synthesis_phase(cg);
  coeff_sums_.assign(static_cast<std::size_t>(d), std::vector<Complex>(fg.size()));
  normals_.resize(fg.size());

  const int nc = cg.n();
  const int nf = fg.n();
  const bool has_nyquist = nc % 2 == 0;
  coarse_sources_.resize(cg.size());
  coarse_weight_.resize(cg.size());
  std::vector<int> kc(static_cast<std::size_t>(d));
  std::vector<int> kf(static_cast<std::size_t>(d));
  for (std::size_t c = 0; c < cg.size(); ++c) {
    cg.multi_index(c, kc);
    std::vector<int> nyquist_axes;
    for (int r = 0; r < d; ++r) {
      const int xi = signed_wavenumber(kc[static_cast<std::size_t>(r)], nc);
      kf[static_cast<std::size_t>(r)] = xi;
      if (has_nyquist && xi == -nc / 2) nyquist_axes.push_back(r);
    }
    const std::size_t combos = std::size_t{1} << nyquist_axes.size();
    for (std::size_t mask = 0; mask < combos; ++mask) {
      std::vector<int> k = kf;
      for (std::size_t a = 0; a < nyquist_axes.size(); ++a) {
        if (mask & (std::size_t{1} << a)) k[static_cast<std::size_t>(nyquist_axes[a])] = nc / 2;
      }
      for (int& kr : k) kr = (kr % nf + nf) % nf;
      coarse_sources_[c].push_back(fg.flat_index(k));
    }
    coarse_weight_[c] = std::pow(2.0, -0.5 * static_cast<double>(nyquist_axes.size()));
  }
}

std::size_t FourierNoise::normals_per_fine_step() const {
  return static_cast<std::size_t>(fine_.grid.dim()) * fine_.grid.size();
}

void FourierNoise::next_fine(GaussianSource& source, NoiseIncrement& fine) {
  if (pending_ == time_ratio()) throw std::logic_error("FourierNoise: coarse increment not taken");
  const TorusGrid& fg = fine_.grid;
  if (fine.grid() != fg || fine.dim() != fg.dim()) fine = NoiseIncrement(fg);
  const double sd_real = std::sqrt(fine_.tau);
  const double sd_pair = std::sqrt(0.5 * fine_.tau);
  std::vector<Complex> beta(fg.size());
  imag_residue_ = 0.0;
  for (int r = 0; r < fg.dim(); ++r) {
    source.fill(normals_);
    std::size_t next = 0;
    for (std::size_t i = 0; i < fg.size(); ++i) {
      const std::size_t j = conj_index_[i];
      if (j == i) {
        beta[i] = Complex(sd_real * normals_[next++], 0.0);
      } else if (i < j) {
        const double a = normals_[next++];
        const double b = normals_[next++];
        beta[i] = Complex(sd_pair * a, sd_pair * b);
        beta[j] = std::conj(beta[i]);
      }
    }
    auto& acc = coeff_sums_[static_cast<std::size_t>(r)];
    for (std::size_t i = 0; i < beta.size(); ++i) acc[i] += beta[i];
    imag_residue_ = std::max(imag_residue_, synthesize_with_phase(fg, beta, fine_phase_, fine[r].values()));
  }
  ++pending_;
}

void FourierNoise::take_coarse(NoiseIncrement& coarse) {
  if (pending_ != time_ratio()) throw std::logic_error("FourierNoise: coarse step incomplete");
  const TorusGrid& cg = coarse_.grid;
  if (coarse.grid() != cg || coarse.dim() != cg.dim()) coarse = NoiseIncrement(cg);
  std::vector<Complex> gamma(cg.size());
  for (int r = 0; r < cg.dim(); ++r) {
    auto& acc = coeff_sums_[static_cast<std::size_t>(r)];
    for (std::size_t c = 0; c < cg.size(); ++c) {
      Complex s = 0.0;
      for (std::size_t f : coarse_sources_[c]) s += acc[f];
      gamma[c] = coarse_weight_[c] * s;
    }
    imag_residue_ = std::max(imag_residue_, synthesize_with_phase(cg, gamma, coarse_phase_, coarse[r].values()));
    std::fill(acc.begin(), acc.end(), Complex{});
  }
  pending_ = 0;
}

// ============================================================================
// One-shot wrappers
// ============================================================================

CoupledIncrements coupled_increments(CouplingKind kind, NoiseStream& stream, const LevelParams& fine,
                                     const LevelParams& coarse) {
  auto gen = make_coupled_noise(kind, fine, coarse);
  auto source = stream.normals();
  CoupledIncrements out;
  out.fine.resize(static_cast<std::size_t>(gen->time_ratio()));
  for (auto& inc : out.fine) {
    source.seek(stream.counter++);
    gen->next_fine(source, inc);
  }
  gen->take_coarse(out.coarse);
  return out;
}

CoupledIncrements nn_coupled_increments(NoiseStream& stream, const LevelParams& fine, const LevelParams& coarse) {
  return coupled_increments(CouplingKind::nearest_neighbour, stream, fine, coarse);
}

CoupledIncrements fourier_coupled_increments(NoiseStream& stream, const LevelParams& fine,
                                             const LevelParams& coarse) {
  return coupled_increments(CouplingKind::fourier, stream, fine, coarse);
}

// ============================================================================
// Self-test
// ============================================================================

std::vector<SelftestRow> noise_selftest(CouplingKind kind, int dim, int n_fine, std::size_t samples,
                                        std::uint64_t seed) {
  const auto ratios = coupling_ratios(kind);
  const TorusGrid fg(dim, n_fine);
  const TorusGrid cg = fg.coarsened(ratios.space);
  const double tau_f = 0.1 * fg.h() * fg.h();
  const LevelParams fine = make_level(1, fg, tau_f, ratios.time * tau_f);
  const LevelParams coarse = make_level(0, cg, ratios.time * tau_f, ratios.time * tau_f);
  const double target_f = fine.tau / fg.cell_volume();
  const double target_c = coarse.tau / cg.cell_volume();

  MomentAccumulator var_f, cov_f, var_c, cov_c, cross;
  MomentAccumulator fine_sum_sq;
  std::vector<std::size_t> coarse_children;  // fine sites feeding coarse site 0 (NN)
  auto gen = make_coupled_noise(kind, fine, coarse);
  NoiseIncrement inc(fg);
  NoiseIncrement coarse_inc(cg);
  for (std::size_t s = 0; s < samples; ++s) {
    NoiseStream stream{seed, 1, s, StreamRole::fine, StreamFamily::aux, 0};
    auto source = stream.normals();
    double time_sum0 = 0.0;
    for (int m = 0; m < gen->time_ratio(); ++m) {
      source.seek(stream.counter++);
      gen->next_fine(source, inc);
      if (m == 0) {
        var_f.push(inc[0][0] * inc[0][0] / target_f);
        cov_f.push(inc[0][0] * inc[0][1] / target_f);
      }
      time_sum0 += inc[0][0];
    }
    fine_sum_sq.push(time_sum0 * time_sum0 / (ratios.time * target_f));
    gen->take_coarse(coarse_inc);
    var_c.push(coarse_inc[0][0] * coarse_inc[0][0] / target_c);
    cov_c.push(coarse_inc[0][0] * coarse_inc[0][1] / target_c);
    cross.push(coarse_inc[0][0] * time_sum0 / std::sqrt(target_c * ratios.time * target_f));
  }
  const std::string name = to_string(kind);
  auto row = [&](const char* q, const MomentAccumulator& a, double target) {
    return SelftestRow{name, q, a.mean(), target, a.standard_error()};
  };
  // Correlation between the coarse increment at site 0 and the time-summed
  // fine increment at the same point.
  double expected_cross = 0.0;
  if (kind == CouplingKind::nearest_neighbour) {
    expected_cross = std::pow(2.0, -0.5 * dim);
  } else {
    // Fourier: the coarse field is the low-pass part of the fine sum; its
    // covariance with the fine sum equals its own variance except on the
    // Nyquist-merged modes.
    double s = 0.0;
    const int nc = cg.n();
    std::vector<int> k(static_cast<std::size_t>(dim));
    for (std::size_t c = 0; c < cg.size(); ++c) {
      cg.multi_index(c, k);
      int nyq = 0;
      for (int kr : k) {
        if (nc % 2 == 0 && signed_wavenumber(kr, nc) == -nc / 2) ++nyq;
      }
      s += std::pow(2.0, 0.5 * nyq);
    }
    expected_cross = s / std::pow(2.0 * std::numbers::pi, dim) * ratios.time * fine.tau /
                     std::sqrt(target_c * ratios.time * target_f);
  }
  return {row("fine_site_variance_ratio", var_f, 1.0), row("fine_neighbour_covariance_ratio", cov_f, 0.0),
          row("fine_time_sum_variance_ratio", fine_sum_sq, 1.0),
          row("coarse_site_variance_ratio", var_c, 1.0), row("coarse_neighbour_covariance_ratio", cov_c, 0.0),
          row("fine_coarse_correlation", cross, expected_cross)};
}

}  // namespace dkmlmc
