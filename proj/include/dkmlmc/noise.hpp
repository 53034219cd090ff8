#pragma once

#include <complex>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dkmlmc/grid.hpp"
#include "dkmlmc/pde.hpp"
#include "dkmlmc/rng.hpp"

namespace dkmlmc {

enum class CouplingKind { nearest_neighbour, fourier };

struct CouplingRatios {
  int space = 2;
  /// κ_t = τ_{ℓ-1}/τ_ℓ = space²
  int time = 4;
};

CouplingRatios coupling_ratios(CouplingKind kind);
std::string to_string(CouplingKind kind);
/// Accepts "nn" / "nearest_neighbour" and "fourier".
CouplingKind parse_coupling(const std::string& name);

enum class StreamRole { single, fine, coarse };

/// Independent sample families drawn from one master seed.
enum class StreamFamily : std::uint32_t { mlmc = 0, mc = 1, aux = 2 };

/// Identity of one replicate's random input.
///
/// All Gaussians of a replicate come from one Philox key derived from
/// (master_seed, level, replicate, family); `counter` selects the fine time
/// step.  A coupled pair uses the key of its fine level, and its coarse
/// increments are built from the same Gaussians.
struct NoiseStream {
  std::uint64_t master_seed = 0;
  int level = 0;
  std::uint64_t replicate = 0;
  StreamRole role = StreamRole::single;
  StreamFamily family = StreamFamily::mlmc;
  std::uint64_t counter = 0;

  PhiloxKey key() const;
  /// Normal stream for the dynamical noise (domain 0).
  PhiloxNormalSource normals() const;
  /// Uniform stream for initial particle positions (domain 1).
  PhiloxUniformSource uniforms() const;
};

using NoiseIncrement = VectorField;

/// Per-step white noise on one level: i.i.d. N(0, τ h^{-d}) per site and component.
class WhiteNoise {
public:
  explicit WhiteNoise(const LevelParams& level);
  void next(GaussianSource& source, NoiseIncrement& out);
  std::size_t normals_per_step() const;

private:
  LevelParams level_;
  double scale_;
};

/// Streaming coupled generator for a (fine, coarse) level pair.
///
/// Each `next_fine` draws one fine increment and folds its Gaussians into the
/// coarse aggregate; after `time_ratio()` fine steps `take_coarse` emits the
/// coarse increment and resets the aggregate.  Outputs are linear in the
/// Gaussians drawn from the source.
class CoupledNoise {
public:
  virtual ~CoupledNoise() = default;
  virtual int time_ratio() const = 0;
  virtual std::size_t normals_per_fine_step() const = 0;
  virtual void next_fine(GaussianSource& source, NoiseIncrement& fine) = 0;
  virtual void take_coarse(NoiseIncrement& coarse) = 0;
};

/// Validates the level relation and builds the generator.
std::unique_ptr<CoupledNoise> make_coupled_noise(CouplingKind kind, const LevelParams& fine,
                                                 const LevelParams& coarse);

/// Right-most nearest-neighbour aggregation: the coarse value at y is the
/// average over the 2^d fine points {2y + v : v ∈ {0,1}^d} of the time-summed
/// fine increments.
class NearestNeighbourNoise final : public CoupledNoise {
public:
  NearestNeighbourNoise(const LevelParams& fine, const LevelParams& coarse);
  int time_ratio() const override { return 4; }
  std::size_t normals_per_fine_step() const override;
  void next_fine(GaussianSource& source, NoiseIncrement& fine) override;
  void take_coarse(NoiseIncrement& coarse) override;

private:
  LevelParams fine_;
  LevelParams coarse_;
  double fine_scale_;
  int pending_ = 0;
  std::vector<std::vector<double>> sums_;
  std::vector<std::size_t> coarse_base_;
  std::vector<std::size_t> child_offsets_;
  std::vector<double> normals_;
};

/// Fourier coupling: fine increments are Σ_ξ F_ξ Δβ_ξ with Hermitian complex
/// coefficients; the coarse increment reuses the time-summed coefficients of
/// its own frequency set.  Where an axis sits at the coarse Nyquist frequency
/// the two fine frequencies ±n_c/2 alias onto one coarse mode and are merged
/// with weight 2^{-1/2} per such axis, which keeps the coarse field real and
/// exactly white.
class FourierNoise final : public CoupledNoise {
public:
  FourierNoise(const LevelParams& fine, const LevelParams& coarse);
  int time_ratio() const override { return 9; }
  std::size_t normals_per_fine_step() const override;
  void next_fine(GaussianSource& source, NoiseIncrement& fine) override;
  void take_coarse(NoiseIncrement& coarse) override;

  /// max |Im| / max |Re| over the last synthesised field (before dropping Im).
  double last_imaginary_residue() const { return imag_residue_; }

private:
  LevelParams fine_;
  LevelParams coarse_;
  int pending_ = 0;
  std::vector<std::size_t> conj_index_;
  std::vector<double> fine_phase_;
  std::vector<double> coarse_phase_;
  // coarse flat index -> (fine flat indices, weight)
  std::vector<std::vector<std::size_t>> coarse_sources_;
  std::vector<double> coarse_weight_;
  std::vector<std::vector<std::complex<double>>> coeff_sums_;
  std::vector<double> normals_;
  double imag_residue_ = 0.0;
};

/// Synthesises one white increment on a vertex grid from Hermitian
/// coefficients β (per flat DFT bin): ΔW(x) = Σ_ξ (2π)^{-d/2} e^{iξ·x} β_ξ.
/// Returns max |Im| / max |Re|.
double synthesize_fourier_field(const TorusGrid& grid, const std::vector<std::complex<double>>& beta,
                                std::span<double> out);

/// Flat index of the frequency -ξ for every DFT bin of `grid`.
std::vector<std::size_t> conjugate_bins(const TorusGrid& grid);

NoiseIncrement white_increment(NoiseStream& stream, const LevelParams& level);

struct CoupledIncrements {
  std::vector<NoiseIncrement> fine;
  NoiseIncrement coarse;
};

CoupledIncrements coupled_increments(CouplingKind kind, NoiseStream& stream, const LevelParams& fine,
                                     const LevelParams& coarse);
CoupledIncrements nn_coupled_increments(NoiseStream& stream, const LevelParams& fine, const LevelParams& coarse);
CoupledIncrements fourier_coupled_increments(NoiseStream& stream, const LevelParams& fine,
                                             const LevelParams& coarse);

/// Sampled covariance diagnostics for one coupling.
struct SelftestRow {
  std::string coupling;
  std::string quantity;
  double value = 0.0;
  double target = 0.0;
  double standard_error = 0.0;
};

std::vector<SelftestRow> noise_selftest(CouplingKind kind, int dim, int n_fine, std::size_t samples,
                                        std::uint64_t seed);

}  // namespace dkmlmc
