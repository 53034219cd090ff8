#pragma once

#include <complex>
#include <span>
#include <vector>

#include "dkmlmc/grid.hpp"

namespace dkmlmc {

using Complex = std::complex<double>;

/// In-place d-dimensional DFT on a torus grid, backed by FFTW.
///
/// Plans are created once per (d, n) and shared; execution on caller-owned
/// buffers is thread-safe.  Neither direction is normalised.
class SpectralTransform {
public:
  explicit SpectralTransform(const TorusGrid& grid);

  /// X_k = Σ_j x_j e^{-2πi jk/n}
  void forward(std::span<Complex> data) const;
  /// x_j = Σ_k X_k e^{+2πi jk/n}
  void backward(std::span<Complex> data) const;

  const TorusGrid& grid() const { return grid_; }

private:
  TorusGrid grid_;
  void* forward_plan_ = nullptr;
  void* backward_plan_ = nullptr;
};

/// Eigenvalue of Δ_h for the discrete Fourier mode with flat index `k`
/// (per-axis wavenumbers in 0..n-1): -Σ_j (2 - 2cos(2π k_j / n)) / h².
std::vector<double> laplacian_symbol(const TorusGrid& grid);

/// Signed wavenumber in {-n/2, ..., n/2 - 1} (for even n; {-(n-1)/2..(n-1)/2} for odd n)
/// corresponding to DFT bin k.
inline int signed_wavenumber(int k, int n) { return k >= (n + 1) / 2 ? k - n : k; }

}  // namespace dkmlmc
