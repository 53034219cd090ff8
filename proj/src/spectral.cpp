#include "dkmlmc/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <tuple>

namespace dkmlmc {

namespace {

// FFTW's planner is not thread-safe; plans live for the whole process.
fftw_plan cached_plan(int dim, int n, int sign) {
  static std::mutex mutex;
  static std::map<std::tuple<int, int, int>, fftw_plan> plans;
  std::lock_guard lock(mutex);
  const auto key = std::make_tuple(dim, n, sign);
  if (auto it = plans.find(key); it != plans.end()) return it->second;

  std::vector<int> dims(static_cast<std::size_t>(dim), n);
  std::size_t total = 1;
  for (int r = 0; r < dim; ++r) total *= static_cast<std::size_t>(n);
  auto* scratch = fftw_alloc_complex(total);
  fftw_plan plan = fftw_plan_dft(dim, dims.data(), scratch, scratch, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(scratch);
  if (plan == nullptr) throw std::runtime_error("FFTW planning failed");
  plans.emplace(key, plan);
  return plan;
}

}  // namespace

SpectralTransform::SpectralTransform(const TorusGrid& grid)
    : grid_(grid),
      forward_plan_(cached_plan(grid.dim(), grid.n(), FFTW_FORWARD)),
      backward_plan_(cached_plan(grid.dim(), grid.n(), FFTW_BACKWARD)) {}

void SpectralTransform::forward(std::span<Complex> data) const {
  if (data.size() != grid_.size()) throw std::invalid_argument("SpectralTransform: size mismatch");
  auto* p = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(static_cast<fftw_plan>(forward_plan_), p, p);
}

void SpectralTransform::backward(std::span<Complex> data) const {
  if (data.size() != grid_.size()) throw std::invalid_argument("SpectralTransform: size mismatch");
  auto* p = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(static_cast<fftw_plan>(backward_plan_), p, p);
}

std::vector<double> laplacian_symbol(const TorusGrid& grid) {
  const int n = grid.n();
  std::vector<double> axis(static_cast<std::size_t>(n));
  const double inv_h2 = 1.0 / (grid.h() * grid.h());
  for (int k = 0; k < n; ++k) {
    axis[static_cast<std::size_t>(k)] = -(2.0 - 2.0 * std::cos(2.0 * std::numbers::pi * k / n)) * inv_h2;
  }
  std::vector<double> symbol(grid.size(), 0.0);
  std::vector<int> k(static_cast<std::size_t>(grid.dim()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.multi_index(i, k);
    double s = 0.0;
    for (int kr : k) s += axis[static_cast<std::size_t>(kr)];
    symbol[i] = s;
  }
  return symbol;
}

}  // namespace dkmlmc
