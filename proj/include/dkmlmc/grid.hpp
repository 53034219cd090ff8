#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace dkmlmc {

/// Uniform periodic lattice on the d-torus [-π, π)^d.
///
/// Points are x_k = origin + k·h per axis with h = 2π/n.  The default origin is
/// -π; the cell-centred variant shifts every point by h/2, which makes coarse
/// points the barycentres of their 2^d right-most fine neighbours.
class TorusGrid {
public:
  TorusGrid() = default;
  TorusGrid(int dim, int points_per_axis, bool cell_centered = false);

  int dim() const { return dim_; }
  int n() const { return n_; }
  double h() const { return h_; }
  double origin() const { return origin_; }
  bool cell_centered() const { return cell_centered_; }

  /// n^d
  std::size_t size() const { return size_; }
  /// h^d, the quadrature weight of the discrete inner product.
  double cell_volume() const { return cell_volume_; }
  /// Flat-index stride of axis r (axis 0 is fastest).
  std::size_t stride(int axis) const;

  double coordinate(int k) const { return origin_ + k * h_; }
  void coordinates(std::size_t index, std::span<double> x) const;
  void multi_index(std::size_t index, std::span<int> k) const;
  std::size_t flat_index(std::span<const int> k) const;

  /// Grid coarsened by `ratio` per axis (same origin convention).
  TorusGrid coarsened(int ratio) const;

  bool operator==(const TorusGrid& other) const;
  bool operator!=(const TorusGrid& other) const { return !(*this == other); }

private:
  int dim_ = 1;
  int n_ = 2;
  bool cell_centered_ = false;
  double h_ = 0.0;
  double origin_ = 0.0;
  double cell_volume_ = 0.0;
  std::size_t size_ = 0;
};

TorusGrid make_grid(int dim, int points_per_axis, bool cell_centered = false);

/// Scalar grid function, lexicographic layout with axis 0 fastest.
class Field {
public:
  Field() = default;
  explicit Field(const TorusGrid& grid, double value = 0.0);
  Field(const TorusGrid& grid, std::vector<double> values);

  const TorusGrid& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  double sum() const;
  double mass() const { return sum() * grid_.cell_volume(); }
  double min() const;
  double max() const;

  Field& operator+=(const Field& other);
  Field& operator-=(const Field& other);
  Field& operator*=(double s);

private:
  TorusGrid grid_;
  std::vector<double> values_;
};

Field operator+(Field a, const Field& b);
Field operator-(Field a, const Field& b);
Field operator*(double s, Field a);

/// d components, one per canonical direction.
class VectorField {
public:
  VectorField() = default;
  explicit VectorField(const TorusGrid& grid);

  const TorusGrid& grid() const { return grid_; }
  int dim() const { return static_cast<int>(components_.size()); }
  const Field& operator[](int r) const { return components_[static_cast<std::size_t>(r)]; }
  Field& operator[](int r) { return components_[static_cast<std::size_t>(r)]; }

private:
  TorusGrid grid_;
  std::vector<Field> components_;
};

using TorusFunction = std::function<double(std::span<const double>)>;

/// (f, g)_h = h^d Σ_x f(x) g(x)
double inner(const Field& f, const Field& g);
double norm(const Field& f);

/// Pointwise interpolation I_h.
Field interpolate(const TorusFunction& f, const TorusGrid& grid);

/// (Δ_h f)(x) = (-2d f(x) + Σ_{y~x} f(y)) / h²
Field laplacian(const Field& f);
void laplacian(const Field& f, Field& out);

/// Central-difference divergence Σ_r ([v]_r(x+h f_r) - [v]_r(x-h f_r)) / 2h.
Field divergence(const VectorField& v);
void divergence(const VectorField& v, Field& out);

/// Central-difference gradient; minus the adjoint of `divergence`.
VectorField gradient(const Field& f);

/// Periodic neighbour tables for one axis of a grid.
///
/// Stencil kernels walk the grid as n^{d-1} contiguous lines along axis 0;
/// `line_plus/line_minus` give neighbour line offsets along axes >= 1.
class StencilWalker {
public:
  explicit StencilWalker(const TorusGrid& grid);

  /// Calls fn(i, plus, minus) for every flat index i, with plus/minus the
  /// neighbour indices along `axis`.
  template <class Fn>
  void for_each_axis(int axis, Fn&& fn) const;

  const TorusGrid& grid() const { return grid_; }

private:
  TorusGrid grid_;
  std::vector<std::size_t> wrap_plus_;
  std::vector<std::size_t> wrap_minus_;
};

template <class Fn>
void StencilWalker::for_each_axis(int axis, Fn&& fn) const {
  const std::size_t n = static_cast<std::size_t>(grid_.n());
  const std::size_t total = grid_.size();
  if (axis == 0) {
    for (std::size_t base = 0; base < total; base += n) {
      for (std::size_t i0 = 0; i0 < n; ++i0) {
        fn(base + i0, base + wrap_plus_[i0], base + wrap_minus_[i0]);
      }
    }
    return;
  }
  const std::size_t stride = grid_.stride(axis);
  const std::size_t block = stride * n;
  for (std::size_t outer = 0; outer < total; outer += block) {
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t row = outer + k * stride;
      const std::size_t row_plus = outer + wrap_plus_[k] * stride;
      const std::size_t row_minus = outer + wrap_minus_[k] * stride;
      for (std::size_t j = 0; j < stride; ++j) {
        fn(row + j, row_plus + j, row_minus + j);
      }
    }
  }
}

// ============================================================================
// Field files
//
// Binary: 8-byte magic "DKFIELD1", int32 d, int32 n, n^d little-endian
// float64 values in flat layout (axis 0 fastest).
// CSV: line "d,n", line "<d>,<n>", line "value", then n^d values, one per line.
// ============================================================================

void write_field_binary(const Field& f, const std::string& path);
void write_field_csv(const Field& f, const std::string& path);
/// Reads either format (detected from the magic bytes).
Field read_field(const std::string& path);

}  // namespace dkmlmc
