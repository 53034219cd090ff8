#include "dkmlmc/grid.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dkmlmc {

namespace {

void require_same_grid(const TorusGrid& a, const TorusGrid& b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": grid mismatch");
  }
}

}  // namespace

// ============================================================================
// TorusGrid
// ============================================================================

TorusGrid::TorusGrid(int dim, int points_per_axis, bool cell_centered)
    : dim_(dim), n_(points_per_axis), cell_centered_(cell_centered) {
  if (dim < 1) throw std::invalid_argument("TorusGrid: dimension must be >= 1");
  if (points_per_axis < 2) throw std::invalid_argument("TorusGrid: need at least 2 points per axis");
  h_ = 2.0 * std::numbers::pi / n_;
  origin_ = -std::numbers::pi + (cell_centered_ ? 0.5 * h_ : 0.0);
  size_ = 1;
  cell_volume_ = 1.0;
  for (int r = 0; r < dim_; ++r) {
    if (size_ > (std::size_t{1} << 40) / static_cast<std::size_t>(n_)) {
      throw std::invalid_argument("TorusGrid: too many points");
    }
    size_ *= static_cast<std::size_t>(n_);
    cell_volume_ *= h_;
  }
}

TorusGrid make_grid(int dim, int points_per_axis, bool cell_centered) {
  return TorusGrid(dim, points_per_axis, cell_centered);
}

std::size_t TorusGrid::stride(int axis) const {
  std::size_t s = 1;
  for (int r = 0; r < axis; ++r) s *= static_cast<std::size_t>(n_);
  return s;
}

void TorusGrid::coordinates(std::size_t index, std::span<double> x) const {
  for (int r = 0; r < dim_; ++r) {
    x[static_cast<std::size_t>(r)] = coordinate(static_cast<int>(index % static_cast<std::size_t>(n_)));
    index /= static_cast<std::size_t>(n_);
  }
}

void TorusGrid::multi_index(std::size_t index, std::span<int> k) const {
  for (int r = 0; r < dim_; ++r) {
    k[static_cast<std::size_t>(r)] = static_cast<int>(index % static_cast<std::size_t>(n_));
    index /= static_cast<std::size_t>(n_);
  }
}

std::size_t TorusGrid::flat_index(std::span<const int> k) const {
  std::size_t index = 0;
  for (int r = dim_ - 1; r >= 0; --r) {
    int kr = k[static_cast<std::size_t>(r)] % n_;
    if (kr < 0) kr += n_;
    index = index * static_cast<std::size_t>(n_) + static_cast<std::size_t>(kr);
  }
  return index;
}

TorusGrid TorusGrid::coarsened(int ratio) const {
  if (ratio < 1 || n_ % ratio != 0) {
    throw std::invalid_argument("TorusGrid::coarsened: n not divisible by ratio");
  }
  return TorusGrid(dim_, n_ / ratio, cell_centered_);
}

bool TorusGrid::operator==(const TorusGrid& other) const {
  return dim_ == other.dim_ && n_ == other.n_ && cell_centered_ == other.cell_centered_;
}

// ============================================================================
// Field / VectorField
// ============================================================================

Field::Field(const TorusGrid& grid, double value) : grid_(grid), values_(grid.size(), value) {}

Field::Field(const TorusGrid& grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.size()) {
    throw std::invalid_argument("Field: value count does not match grid size");
  }
}

double Field::sum() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }
double Field::min() const { return *std::min_element(values_.begin(), values_.end()); }
double Field::max() const { return *std::max_element(values_.begin(), values_.end()); }

Field& Field::operator+=(const Field& other) {
  require_same_grid(grid_, other.grid_, "Field::operator+=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

Field& Field::operator-=(const Field& other) {
  require_same_grid(grid_, other.grid_, "Field::operator-=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

Field& Field::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

Field operator+(Field a, const Field& b) { return a += b; }
Field operator-(Field a, const Field& b) { return a -= b; }
Field operator*(double s, Field a) { return a *= s; }

VectorField::VectorField(const TorusGrid& grid)
    : grid_(grid), components_(static_cast<std::size_t>(grid.dim()), Field(grid)) {}

// ============================================================================
// Inner product, interpolation
// ============================================================================

double inner(const Field& f, const Field& g) {
  require_same_grid(f.grid(), g.grid(), "inner");
  double s = 0.0;
  const auto a = f.values();
  const auto b = g.values();
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s * f.grid().cell_volume();
}

double norm(const Field& f) { return std::sqrt(inner(f, f)); }

Field interpolate(const TorusFunction& f, const TorusGrid& grid) {
  Field out(grid);
  std::vector<double> x(static_cast<std::size_t>(grid.dim()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.coordinates(i, x);
    out[i] = f(x);
  }
  return out;
}

// ============================================================================
// Stencils
// ============================================================================

StencilWalker::StencilWalker(const TorusGrid& grid) : grid_(grid) {
  const std::size_t n = static_cast<std::size_t>(grid.n());
  wrap_plus_.resize(n);
  wrap_minus_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    wrap_plus_[k] = (k + 1) % n;
    wrap_minus_[k] = (k + n - 1) % n;
  }
}

void laplacian(const Field& f, Field& out) {
  const TorusGrid& grid = f.grid();
  if (out.grid() != grid) out = Field(grid);
  const StencilWalker walker(grid);
  const auto in = f.values();
  auto res = out.values();
  const double center = -2.0 * grid.dim();
  for (std::size_t i = 0; i < in.size(); ++i) res[i] = center * in[i];
  for (int r = 0; r < grid.dim(); ++r) {
    walker.for_each_axis(r, [&](std::size_t i, std::size_t p, std::size_t m) { res[i] += in[p] + in[m]; });
  }
  const double inv_h2 = 1.0 / (grid.h() * grid.h());
  for (double& v : res) v *= inv_h2;
}

Field laplacian(const Field& f) {
  Field out(f.grid());
  laplacian(f, out);
  return out;
}

void divergence(const VectorField& v, Field& out) {
  const TorusGrid& grid = v.grid();
  if (out.grid() != grid) out = Field(grid);
  const StencilWalker walker(grid);
  auto res = out.values();
  std::fill(res.begin(), res.end(), 0.0);
  for (int r = 0; r < grid.dim(); ++r) {
    const auto c = v[r].values();
    walker.for_each_axis(r, [&](std::size_t i, std::size_t p, std::size_t m) { res[i] += c[p] - c[m]; });
  }
  const double inv_2h = 0.5 / grid.h();
  for (double& x : res) x *= inv_2h;
}

Field divergence(const VectorField& v) {
  Field out(v.grid());
  divergence(v, out);
  return out;
}

VectorField gradient(const Field& f) {
  const TorusGrid& grid = f.grid();
  VectorField g(grid);
  const StencilWalker walker(grid);
  const auto in = f.values();
  const double inv_2h = 0.5 / grid.h();
  for (int r = 0; r < grid.dim(); ++r) {
    auto out = g[r].values();
    walker.for_each_axis(r, [&](std::size_t i, std::size_t p, std::size_t m) { out[i] = (in[p] - in[m]) * inv_2h; });
  }
  return g;
}

// ============================================================================
// Field files
// ============================================================================

namespace {

constexpr std::array<char, 8> kFieldMagic = {'D', 'K', 'F', 'I', 'E', 'L', 'D', '1'};

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace

void write_field_binary(const Field& f, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  const std::int32_t header[2] = {f.grid().dim(), f.grid().n()};
  os.write(kFieldMagic.data(), kFieldMagic.size());
  os.write(reinterpret_cast<const char*>(header), sizeof(header));
  os.write(reinterpret_cast<const char*>(f.values().data()),
           static_cast<std::streamsize>(f.size() * sizeof(double)));
  if (!os) throw std::runtime_error("write failed: " + path);
}

void write_field_csv(const Field& f, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << "d,n\n" << f.grid().dim() << ',' << f.grid().n() << "\nvalue\n";
  for (double v : f.values()) os << format_double(v) << '\n';
  if (!os) throw std::runtime_error("write failed: " + path);
}

Field read_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (is && magic == kFieldMagic) {
    std::int32_t header[2] = {0, 0};
    is.read(reinterpret_cast<char*>(header), sizeof(header));
    const TorusGrid grid(header[0], header[1]);
    std::vector<double> values(grid.size());
    is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!is) throw std::runtime_error("truncated field file: " + path);
    return Field(grid, std::move(values));
  }
  is.clear();
  is.seekg(0);
  std::string line;
  std::getline(is, line);
  if (line != "d,n") throw std::runtime_error("unrecognised field file: " + path);
  int d = 0;
  int n = 0;
  char comma = 0;
  std::getline(is, line);
  std::istringstream(line) >> d >> comma >> n;
  std::getline(is, line);
  const TorusGrid grid(d, n);
  std::vector<double> values;
  values.reserve(grid.size());
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
    if (ec != std::errc{}) throw std::runtime_error("bad value in " + path + ": " + line);
    values.push_back(v);
  }
  return Field(grid, std::move(values));
}

}  // namespace dkmlmc
