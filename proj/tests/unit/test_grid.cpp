#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>

#include "dkmlmc/grid.hpp"
#include "dkmlmc/spectral.hpp"

using namespace dkmlmc;

namespace {

Field random_field(const TorusGrid& g, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Field f(g);
  for (double& v : f.values()) v = u(rng);
  return f;
}

}  // namespace

TEST_SUITE("grid") {
  TEST_CASE("lattice geometry") {
    const TorusGrid g(2, 8);
    CHECK(g.size() == 64);
    CHECK(g.h() == doctest::Approx(2 * std::numbers::pi / 8));
    CHECK(g.coordinate(0) == doctest::Approx(-std::numbers::pi));
    CHECK(g.cell_volume() == doctest::Approx(g.h() * g.h()));
    std::array<int, 2> k{3, 5};
    const std::size_t idx = g.flat_index(k);
    CHECK(idx == 3 + 8 * 5);
    std::array<int, 2> back{};
    g.multi_index(idx, back);
    CHECK(back == k);

    const TorusGrid cc(2, 8, true);
    CHECK(cc.coordinate(0) == doctest::Approx(-std::numbers::pi + cc.h() / 2));
    const TorusGrid coarse = cc.coarsened(2);
    CHECK(coarse.n() == 4);
    // cell-centred coarse point = barycentre of fine points 2y and 2y+1
    CHECK(coarse.coordinate(1) == doctest::Approx(0.5 * (cc.coordinate(2) + cc.coordinate(3))));
  }

  TEST_CASE("inner product weights") {
    const TorusGrid g(3, 4);
    const Field one(g, 1.0);
    CHECK(inner(one, one) == doctest::Approx(std::pow(2 * std::numbers::pi, 3)));
    CHECK(one.mass() == doctest::Approx(std::pow(2 * std::numbers::pi, 3)));
  }

  TEST_CASE("discrete Laplacian eigenvalues on Fourier modes") {
    for (int d = 1; d <= 3; ++d) {
      const TorusGrid g(d, 6);
      const int kx = 2;
      Field f(g);
      std::vector<double> x(static_cast<std::size_t>(d));
      for (std::size_t i = 0; i < g.size(); ++i) {
        g.coordinates(i, x);
        f[i] = std::cos(kx * x[0]) + (d > 1 ? std::sin(x[static_cast<std::size_t>(d) - 1]) : 0.0);
      }
      const Field lap = laplacian(f);
      const double h = g.h();
      const double lam2 = -(2 - 2 * std::cos(kx * h)) / (h * h);
      const double lam1 = -(2 - 2 * std::cos(h)) / (h * h);
      for (std::size_t i = 0; i < g.size(); ++i) {
        g.coordinates(i, x);
        const double expect =
            lam2 * std::cos(kx * x[0]) + (d > 1 ? lam1 * std::sin(x[static_cast<std::size_t>(d) - 1]) : 0.0);
        CHECK(lap[i] == doctest::Approx(expect).epsilon(1e-12).scale(10));
      }
    }
  }

  TEST_CASE("gradient is minus the adjoint of divergence") {
    const TorusGrid g(2, 7);
    const Field f = random_field(g, 1);
    VectorField v(g);
    v[0] = random_field(g, 2);
    v[1] = random_field(g, 3);
    const VectorField gf = gradient(f);
    const double lhs = inner(gf[0], v[0]) + inner(gf[1], v[1]);
    const double rhs = -inner(f, divergence(v));
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }

  TEST_CASE("divergence and Laplacian conserve the sum") {
    const TorusGrid g(3, 5);
    VectorField v(g);
    for (int r = 0; r < 3; ++r) v[r] = random_field(g, 10 + static_cast<unsigned>(r));
    CHECK(std::abs(divergence(v).sum()) < 1e-12);
    CHECK(std::abs(laplacian(random_field(g, 4)).sum()) < 1e-10);
  }

  TEST_CASE("field files round-trip") {
    const TorusGrid g(2, 5);
    const Field f = random_field(g, 9);
    const auto dir = std::filesystem::temp_directory_path();
    for (const char* ext : {"bin", "csv"}) {
      const auto path = (dir / (std::string("dkmlmc_field_test.") + ext)).string();
      if (std::string(ext) == "bin") {
        write_field_binary(f, path);
      } else {
        write_field_csv(f, path);
      }
      const Field g2 = read_field(path);
      REQUIRE(g2.grid() == g);
      for (std::size_t i = 0; i < f.size(); ++i) CHECK(g2[i] == f[i]);
      std::filesystem::remove(path);
    }
  }
}

TEST_SUITE("spectral") {
  TEST_CASE("FFT matches a naive DFT") {
    const TorusGrid g(2, 6);
    const Field f = random_field(g, 5);
    std::vector<Complex> buf(f.values().begin(), f.values().end());
    SpectralTransform(g).forward(buf);
    const int n = g.n();
    for (int k1 = 0; k1 < n; ++k1) {
      for (int k0 = 0; k0 < n; ++k0) {
        Complex s = 0;
        for (int j1 = 0; j1 < n; ++j1) {
          for (int j0 = 0; j0 < n; ++j0) {
            s += f[static_cast<std::size_t>(j0 + n * j1)] *
                 std::exp(Complex(0, -2 * std::numbers::pi * (k0 * j0 + k1 * j1) / n));
          }
        }
        const Complex got = buf[static_cast<std::size_t>(k0 + n * k1)];
        CHECK(std::abs(got - s) < 1e-12);
      }
    }
  }

  TEST_CASE("Laplacian symbol agrees with the stencil") {
    const TorusGrid g(3, 4);
    const Field f = random_field(g, 6);
    std::vector<Complex> buf(f.values().begin(), f.values().end());
    const SpectralTransform fft(g);
    fft.forward(buf);
    const auto sym = laplacian_symbol(g);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] *= sym[i] / static_cast<double>(g.size());
    fft.backward(buf);
    const Field lap = laplacian(f);
    for (std::size_t i = 0; i < buf.size(); ++i) CHECK(buf[i].real() == doctest::Approx(lap[i]).scale(1));
  }

  TEST_CASE("signed wavenumbers") {
    CHECK(signed_wavenumber(0, 6) == 0);
    CHECK(signed_wavenumber(2, 6) == 2);
    CHECK(signed_wavenumber(3, 6) == -3);
    CHECK(signed_wavenumber(5, 6) == -1);
    CHECK(signed_wavenumber(4, 9) == 4);
    CHECK(signed_wavenumber(5, 9) == -4);
  }
}
