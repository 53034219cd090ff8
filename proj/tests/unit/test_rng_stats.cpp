#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "dkmlmc/rng.hpp"
#include "dkmlmc/stats.hpp"

using namespace dkmlmc;

TEST_SUITE("rng") {
  TEST_CASE("Philox4x32-10 known answers") {
    CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
  }

  TEST_CASE("derived keys are distinct across every coordinate") {
    std::set<std::pair<std::uint32_t, std::uint32_t>> keys;
    int count = 0;
    for (std::uint64_t seed : {0ull, 1ull}) {
      for (int level = 0; level < 6; ++level) {
        for (std::uint64_t rep = 0; rep < 50; ++rep) {
          for (std::uint32_t fam = 0; fam < 3; ++fam) {
            const auto k = derive_key(seed, level, rep, fam);
            keys.insert({k[0], k[1]});
            ++count;
          }
        }
      }
    }
    CHECK(keys.size() == static_cast<std::size_t>(count));
  }

  TEST_CASE("seek makes sequences addressable") {
    PhiloxNormalSource a(derive_key(3, 1, 7, 0), 0);
    PhiloxNormalSource b(derive_key(3, 1, 7, 0), 0);
    std::vector<double> x(37);
    std::vector<double> y(37);
    a.seek(5);
    a.fill(x);
    b.seek(4);
    b.fill(y);
    b.seek(5);
    b.fill(y);
    CHECK(x == y);
    a.seek(6);
    a.fill(y);
    CHECK(x != y);
  }

  TEST_CASE("ziggurat normals match N(0,1)") {
    PhiloxNormalSource src(derive_key(11, 0, 0, 2), 0);
    const std::size_t n = 400000;
    std::vector<double> z(n);
    src.fill(z);
    MomentAccumulator acc(true);
    for (double v : z) acc.push(v);
    CHECK(std::abs(acc.mean()) < 5.0 / std::sqrt(n));
    CHECK(std::abs(acc.variance() - 1.0) < 5.0 * std::sqrt(2.0 / n));
    CHECK(std::abs(acc.skewness()) < 5.0 * std::sqrt(6.0 / n));
    CHECK(std::abs(acc.kurtosis() - 3.0) < 5.0 * std::sqrt(24.0 / n));

    // Kolmogorov-Smirnov against the exact CDF
    std::sort(z.begin(), z.end());
    double D = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double F = 0.5 * std::erfc(-z[i] / std::sqrt(2.0));
      D = std::max({D, F - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - F});
    }
    CHECK(D * std::sqrt(static_cast<double>(n)) < 1.95);  // 0.1% critical value

    // tail mass beyond the base layer
    const auto tail = std::count_if(z.begin(), z.end(), [](double v) { return std::abs(v) > 3.6541528853610088; });
    const double p = std::erfc(3.6541528853610088 / std::sqrt(2.0));
    CHECK(std::abs(static_cast<double>(tail) - p * n) < 5.0 * std::sqrt(p * n));
  }

  TEST_CASE("uniforms lie in (0,1) with the right moments") {
    PhiloxUniformSource u(derive_key(2, 0, 0, 0), 1);
    MomentAccumulator acc;
    for (int i = 0; i < 100000; ++i) {
      const double v = u.next();
      REQUIRE(v > 0.0);
      REQUIRE(v < 1.0);
      acc.push(v);
    }
    CHECK(acc.mean() == doctest::Approx(0.5).epsilon(0.01));
    CHECK(acc.variance() == doctest::Approx(1.0 / 12).epsilon(0.02));
    CHECK(to_unit_open(0, 0) > 0.0);
    CHECK(to_unit_open(0xffffffff, 0xffffffff) < 1.0);
  }
}

TEST_SUITE("stats") {
  TEST_CASE("streaming moments agree with two-pass formulas") {
    std::mt19937_64 rng(4);
    std::gamma_distribution<double> g(2.0, 1.5);
    std::vector<double> x(5000);
    for (double& v : x) v = g(rng);
    MomentAccumulator acc(true);
    for (double v : x) acc.push(v);
    const double n = static_cast<double>(x.size());
    double mean = 0;
    for (double v : x) mean += v;
    mean /= n;
    double m2 = 0, m3 = 0, m4 = 0;
    for (double v : x) {
      const double d = v - mean;
      m2 += d * d;
      m3 += d * d * d;
      m4 += d * d * d * d;
    }
    CHECK(acc.mean() == doctest::Approx(mean).epsilon(1e-12));
    CHECK(acc.variance() == doctest::Approx(m2 / (n - 1)).epsilon(1e-12));
    CHECK(acc.standard_error() == doctest::Approx(std::sqrt(m2 / (n - 1) / n)).epsilon(1e-12));
    CHECK(acc.skewness() == doctest::Approx(std::sqrt(n) * m3 / std::pow(m2, 1.5)).epsilon(1e-10));
    CHECK(acc.kurtosis() == doctest::Approx(n * m4 / (m2 * m2)).epsilon(1e-10));

    MomentAccumulator a(true);
    MomentAccumulator b(true);
    for (std::size_t i = 0; i < x.size(); ++i) (i < 1234 ? a : b).push(x[i]);
    const MomentAccumulator c = merge(a, b);
    CHECK(c.count() == acc.count());
    CHECK(c.mean() == doctest::Approx(acc.mean()).epsilon(1e-12));
    CHECK(c.m2() == doctest::Approx(acc.m2()).epsilon(1e-12));
    CHECK(c.skewness() == doctest::Approx(acc.skewness()).epsilon(1e-10));
    CHECK(c.kurtosis() == doctest::Approx(acc.kurtosis()).epsilon(1e-10));
  }

  TEST_CASE("degenerate accumulators") {
    MomentAccumulator a;
    CHECK(a.variance() == 0.0);
    a.push(3.0);
    CHECK(a.variance() == 0.0);
    MomentAccumulator empty;
    a.merge(empty);
    CHECK(a.count() == 1);
    empty.merge(a);
    CHECK(empty.mean() == 3.0);
  }

  TEST_CASE("line fits") {
    const std::vector<double> x{0, 1, 2, 3};
    const std::vector<double> y{1, 3, 5, 7};
    const LinearFit f = fit_line(x, y);
    CHECK(f.slope == doctest::Approx(2.0));
    CHECK(f.intercept == doctest::Approx(1.0));
    const std::vector<double> lv{1, 2, 3};
    const std::vector<double> v{0.25, 0.0625, 0.015625};
    CHECK(fit_decay_slope(lv, v) == doctest::Approx(-2.0));
    CHECK_THROWS(fit_decay_slope(std::vector<double>{1, 2}, std::vector<double>{1, 2}));
  }
}
