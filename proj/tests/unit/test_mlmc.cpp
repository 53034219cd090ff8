#include <doctest.h>

#include <atomic>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dkmlmc/mlmc.hpp"

using namespace dkmlmc;

namespace {

constexpr double kPi = std::numbers::pi;

// Small ladder n = 4, 8, 16 with μ = 0.4 and T = 2τ₀.
Problem small_problem(double N, const std::string& psi = "square", double amplitude = 1.0, int L_max = 2,
                      CouplingKind coupling = CouplingKind::nearest_neighbour) {
  const int n0 = coupling == CouplingKind::fourier ? 3 : 4;
  const double h0 = 2 * kPi / n0;
  const double tau0 = 0.4 * h0 * h0;
  LevelLadder ladder(coupling, 2, n0, tau0, L_max, 2 * tau0);
  return Problem(ladder, make_qoi(N, 2 * tau0, psi, "sinsum", "reg", 2), 17, amplitude);
}

}  // namespace

TEST_SUITE("mlmc") {
  TEST_CASE("ladder geometry and model costs") {
    const LevelLadder nn(CouplingKind::nearest_neighbour, 2, 8, 0.256, 3, 1.024);
    CHECK(nn.L_max() == 3);
    CHECK(nn.level(3).grid.n() == 64);
    CHECK(nn.level(3).tau == doctest::Approx(0.004));
    CHECK(nn.level(3).steps == 256);
    CHECK(nn.mu() == doctest::Approx(nn.level(2).mu));
    CHECK(nn.single_cost(1) == doctest::Approx(256.0 * 16));
    CHECK(nn.coupled_cost(1) == doctest::Approx(256.0 * 16 + 64.0 * 4));
    CHECK(nn.coupled_cost(0) == nn.single_cost(0));
    // per-sample cost grows like h^{-(d+2)}
    CHECK(nn.single_cost(3) / nn.single_cost(2) == doctest::Approx(16.0));

    const LevelLadder f(CouplingKind::fourier, 1, 4, 0.1, 2, 0.9);
    CHECK(f.level(2).grid.n() == 36);
    CHECK(f.level(2).steps == 9 * 9 * 9);
    CHECK_THROWS(LevelLadder(CouplingKind::fourier, 2, 4, 0.1, 1, 0.9, {}, true));
    CHECK_THROWS(LevelLadder(CouplingKind::nearest_neighbour, 2, 8, 1.024, 2, 1.024));  // CFL
    CHECK_THROWS(LevelLadder(CouplingKind::nearest_neighbour, 2, 8, 0.256, 2, 1.0));    // T/τ not integral
  }

  TEST_CASE("optimal sample allocation") {
    const std::vector<double> one{1.0};
    CHECK(optimal_samples(one, one, 1.0).front() == 2);
    const std::vector<double> V{1.0, 0.01};
    const std::vector<double> C{1.0, 100.0};
    const auto M = optimal_samples(V, C, 0.01);
    CHECK(static_cast<double>(M[0]) / static_cast<double>(M[1]) == doctest::Approx(100.0).epsilon(1e-3));
    const std::vector<double> V3{0.5, 0.1, 0.02};
    const std::vector<double> C3{1.0, 20.0, 400.0};
    const auto a = optimal_samples(V3, C3, 0.01);
    const auto b = optimal_samples(V3, C3, 0.005);
    for (std::size_t l = 0; l < 3; ++l) {
      CHECK(static_cast<double>(b[l]) == doctest::Approx(4.0 * static_cast<double>(a[l])).epsilon(2e-3));
    }
    CHECK(optimal_samples(std::vector<double>{0.0}, one, 0.1).front() == 2);
    CHECK_THROWS(optimal_samples(one, std::vector<double>{0.0}, 0.1));
  }

  TEST_CASE("convergence test") {
    const double eps = 0.1;
    CHECK(converged(std::vector<double>{0, 0, 0}, 2.0, eps));
    CHECK_FALSE(converged(std::vector<double>{0, 0, 3.0 * eps / std::sqrt(2.0)}, 2.0, eps));
    CHECK(converged(std::vector<double>{0.64, 0.16, 0.04}, 2.0, 0.2));
    CHECK_FALSE(converged(std::vector<double>{0.64, 0.16, 0.04}, 2.0, 0.01));
    CHECK_THROWS(converged(std::vector<double>{0.1, 0.2}, 2.0, eps));
  }

  TEST_CASE("parallel_for keeps order, prefixes and exceptions") {
    std::vector<int> out(500, -1);
    ExecutionOptions exec{4, nullptr};
    CHECK(parallel_for(out.size(), exec, [&](std::size_t i) { out[i] = static_cast<int>(i); }) == 500);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i));

    std::atomic<bool> cancel{false};
    ExecutionOptions c{3, &cancel};
    std::vector<int> done(1000, 0);
    const std::size_t prefix = parallel_for(done.size(), c, [&](std::size_t i) {
      done[i] = 1;
      if (i == 100) cancel.store(true);
    });
    CHECK(prefix < 1000);
    for (std::size_t i = 0; i < prefix; ++i) CHECK(done[i] == 1);

    CHECK_THROWS_AS(parallel_for(50, exec,
                                 [](std::size_t i) {
                                   if (i == 7) throw std::runtime_error("boom");
                                 }),
                    std::runtime_error);
  }

  TEST_CASE("samples are reproducible and independent of the worker count") {
    const Problem p = small_problem(1e6);
    const auto a = sample_batch(p, 2, 0, 12, StreamFamily::mlmc, {1, nullptr});
    const auto b = sample_batch(p, 2, 0, 12, StreamFamily::mlmc, {3, nullptr});
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].Y == b[i].Y);
      CHECK(a[i].P_fine == b[i].P_fine);
    }
    CHECK(p.sample(1, 5).Y == p.sample(1, 5).Y);
    CHECK(sample_Y(p, 1, 5) == p.sample(1, 5).Y);
    CHECK(p.sample(1, 5).Y != p.sample(1, 6).Y);
  }

  TEST_CASE("zero noise gives exact zero corrections") {
    const Problem p = small_problem(1e6, "square", 0.0);
    for (int ell = 0; ell <= 2; ++ell) {
      const LevelSample s = p.sample(ell, 3);
      CHECK(s.P_fine == 0.0);
      CHECK(s.Y == 0.0);
    }
    MlmcOptions opts;
    opts.epsilon = 0.05;
    opts.initial_samples = 4;
    const MlmcResult r = run_mlmc(p, opts);
    CHECK(r.converged);
    CHECK(r.L == 2);
    CHECK(r.estimate == 0.0);
    const McResult mc = run_mc(p, 2, McBudget{10});
    CHECK(mc.P.mean() == 0.0);
    CHECK(mc.P.variance() == 0.0);
  }

  TEST_CASE("identity psi has zero mean") {
    const Problem p = small_problem(1e4, "identity");
    const McResult r = run_mc(p, 1, McBudget{4000});
    CHECK(std::abs(r.P.mean()) < 4.0 * r.P.standard_error());
  }

  TEST_CASE("MC sizing from a pilot, with a cap that extrapolates") {
    const Problem p = small_problem(1e6);
    McBudget b;
    b.epsilon = 0.1;
    b.pilot_samples = 50;
    const McResult r = run_mc(p, 1, b);
    CHECK(r.target_samples >= 50);
    CHECK(r.P.count() == r.target_samples);
    CHECK_FALSE(r.extrapolated);
    CHECK(r.estimator_variance == doctest::Approx(r.P.variance() / static_cast<double>(r.target_samples)));
    CHECK(r.cost == doctest::Approx(static_cast<double>(r.target_samples) * p.ladder().single_cost(1)));

    b.epsilon = 0.01;
    b.max_samples = 60;
    const McResult capped = run_mc(p, 1, b);
    CHECK(capped.extrapolated);
    CHECK(capped.P.count() == 60);
    CHECK(capped.target_samples > 60);
  }

  TEST_CASE("coupling shrinks the variance of the correction") {
    const Problem p = small_problem(1e8);
    MomentAccumulator coupled;
    MomentAccumulator independent;
    for (std::uint64_t r = 0; r < 400; ++r) {
      coupled.push(p.sample(2, r).Y);
      independent.push(p.sample_P(2, r, StreamFamily::mc) - p.sample_P(1, r, StreamFamily::aux));
    }
    CHECK(coupled.variance() < 0.25 * independent.variance());
  }

  TEST_CASE("fourier ladder samples") {
    const Problem p = small_problem(1e8, "square", 1.0, 1, CouplingKind::fourier);
    MomentAccumulator y;
    MomentAccumulator pf;
    for (std::uint64_t r = 0; r < 200; ++r) {
      const auto s = p.sample(1, r);
      y.push(s.Y);
      pf.push(s.P_fine);
    }
    CHECK(y.variance() < 0.5 * pf.variance());
  }

  TEST_CASE("variance reduction on a single level is neutral") {
    const Problem p = small_problem(1e8);
    const std::vector<int> levels{0};
    const VarRedResult r = variance_reduction_experiment(p, levels, 3000);
    REQUIRE(r.rows.size() == 1);
    CHECK(r.rows[0].factor == doctest::Approx(1.0).epsilon(0.15));
  }

  TEST_CASE("adaptive driver on a small ladder") {
    const Problem p = small_problem(1e8);
    MlmcOptions opts;
    opts.epsilon = 0.08;
    opts.initial_samples = 50;
    const MlmcResult r = run_mlmc(p, opts);
    CHECK(r.L >= 2);
    CHECK(r.estimator_variance <= 0.5 * opts.epsilon * opts.epsilon * 1.0001);
    double cost = 0.0;
    for (const auto& s : r.levels) cost += static_cast<double>(s.samples()) * s.cost;
    CHECK(r.total_cost == doctest::Approx(cost));
    std::atomic<bool> cancel{true};
    opts.exec.cancel = &cancel;
    CHECK(run_mlmc(p, opts).incomplete);
  }
}
