#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "dkmlmc/noise.hpp"

using namespace dkmlmc;

namespace {

// Emits the unit vector e_hot, one coordinate per requested normal.
class ProbeSource final : public GaussianSource {
public:
  explicit ProbeSource(std::size_t hot) : hot_(hot) {}
  void fill(std::span<double> out) override {
    for (double& v : out) v = (index_++ == hot_) ? 1.0 : 0.0;
  }
  std::size_t drawn() const { return index_; }

private:
  std::size_t hot_;
  std::size_t index_ = 0;
};

struct PairLevels {
  LevelParams fine;
  LevelParams coarse;
};

PairLevels pair_levels(CouplingKind kind, int dim, int n_fine) {
  const auto ratio = coupling_ratios(kind);
  const TorusGrid fg(dim, n_fine);
  const TorusGrid cg(dim, n_fine / ratio.space);
  const double tau_c = 0.3 * cg.h() * cg.h();
  return {make_level(1, fg, tau_c / ratio.time, 2 * tau_c), make_level(0, cg, tau_c, 2 * tau_c)};
}

std::vector<double> flatten(const NoiseIncrement& w) {
  std::vector<double> out;
  for (int r = 0; r < w.dim(); ++r) out.insert(out.end(), w[r].values().begin(), w[r].values().end());
  return out;
}

// Rows: κ fine increments then the coarse one; columns: the Gaussians consumed.
struct LinearMap {
  Eigen::MatrixXd fine;    // (κ · d n_f^d) × K
  Eigen::MatrixXd coarse;  // (d n_c^d) × K
};

LinearMap compose(CouplingKind kind, const PairLevels& lv) {
  auto gen = make_coupled_noise(kind, lv.fine, lv.coarse);
  const int kappa = gen->time_ratio();
  const auto K = static_cast<Eigen::Index>(gen->normals_per_fine_step() * static_cast<std::size_t>(kappa));
  const auto fine_len = static_cast<Eigen::Index>(lv.fine.grid.size() * static_cast<std::size_t>(lv.fine.grid.dim()));
  const auto coarse_len =
      static_cast<Eigen::Index>(lv.coarse.grid.size() * static_cast<std::size_t>(lv.coarse.grid.dim()));
  LinearMap m{Eigen::MatrixXd(fine_len * kappa, K), Eigen::MatrixXd(coarse_len, K)};
  for (Eigen::Index j = 0; j < K; ++j) {
    auto g = make_coupled_noise(kind, lv.fine, lv.coarse);
    ProbeSource probe(static_cast<std::size_t>(j));
    NoiseIncrement fine(lv.fine.grid);
    NoiseIncrement coarse(lv.coarse.grid);
    for (int t = 0; t < kappa; ++t) {
      g->next_fine(probe, fine);
      const auto v = flatten(fine);
      for (Eigen::Index i = 0; i < fine_len; ++i) m.fine(t * fine_len + i, j) = v[static_cast<std::size_t>(i)];
    }
    g->take_coarse(coarse);
    const auto c = flatten(coarse);
    for (Eigen::Index i = 0; i < coarse_len; ++i) m.coarse(i, j) = c[static_cast<std::size_t>(i)];
    REQUIRE(probe.drawn() == static_cast<std::size_t>(K));
  }
  return m;
}

double max_abs(const Eigen::MatrixXd& a) { return a.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_SUITE("noise") {
  TEST_CASE("coupling ratios and names") {
    CHECK(coupling_ratios(CouplingKind::nearest_neighbour).space == 2);
    CHECK(coupling_ratios(CouplingKind::nearest_neighbour).time == 4);
    CHECK(coupling_ratios(CouplingKind::fourier).space == 3);
    CHECK(coupling_ratios(CouplingKind::fourier).time == 9);
    CHECK(parse_coupling("nn") == CouplingKind::nearest_neighbour);
    CHECK(parse_coupling(to_string(CouplingKind::fourier)) == CouplingKind::fourier);
    CHECK_THROWS(parse_coupling("spline"));
  }

  TEST_CASE("coupled increments have exact white-noise covariance") {
    struct Case {
      CouplingKind kind;
      int dim;
      int n_fine;
    };
    for (const Case c : {Case{CouplingKind::nearest_neighbour, 1, 4}, Case{CouplingKind::nearest_neighbour, 1, 6},
                         Case{CouplingKind::nearest_neighbour, 2, 4}, Case{CouplingKind::nearest_neighbour, 3, 4},
                         Case{CouplingKind::fourier, 1, 6}, Case{CouplingKind::fourier, 1, 12},
                         Case{CouplingKind::fourier, 2, 6}, Case{CouplingKind::fourier, 2, 12}}) {
      CAPTURE(to_string(c.kind));
      CAPTURE(c.dim);
      CAPTURE(c.n_fine);
      const PairLevels lv = pair_levels(c.kind, c.dim, c.n_fine);
      const LinearMap m = compose(c.kind, lv);
      const double vf = lv.fine.tau / lv.fine.grid.cell_volume();
      const double vc = lv.coarse.tau / lv.coarse.grid.cell_volume();
      const Eigen::MatrixXd cf = m.fine * m.fine.transpose();
      const Eigen::MatrixXd cc = m.coarse * m.coarse.transpose();
      CHECK(max_abs(cf - vf * Eigen::MatrixXd::Identity(cf.rows(), cf.cols())) < 1e-12 * vf);
      CHECK(max_abs(cc - vc * Eigen::MatrixXd::Identity(cc.rows(), cc.cols())) < 1e-12 * vc);
    }
  }

  TEST_CASE("nearest-neighbour coarse increment averages the right-most children") {
    for (int dim : {1, 2}) {
      const PairLevels lv = pair_levels(CouplingKind::nearest_neighbour, dim, 6);
      const LinearMap m = compose(CouplingKind::nearest_neighbour, lv);
      const TorusGrid& fg = lv.fine.grid;
      const TorusGrid& cg = lv.coarse.grid;
      const auto fine_len = static_cast<Eigen::Index>(fg.size() * static_cast<std::size_t>(dim));
      Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(m.coarse.rows(), m.coarse.cols());
      std::vector<int> k(static_cast<std::size_t>(dim));
      for (int r = 0; r < dim; ++r) {
        for (std::size_t i = 0; i < fg.size(); ++i) {
          fg.multi_index(i, k);
          for (int& v : k) v /= 2;
          const auto ci = static_cast<Eigen::Index>(static_cast<std::size_t>(r) * cg.size() + cg.flat_index(k));
          for (int t = 0; t < 4; ++t) {
            expect.row(ci) += m.fine.row(t * fine_len + static_cast<Eigen::Index>(static_cast<std::size_t>(r) * fg.size() + i));
          }
        }
      }
      expect /= std::pow(2.0, dim);
      CHECK(max_abs(expect - m.coarse) < 1e-12 * max_abs(m.coarse));
    }
  }

  TEST_CASE("Fourier synthesis satisfies Parseval and yields real fields") {
    for (int dim : {1, 2}) {
      for (int n : {4, 6, 9}) {
        const TorusGrid g(dim, n);
        const auto conj = conjugate_bins(g);
        std::mt19937_64 rng(static_cast<unsigned>(7 * dim + n));
        std::normal_distribution<double> z;
        std::vector<std::complex<double>> beta(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (conj[i] == i) {
            beta[i] = z(rng);
          } else if (conj[i] > i) {
            beta[i] = {z(rng), z(rng)};
            beta[conj[i]] = std::conj(beta[i]);
          }
        }
        std::vector<double> field(g.size());
        const double residue = synthesize_fourier_field(g, beta, field);
        CHECK(residue < 1e-13);
        double lhs = 0.0;
        for (double v : field) lhs += v * v;
        lhs *= g.cell_volume();
        double rhs = 0.0;
        for (const auto& b : beta) rhs += std::norm(b);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("conjugate bins are an involution") {
    const TorusGrid g(2, 6);
    const auto conj = conjugate_bins(g);
    std::array<int, 2> k{};
    std::array<int, 2> kc{};
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(conj[conj[i]] == i);
      g.multi_index(i, k);
      g.multi_index(conj[i], kc);
      CHECK((k[0] + kc[0]) % 6 == 0);
      CHECK((k[1] + kc[1]) % 6 == 0);
    }
  }

  TEST_CASE("Fourier coupling rejects cell-centred grids and wrong ratios") {
    const TorusGrid fg(1, 12, true);
    const TorusGrid cg(1, 4, true);
    const double tau = 0.1 * cg.h() * cg.h();
    CHECK_THROWS(make_coupled_noise(CouplingKind::fourier, make_level(1, fg, tau / 9, tau), make_level(0, cg, tau, tau)));
    const TorusGrid f2(1, 12);
    const TorusGrid c2(1, 6);
    CHECK_THROWS(make_coupled_noise(CouplingKind::fourier, make_level(1, f2, tau / 9, tau), make_level(0, c2, tau, tau)));
  }

  TEST_CASE("streams are reproducible") {
    const PairLevels lv = pair_levels(CouplingKind::nearest_neighbour, 2, 8);
    NoiseStream s1{42, 1, 3, StreamRole::fine, StreamFamily::mlmc, 0};
    NoiseStream s2 = s1;
    const auto a = nn_coupled_increments(s1, lv.fine, lv.coarse);
    const auto b = nn_coupled_increments(s2, lv.fine, lv.coarse);
    CHECK(flatten(a.coarse) == flatten(b.coarse));
    CHECK(s1.counter == 4);
    NoiseStream single{42, 1, 3, StreamRole::single, StreamFamily::mlmc, 0};
    const auto w = white_increment(single, lv.fine);
    // the fine half of a nearest-neighbour pair is the plain white noise of its level
    CHECK(flatten(w) == flatten(a.fine.front()));
    CHECK_THROWS(white_increment(s1, lv.fine));
  }

  TEST_CASE("sampled self-test agrees with its targets") {
    for (CouplingKind kind : {CouplingKind::nearest_neighbour, CouplingKind::fourier}) {
      for (const auto& row : noise_selftest(kind, 1, kind == CouplingKind::fourier ? 12 : 8, 20000, 5)) {
        CAPTURE(row.coupling);
        CAPTURE(row.quantity);
        CHECK(std::abs(row.value - row.target) < 5.0 * row.standard_error);
      }
    }
  }
}
