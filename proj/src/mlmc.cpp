#include "dkmlmc/mlmc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "dkmlmc/dk.hpp"

namespace dkmlmc {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

// ============================================================================
// LevelLadder
// ============================================================================

LevelLadder::LevelLadder(CouplingKind coupling, int dim, int n0, double tau0, int L_max, double horizon,
                         SchemeWeights weights, bool cell_centered)
    : coupling_(coupling), horizon_(horizon) {
  if (L_max < 0) throw std::invalid_argument("L_max must be >= 0");
  if (n0 < 2) throw std::invalid_argument("n0 must be >= 2");
  const auto ratios = coupling_ratios(coupling);
  if (coupling == CouplingKind::fourier && cell_centered) {
    throw std::invalid_argument("the Fourier coupling needs the vertex-centred grid");
  }
  int n = n0;
  double tau = tau0;
  for (int ell = 0; ell <= L_max; ++ell) {
    levels_.push_back(make_level(ell, TorusGrid(dim, n, cell_centered), tau, horizon, weights));
    n *= ratios.space;
    tau /= ratios.time;
  }
}

const LevelParams& LevelLadder::level(int ell) const {
  if (ell < 0 || ell > L_max()) throw std::out_of_range("level index " + std::to_string(ell) + " outside ladder");
  return levels_[static_cast<std::size_t>(ell)];
}

double LevelLadder::single_cost(int ell) const { return level(ell).work(); }

double LevelLadder::coupled_cost(int ell) const {
  return ell == 0 ? single_cost(0) : single_cost(ell) + single_cost(ell - 1);
}

// ============================================================================
// Problem
// ============================================================================

Problem::Problem(LevelLadder ladder, QoISpec spec, std::uint64_t master_seed, double noise_amplitude)
    : ladder_(std::move(ladder)), spec_(std::move(spec)), seed_(master_seed), noise_amplitude_(noise_amplitude) {
  if (std::abs(spec_.T - ladder_.horizon()) > 1e-12 * spec_.T) {
    throw std::invalid_argument("QoI horizon differs from the ladder horizon");
  }
  if (spec_.rho0bar.dim != ladder_.level(0).grid.dim()) {
    throw std::invalid_argument("density dimension differs from the ladder dimension");
  }
  for (const auto& level : ladder_.levels()) {
    LevelCache c;
    c.rho0bar = interpolate(spec_.rho0bar.value, level.grid);
    c.rhobarT = solve_mfl_final(c.rho0bar, level);
    c.phi = interpolate(spec_.phi, level.grid);
    cache_.push_back(std::move(c));
  }
}

std::pair<Field, Field> Problem::initial_pair(int ell, const NoiseStream& stream) const {
  if (spec_.init_mode == InitMode::deterministic) {
    const Field& fine = rho0bar(ell);
    return {fine, ell > 0 ? rho0bar(ell - 1) : Field()};
  }
  std::vector<LevelParams> levels{ladder_.level(ell)};
  if (ell > 0) levels.push_back(ladder_.level(ell - 1));
  auto init = prepare_initial(spec_, levels, stream);
  return {std::move(init[0].rho0), ell > 0 ? std::move(init[1].rho0) : Field()};
}

LevelSample Problem::sample(int ell, std::uint64_t replicate, StreamFamily family) const {
  const NoiseStream stream{seed_, ell, replicate, ell == 0 ? StreamRole::single : StreamRole::fine, family, 0};
  auto [init_fine, init_coarse] = initial_pair(ell, stream);
  const auto& c_f = cache_[static_cast<std::size_t>(ell)];
  LevelSample s;
  if (ell == 0) {
    PathOptions opts;
    opts.noise_amplitude = noise_amplitude_;
    const Field rhoT = simulate_path(init_fine, ladder_.level(0), spec_.N, stream, opts);
    s.P_fine = spec_.psi(fluctuation(rhoT, c_f.rhobarT, c_f.phi, spec_.N));
    s.Y = s.P_fine;
    return s;
  }
  const auto& c_c = cache_[static_cast<std::size_t>(ell - 1)];
  PairOptions opts;
  opts.noise_amplitude = noise_amplitude_;
  auto [fine, coarse] = simulate_coupled_pair(init_fine, init_coarse, ladder_.level(ell), ladder_.level(ell - 1),
                                              ladder_.coupling(), spec_.N, stream, opts);
  s.P_fine = spec_.psi(fluctuation(fine, c_f.rhobarT, c_f.phi, spec_.N));
  s.P_coarse = spec_.psi(fluctuation(coarse, c_c.rhobarT, c_c.phi, spec_.N));
  s.Y = s.P_fine - s.P_coarse;
  return s;
}

double Problem::sample_P(int ell, std::uint64_t replicate, StreamFamily family) const {
  const NoiseStream stream{seed_, ell, replicate, StreamRole::single, family, 0};
  Field init = rho0bar(ell);
  if (spec_.init_mode == InitMode::particles) {
    init = std::move(prepare_initial(spec_, {ladder_.level(ell)}, stream)[0].rho0);
  }
  const auto& c = cache_[static_cast<std::size_t>(ell)];
  PathOptions opts;
  opts.noise_amplitude = noise_amplitude_;
  const Field rhoT = simulate_path(init, ladder_.level(ell), spec_.N, stream, opts);
  return spec_.psi(fluctuation(rhoT, c.rhobarT, c.phi, spec_.N));
}

double sample_Y(const Problem& problem, int ell, std::uint64_t replicate) {
  return problem.sample(ell, replicate).Y;
}

// ============================================================================
// Execution
// ============================================================================

std::size_t parallel_for(std::size_t count, const ExecutionOptions& exec,
                         const std::function<void(std::size_t)>& fn) {
  auto cancelled = [&] { return exec.cancel != nullptr && exec.cancel->load(std::memory_order_relaxed); };
  if (exec.workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      if (cancelled()) return i;
      fn(i);
    }
    return count;
  }

  std::vector<char> done(count, 0);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      if (failed.load() || cancelled()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
        done[i] = 1;
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(exec.workers), count));
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  std::size_t prefix = 0;
  while (prefix < count && done[prefix]) ++prefix;
  return prefix;
}

std::vector<LevelSample> sample_batch(const Problem& problem, int ell, std::uint64_t first, std::size_t count,
                                      StreamFamily family, const ExecutionOptions& exec) {
  std::vector<LevelSample> out(count);
  const std::size_t completed =
      parallel_for(count, exec, [&](std::size_t i) { out[i] = problem.sample(ell, first + i, family); });
  out.resize(completed);
  return out;
}

// ============================================================================
// Level statistics and the allocation rule
// ============================================================================

void LevelStats::add(std::span<const LevelSample> batch) {
  for (const auto& s : batch) {
    Y.push(s.Y);
    P_fine.push(s.P_fine);
    if (ell > 0) P_coarse.push(s.P_coarse);
  }
}

std::vector<std::uint64_t> optimal_samples(std::span<const double> V, std::span<const double> C, double epsilon,
                                           std::uint64_t floor) {
  if (V.size() != C.size()) throw std::invalid_argument("optimal_samples: V and C differ in length");
  if (!(epsilon > 0.0)) throw std::invalid_argument("optimal_samples: epsilon must be positive");
  double sum = 0.0;
  for (std::size_t l = 0; l < V.size(); ++l) {
    if (!(V[l] >= 0.0) || !(C[l] > 0.0)) throw std::invalid_argument("optimal_samples: need V >= 0 and C > 0");
    sum += std::sqrt(V[l] * C[l]);
  }
  std::vector<std::uint64_t> M(V.size());
  for (std::size_t l = 0; l < V.size(); ++l) {
    const double m = std::ceil(2.0 / (epsilon * epsilon) * std::sqrt(V[l] / C[l]) * sum);
    M[l] = std::max(floor, static_cast<std::uint64_t>(m));
  }
  return M;
}

bool converged(std::span<const double> level_means, double alpha, double epsilon) {
  if (level_means.size() < 3) throw std::invalid_argument("converged: need the means of three levels");
  const std::size_t L = level_means.size() - 1;
  double worst = 0.0;
  for (int i = 0; i <= 2; ++i) {
    worst = std::max(worst, std::pow(2.0, -i * alpha) * std::abs(level_means[L - static_cast<std::size_t>(i)]));
  }
  return worst / (std::pow(2.0, alpha) - 1.0) < epsilon / std::sqrt(2.0);
}

double fit_alpha(std::span<const LevelStats> levels, double fallback) {
  std::vector<double> x;
  std::vector<double> y;
  for (const auto& s : levels) {
    if (s.ell >= 1 && s.samples() > 0 && s.Y.mean() != 0.0) {
      x.push_back(s.ell);
      y.push_back(std::log2(std::abs(s.Y.mean())));
    }
  }
  if (x.size() < 2) return fallback;
  return std::max(0.5, -fit_line(x, y).slope);
}

// ============================================================================
// Adaptive MLMC
// ============================================================================

namespace {

void summarise(MlmcResult& r) {
  r.estimate = 0.0;
  r.estimator_variance = 0.0;
  r.total_cost = 0.0;
  for (const auto& s : r.levels) {
    if (s.samples() == 0) continue;
    r.estimate += s.Y.mean();
    r.estimator_variance += s.Y.variance() / static_cast<double>(s.samples());
    r.total_cost += static_cast<double>(s.samples()) * s.cost;
  }
}

LevelStats make_stats(const LevelLadder& ladder, int ell) {
  LevelStats s;
  s.ell = ell;
  s.cost = ladder.coupled_cost(ell);
  return s;
}

bool density_ok(const Problem& problem, int ell, double guard) {
  if (guard <= 0.0) return true;
  return problem.spec().N * problem.ladder().level(ell).grid.cell_volume() >= guard;
}

}  // namespace

MlmcResult run_mlmc(const Problem& problem, const MlmcOptions& options) {
  if (!(options.epsilon > 0.0)) throw std::invalid_argument("run_mlmc: epsilon must be positive");
  if (options.initial_samples < 2) throw std::invalid_argument("run_mlmc: initial samples must be >= 2");
  const auto t0 = Clock::now();
  const LevelLadder& ladder = problem.ladder();
  MlmcResult r;
  r.epsilon = options.epsilon;
  r.alpha = options.alpha;

  int L = std::min(2, ladder.L_max());
  while (L > 0 && !density_ok(problem, L, options.density_guard)) {
    --L;
    r.density_guard_hit = true;
  }
  std::vector<std::uint64_t> extra(static_cast<std::size_t>(L) + 1, options.initial_samples);
  for (int ell = 0; ell <= L; ++ell) r.levels.push_back(make_stats(ladder, ell));

  for (;;) {
    for (int ell = 0; ell <= L; ++ell) {
      auto& s = r.levels[static_cast<std::size_t>(ell)];
      const std::uint64_t dn = extra[static_cast<std::size_t>(ell)];
      if (dn == 0) continue;
      const auto t = Clock::now();
      const auto batch = sample_batch(problem, ell, s.samples(), dn, options.family, options.exec);
      s.wall_seconds += seconds_since(t);
      s.add(batch);
      if (batch.size() < dn) r.incomplete = true;
    }
    if (r.incomplete) break;

    std::vector<double> V;
    std::vector<double> C;
    for (const auto& s : r.levels) {
      V.push_back(s.Y.variance());
      C.push_back(s.cost);
    }
    const auto M = optimal_samples(V, C, options.epsilon);
    bool need_more = false;
    for (int ell = 0; ell <= L; ++ell) {
      const auto have = r.levels[static_cast<std::size_t>(ell)].samples();
      extra[static_cast<std::size_t>(ell)] = M[static_cast<std::size_t>(ell)] > have ? M[static_cast<std::size_t>(ell)] - have : 0;
      need_more = need_more || extra[static_cast<std::size_t>(ell)] > 0;
    }
    if (options.log) {
      std::ostringstream msg;
      msg << "L=" << L << " samples:";
      for (const auto& s : r.levels) msg << ' ' << s.samples();
      msg << " extra:";
      for (auto e : extra) msg << ' ' << e;
      options.log(msg.str());
    }
    if (need_more) continue;

    if (options.fit_alpha) r.alpha = fit_alpha(r.levels, options.alpha);
    if (L >= 2) {
      const std::vector<double> means{r.levels[static_cast<std::size_t>(L) - 2].Y.mean(),
                                      r.levels[static_cast<std::size_t>(L) - 1].Y.mean(),
                                      r.levels[static_cast<std::size_t>(L)].Y.mean()};
      if (converged(means, r.alpha, options.epsilon)) {
        r.converged = true;
        break;
      }
    }
    if (L == ladder.L_max()) break;
    if (!density_ok(problem, L + 1, options.density_guard)) {
      r.density_guard_hit = true;
      break;
    }
    ++L;
    r.levels.push_back(make_stats(ladder, L));
    extra.assign(static_cast<std::size_t>(L) + 1, 0);
    extra.back() = options.initial_samples;
  }
  r.L = L;
  summarise(r);
  r.wall_seconds = seconds_since(t0);
  return r;
}

// ============================================================================
// Plain Monte Carlo
// ============================================================================

McResult run_mc(const Problem& problem, int ell, const McBudget& budget, const ExecutionOptions& exec,
                StreamFamily family) {
  const auto t0 = Clock::now();
  McResult r;
  r.ell = ell;
  const double cost = problem.ladder().single_cost(ell);
  auto simulate = [&](std::uint64_t first, std::uint64_t count) {
    std::vector<double> values(count);
    const std::size_t done = parallel_for(
        count, exec, [&](std::size_t i) { values[i] = problem.sample_P(ell, first + i, family); });
    for (std::size_t i = 0; i < done; ++i) r.P.push(values[i]);
    if (done < count) r.incomplete = true;
  };

  if (budget.samples > 0) {
    r.target_samples = budget.samples;
  } else {
    if (!(budget.epsilon > 0.0)) throw std::invalid_argument("run_mc: need a sample count or a positive epsilon");
    if (budget.pilot_samples < 2) throw std::invalid_argument("run_mc: pilot needs >= 2 samples");
    simulate(0, budget.pilot_samples);
    const double m = std::ceil(2.0 * r.P.variance() / (budget.epsilon * budget.epsilon));
    r.target_samples = std::max<std::uint64_t>(budget.pilot_samples, static_cast<std::uint64_t>(m));
  }
  std::uint64_t to_run = r.target_samples;
  if (budget.max_samples > 0 && to_run > budget.max_samples) {
    to_run = std::max<std::uint64_t>(budget.max_samples, r.P.count());
    r.extrapolated = true;
  }
  if (!r.incomplete && to_run > r.P.count()) simulate(r.P.count(), to_run - r.P.count());
  r.estimator_variance = r.P.variance() / static_cast<double>(r.target_samples);
  r.cost = static_cast<double>(r.target_samples) * cost;
  r.wall_seconds = seconds_since(t0);
  return r;
}

// ============================================================================
// Fixed allocations
// ============================================================================

std::vector<LevelStats> level_table(const Problem& problem, int L, std::uint64_t samples_per_level,
                                    const ExecutionOptions& exec, bool* incomplete) {
  std::vector<LevelStats> out;
  for (int ell = 0; ell <= L; ++ell) {
    LevelStats s = make_stats(problem.ladder(), ell);
    const auto t = Clock::now();
    const auto batch = sample_batch(problem, ell, 0, samples_per_level, StreamFamily::mlmc, exec);
    s.wall_seconds = seconds_since(t);
    s.add(batch);
    out.push_back(std::move(s));
    if (batch.size() < samples_per_level) {
      if (incomplete) *incomplete = true;
      break;
    }
  }
  return out;
}

VarRedResult variance_reduction_experiment(const Problem& problem, std::span<const int> finest_levels,
                                           std::uint64_t finest_samples, const ExecutionOptions& exec) {
  if (finest_levels.empty()) throw std::invalid_argument("variance_reduction_experiment: no levels requested");
  if (finest_samples < 2) throw std::invalid_argument("variance_reduction_experiment: need >= 2 finest samples");
  const LevelLadder& ladder = problem.ladder();
  const int top = *std::max_element(finest_levels.begin(), finest_levels.end());
  for (int L : finest_levels) ladder.level(L);

  VarRedResult result;
  std::vector<std::vector<LevelSample>> pool;
  for (int ell = 0; ell <= top; ++ell) {
    const std::uint64_t count = finest_samples << (2 * (top - ell));
    LevelStats s = make_stats(ladder, ell);
    const auto t = Clock::now();
    pool.push_back(sample_batch(problem, ell, 0, count, StreamFamily::mlmc, exec));
    s.wall_seconds = seconds_since(t);
    s.add(pool.back());
    result.levels.push_back(std::move(s));
    if (pool.back().size() < count) {
      result.incomplete = true;
      return result;
    }
  }

  for (int L : finest_levels) {
    VarRedRow row;
    row.L = L;
    row.n_min = ladder.level(L).grid.n();
    for (int ell = 0; ell <= L; ++ell) {
      const std::uint64_t M = finest_samples << (2 * (L - ell));
      MomentAccumulator acc;
      for (std::uint64_t i = 0; i < M; ++i) acc.push(pool[static_cast<std::size_t>(ell)][i].Y);
      row.mlmc_variance += acc.variance() / static_cast<double>(M);
      row.mlmc_cost += static_cast<double>(M) * ladder.coupled_cost(ell);
    }
    row.mc_samples = static_cast<std::uint64_t>(std::ceil(row.mlmc_cost / ladder.single_cost(L)));
    McBudget budget;
    budget.samples = std::max<std::uint64_t>(2, row.mc_samples);
    const McResult mc = run_mc(problem, L, budget, exec);
    if (mc.incomplete) {
      result.incomplete = true;
      break;
    }
    row.mc_variance = mc.estimator_variance;
    row.factor = row.mlmc_variance > 0.0 ? row.mc_variance / row.mlmc_variance : 0.0;
    result.rows.push_back(row);
  }
  return result;
}

}  // namespace dkmlmc
