#include "dkmlmc/cli.hpp"

#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dkmlmc/dk.hpp"

namespace dkmlmc {

using nlohmann::json;

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::runtime_error([&] {
        std::string msg = "invalid configuration:";
        for (const auto& v : violations) msg += "\n  - " + v;
        return msg;
      }()),
      violations_(std::move(violations)) {}

std::string to_string(RunKind kind) {
  switch (kind) {
    case RunKind::mlmc: return "mlmc";
    case RunKind::mc: return "mc";
    case RunKind::varred: return "varred";
    case RunKind::convergence_table: return "convergence-table";
    case RunKind::mfl: return "mfl";
    case RunKind::noise_selftest: return "noise-selftest";
  }
  return "?";
}

namespace {

std::optional<RunKind> parse_kind(const std::string& s) {
  for (RunKind k : {RunKind::mlmc, RunKind::mc, RunKind::varred, RunKind::convergence_table, RunKind::mfl,
                    RunKind::noise_selftest}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

const std::set<std::string>& optional_keys() {
  static const std::set<std::string> keys = {
      "mu",           "b0",           "b1",          "symmetric_nn",   "init_mode",        "epsilons",
      "initial_samples", "alpha",     "alpha_mode",  "density_guard",  "mc_compare",       "mc_pilot_samples",
      "mc_max_samples", "level",      "samples",     "epsilon",        "varred_levels",    "finest_samples",
      "table_samples", "workers",     "output_dir",  "snapshot_steps", "selftest_n",       "selftest_samples"};
  return keys;
}

}  // namespace

const std::vector<std::string>& required_config_keys() {
  static const std::vector<std::string> keys = {"kind", "dimension", "n0", "tau0", "coupling", "L_max",
                                                "N",    "T",         "psi", "phi", "density",  "seed"};
  return keys;
}

// ============================================================================
// Ladder / QoI from a config
// ============================================================================

LevelLadder ExperimentConfig::ladder() const {
  return LevelLadder(coupling, dimension, n0, tau0, L_max, T, weights, symmetric_nn);
}

QoISpec ExperimentConfig::qoi() const { return make_qoi(N, T, psi, phi, density, dimension, init_mode); }

json ExperimentConfig::to_json() const {
  json j;
  j["kind"] = to_string(kind);
  j["dimension"] = dimension;
  j["n0"] = n0;
  j["tau0"] = tau0;
  j["coupling"] = to_string(coupling);
  j["L_max"] = L_max;
  j["N"] = N;
  j["T"] = T;
  j["psi"] = psi;
  j["phi"] = phi;
  j["density"] = density;
  j["seed"] = seed;
  j["b0"] = weights.b0;
  j["b1"] = weights.b1;
  j["symmetric_nn"] = symmetric_nn;
  j["init_mode"] = init_mode == InitMode::particles ? "particles" : "deterministic";
  j["epsilons"] = epsilons;
  j["initial_samples"] = initial_samples;
  j["alpha"] = alpha;
  j["alpha_mode"] = fit_alpha ? "fit" : "fixed";
  j["density_guard"] = density_guard;
  j["mc_compare"] = mc_compare;
  j["mc_pilot_samples"] = mc_pilot_samples;
  j["mc_max_samples"] = mc_max_samples;
  j["level"] = level;
  j["samples"] = samples;
  j["epsilon"] = epsilon;
  j["varred_levels"] = varred_levels;
  j["finest_samples"] = finest_samples;
  j["table_samples"] = table_samples;
  j["workers"] = workers;
  j["output_dir"] = output_dir;
  j["snapshot_steps"] = snapshot_steps;
  j["selftest_n"] = selftest_n;
  j["selftest_samples"] = selftest_samples;
  return j;
}

// ============================================================================
// Parsing
// ============================================================================

ExperimentConfig parse_config(const json& document) {
  if (!document.is_object()) throw ConfigError({"configuration must be a JSON object"});
  if (document.contains("config") && document.contains("result") && document["config"].is_object()) {
    return parse_config(document["config"]);
  }

  std::vector<std::string> errors;
  for (const auto& [key, value] : document.items()) {
    const auto& req = required_config_keys();
    if (std::find(req.begin(), req.end(), key) == req.end() && !optional_keys().count(key)) {
      errors.push_back("unknown key '" + key + "'");
    }
  }
  for (const auto& key : required_config_keys()) {
    if (key == "tau0" && document.contains("mu")) continue;
    if (!document.contains(key)) {
      errors.push_back("missing required key '" + key + "'" + (key == "tau0" ? " (or 'mu')" : ""));
    }
  }
  if (document.contains("tau0") && document.contains("mu")) errors.push_back("give either 'tau0' or 'mu', not both");

  ExperimentConfig c;
  auto get = [&](const char* key, auto& target) {
    if (!document.contains(key)) return false;
    try {
      document.at(key).get_to(target);
      return true;
    } catch (const json::exception&) {
      errors.push_back("key '" + std::string(key) + "' has the wrong type");
      return false;
    }
  };

  std::string kind;
  if (get("kind", kind)) {
    if (auto k = parse_kind(kind)) {
      c.kind = *k;
    } else {
      errors.push_back("unknown kind '" + kind + "' (mlmc, mc, varred, convergence-table, mfl, noise-selftest)");
    }
  }
  get("dimension", c.dimension);
  get("n0", c.n0);
  get("tau0", c.tau0);
  std::string coupling;
  if (get("coupling", coupling)) {
    try {
      c.coupling = parse_coupling(coupling);
    } catch (const std::invalid_argument& e) {
      errors.push_back(e.what());
    }
  }
  get("L_max", c.L_max);
  get("N", c.N);
  get("T", c.T);
  get("psi", c.psi);
  get("phi", c.phi);
  get("density", c.density);
  get("seed", c.seed);

  const bool has_b0 = get("b0", c.weights.b0);
  const bool has_b1 = get("b1", c.weights.b1);
  if (has_b0 && !has_b1) c.weights.b1 = 1.0 - c.weights.b0;
  if (has_b1 && !has_b0) c.weights.b0 = 1.0 - c.weights.b1;
  get("symmetric_nn", c.symmetric_nn);
  std::string init_mode;
  if (get("init_mode", init_mode)) {
    if (init_mode == "particles") {
      c.init_mode = InitMode::particles;
    } else if (init_mode != "deterministic") {
      errors.push_back("init_mode must be 'deterministic' or 'particles'");
    }
  }
  get("epsilons", c.epsilons);
  get("initial_samples", c.initial_samples);
  get("alpha", c.alpha);
  std::string alpha_mode;
  if (get("alpha_mode", alpha_mode)) {
    if (alpha_mode == "fit") {
      c.fit_alpha = true;
    } else if (alpha_mode != "fixed") {
      errors.push_back("alpha_mode must be 'fixed' or 'fit'");
    }
  }
  get("density_guard", c.density_guard);
  get("mc_compare", c.mc_compare);
  get("mc_pilot_samples", c.mc_pilot_samples);
  get("mc_max_samples", c.mc_max_samples);
  get("level", c.level);
  get("samples", c.samples);
  get("epsilon", c.epsilon);
  get("varred_levels", c.varred_levels);
  get("finest_samples", c.finest_samples);
  get("table_samples", c.table_samples);
  get("workers", c.workers);
  get("output_dir", c.output_dir);
  get("snapshot_steps", c.snapshot_steps);
  get("selftest_n", c.selftest_n);
  get("selftest_samples", c.selftest_samples);
  if (!errors.empty()) throw ConfigError(errors);

  // Semantic checks.
  if (c.dimension < 1 || c.dimension > 3) errors.push_back("dimension must be 1, 2 or 3");
  if (c.n0 < 2) errors.push_back("n0 must be >= 2");
  if (c.L_max < 0) errors.push_back("L_max must be >= 0");
  if (!(c.N >= 1.0)) errors.push_back("N must be >= 1");
  if (!(c.T > 0.0)) errors.push_back("T must be positive");
  if (document.contains("mu")) {
    double mu = 0.0;
    get("mu", mu);
    if (!(mu > 0.0)) errors.push_back("mu must be positive");
    const double h0 = 2.0 * M_PI / c.n0;
    c.tau0 = mu * h0 * h0;
  }
  if (!(c.tau0 > 0.0)) errors.push_back("tau0 must be positive");
  try {
    c.weights.validate();
  } catch (const std::invalid_argument& e) {
    errors.push_back(e.what());
  }
  if (c.symmetric_nn && c.coupling == CouplingKind::fourier) {
    errors.push_back("symmetric_nn applies to the nn coupling only");
  }
  if (c.epsilons.empty()) errors.push_back("epsilons must not be empty");
  for (double e : c.epsilons) {
    if (!(e > 0.0)) errors.push_back("every entry of epsilons must be positive");
  }
  if (c.initial_samples < 2) errors.push_back("initial_samples must be >= 2");
  if (!(c.alpha > 0.0)) errors.push_back("alpha must be positive");
  if (c.density_guard < 0.0) errors.push_back("density_guard must be >= 0");
  if (c.workers < 1) errors.push_back("workers must be >= 1");
  if (c.mc_pilot_samples < 2) errors.push_back("mc_pilot_samples must be >= 2");
  if (c.finest_samples < 2) errors.push_back("finest_samples must be >= 2");
  if (c.table_samples < 2) errors.push_back("table_samples must be >= 2");
  if (c.level < -1 || c.level > c.L_max) errors.push_back("level must lie in [0, L_max]");
  if (c.kind == RunKind::mc && c.samples == 0 && !(c.epsilon > 0.0)) {
    errors.push_back("kind mc needs 'samples' > 0 or 'epsilon' > 0");
  }
  for (int L : c.varred_levels) {
    if (L < 0 || L > c.L_max) errors.push_back("varred_levels entries must lie in [0, L_max]");
  }
  if (c.init_mode == InitMode::particles && c.N > 1e9) {
    errors.push_back("particles mode samples every particle; N above 1e9 is not supported");
  }
  if (c.kind == RunKind::noise_selftest) {
    const int ratio = coupling_ratios(c.coupling).space;
    if (c.selftest_n < 2 * ratio || c.selftest_n % ratio != 0) {
      errors.push_back("selftest_n must be a multiple of the coupling's space ratio with at least 2 coarse points");
    }
  }
  if (errors.empty() && c.kind != RunKind::noise_selftest) {
    const auto ratios = coupling_ratios(c.coupling);
    const double h0 = 2.0 * M_PI / c.n0;
    const double mu = c.tau0 / (h0 * h0);
    if (c.weights.is_explicit() && mu > (1.0 + 1e-12) / c.dimension) {
      errors.push_back("CFL violation: mu = tau/h^2 = " + format_number(mu) + " exceeds 1/d = " +
                       format_number(1.0 / c.dimension) + " required by the explicit scheme (b0 = 0)");
    }
    const double tau_L = c.tau0 / std::pow(static_cast<double>(ratios.time), c.L_max);
    const double steps = c.T / tau_L;
    if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps)) {
      errors.push_back("T = " + format_number(c.T) + " is not an integer multiple of tau_L = " + format_number(tau_L));
    }
  }
  if (errors.empty() && c.kind != RunKind::noise_selftest) {
    try {
      (void)c.ladder();
    } catch (const std::invalid_argument& e) {
      errors.push_back(e.what());
    }
    try {
      (void)c.qoi();
    } catch (const std::invalid_argument& e) {
      errors.push_back(e.what());
    }
  }
  if (!errors.empty()) throw ConfigError(errors);
  if (c.level < 0) c.level = c.L_max;
  if (c.varred_levels.empty()) {
    for (int L = std::min(1, c.L_max); L <= c.L_max; ++L) c.varred_levels.push_back(L);
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError({"cannot open configuration file '" + path + "'"});
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("malformed JSON: ") + e.what()});
  }
  return parse_config(doc);
}

// ============================================================================
// Output helpers
// ============================================================================

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Cell {
  std::string text;
  Cell(double v) : text(format_number(v)) {}
  Cell(int v) : text(std::to_string(v)) {}
  Cell(long v) : text(std::to_string(v)) {}
  Cell(std::uint64_t v) : text(std::to_string(v)) {}
  Cell(bool v) : text(v ? "1" : "0") {}
  Cell(std::string s) : text(std::move(s)) {}
  Cell(const char* s) : text(s) {}
};

class CsvWriter {
public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header) : os_(path), path_(path) {
    if (!os_) throw std::runtime_error("cannot open " + path.string() + " for writing");
    row_strings(header);
  }
  void row(std::initializer_list<Cell> cells) {
    std::vector<std::string> s;
    for (const auto& c : cells) s.push_back(c.text);
    row_strings(s);
  }
  ~CsvWriter() { os_.flush(); }

private:
  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << cells[i];
    os_ << '\n';
    if (!os_) throw std::runtime_error("write failed: " + path_.string());
  }
  std::ofstream os_;
  fs::path path_;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double abs_or_nan_log2(double v) { return v != 0.0 ? std::log2(std::abs(v)) : std::nan(""); }

json level_stats_json(const LevelStats& s) {
  return {{"ell", s.ell},
          {"samples", s.samples()},
          {"mean_Y", s.Y.mean()},
          {"var_Y", s.Y.variance()},
          {"mean_P", s.P_fine.mean()},
          {"var_P", s.P_fine.variance()},
          {"cost_per_sample", s.cost}};
}

struct RunContext {
  const ExperimentConfig& config;
  fs::path dir;
  ExecutionOptions exec;
  std::vector<std::pair<std::string, double>> timings;
  bool incomplete = false;
};

json run_mlmc_kind(RunContext& ctx, const Problem& problem) {
  const auto& cfg = ctx.config;
  CsvWriter levels(ctx.dir / "mlmc_levels.csv",
                   {"epsilon", "ell", "n", "tau", "samples", "mean_Y", "var_Y", "mean_P", "var_P", "cost_per_sample"});
  CsvWriter runs(ctx.dir / "mlmc_runs.csv",
                 {"epsilon", "estimate", "estimator_variance", "L", "converged", "density_guard_hit", "alpha",
                  "mlmc_cost", "mc_level", "mc_samples", "mc_variance_P", "mc_cost", "mc_extrapolated",
                  "model_cost_ratio"});
  json out = json::array();
  for (double eps : cfg.epsilons) {
    MlmcOptions opts;
    opts.epsilon = eps;
    opts.initial_samples = cfg.initial_samples;
    opts.alpha = cfg.alpha;
    opts.fit_alpha = cfg.fit_alpha;
    opts.density_guard = cfg.density_guard;
    opts.exec = ctx.exec;
    const MlmcResult r = run_mlmc(problem, opts);
    ctx.timings.emplace_back("mlmc eps=" + format_number(eps), r.wall_seconds);
    for (const auto& s : r.levels) {
      const auto& lv = problem.ladder().level(s.ell);
      levels.row({eps, s.ell, lv.grid.n(), lv.tau, s.samples(), s.Y.mean(), s.Y.variance(), s.P_fine.mean(),
                  s.P_fine.variance(), s.cost});
    }
    json entry = {{"epsilon", eps},
                  {"estimate", r.estimate},
                  {"estimator_variance", r.estimator_variance},
                  {"L", r.L},
                  {"converged", r.converged},
                  {"density_guard_hit", r.density_guard_hit},
                  {"alpha", r.alpha},
                  {"total_cost", r.total_cost},
                  {"levels", json::array()}};
    for (const auto& s : r.levels) entry["levels"].push_back(level_stats_json(s));
    if (r.incomplete) {
      ctx.incomplete = true;
      out.push_back(entry);
      break;
    }
    if (cfg.mc_compare) {
      McBudget budget;
      budget.epsilon = eps;
      budget.pilot_samples = cfg.mc_pilot_samples;
      budget.max_samples = cfg.mc_max_samples;
      const McResult mc = run_mc(problem, r.L, budget, ctx.exec);
      ctx.timings.emplace_back("mc eps=" + format_number(eps), mc.wall_seconds);
      ctx.timings.emplace_back("speedup_time eps=" + format_number(eps),
                               r.wall_seconds > 0.0 ? mc.wall_seconds / r.wall_seconds : 0.0);
      runs.row({eps, r.estimate, r.estimator_variance, r.L, r.converged, r.density_guard_hit, r.alpha, r.total_cost,
                mc.ell, mc.target_samples, mc.P.variance(), mc.cost, mc.extrapolated, mc.cost / r.total_cost});
      entry["mc"] = {{"level", mc.ell},         {"target_samples", mc.target_samples},
                     {"simulated", mc.P.count()}, {"mean", mc.P.mean()},
                     {"variance_P", mc.P.variance()}, {"cost", mc.cost},
                     {"extrapolated", mc.extrapolated}};
      if (mc.incomplete) {
        ctx.incomplete = true;
        out.push_back(entry);
        break;
      }
    } else {
      const double nan = std::nan("");
      runs.row({eps, r.estimate, r.estimator_variance, r.L, r.converged, r.density_guard_hit, r.alpha, r.total_cost,
                r.L, std::uint64_t{0}, nan, nan, false, nan});
    }
    out.push_back(entry);
  }
  return out;
}

json run_mc_kind(RunContext& ctx, const Problem& problem) {
  const auto& cfg = ctx.config;
  McBudget budget;
  budget.samples = cfg.samples;
  budget.epsilon = cfg.epsilon;
  budget.pilot_samples = cfg.mc_pilot_samples;
  budget.max_samples = cfg.mc_max_samples;
  const McResult r = run_mc(problem, cfg.level, budget, ctx.exec);
  ctx.incomplete = r.incomplete;
  ctx.timings.emplace_back("mc", r.wall_seconds);
  CsvWriter csv(ctx.dir / "mc.csv", {"level", "n", "simulated", "target_samples", "mean", "variance",
                                      "estimator_variance", "cost", "extrapolated"});
  csv.row({r.ell, problem.ladder().level(r.ell).grid.n(), r.P.count(), r.target_samples, r.P.mean(),
           r.P.variance(), r.estimator_variance, r.cost, r.extrapolated});
  return {{"level", r.ell},
          {"simulated", r.P.count()},
          {"target_samples", r.target_samples},
          {"mean", r.P.mean()},
          {"variance", r.P.variance()},
          {"estimator_variance", r.estimator_variance},
          {"cost", r.cost},
          {"extrapolated", r.extrapolated}};
}

json run_varred_kind(RunContext& ctx, const Problem& problem) {
  const auto& cfg = ctx.config;
  const auto t0 = Clock::now();
  const VarRedResult r = variance_reduction_experiment(problem, cfg.varred_levels, cfg.finest_samples, ctx.exec);
  ctx.timings.emplace_back("varred", seconds_since(t0));
  ctx.incomplete = r.incomplete;
  CsvWriter rows(ctx.dir / "varred.csv",
                 {"L", "n_min", "mlmc_variance", "mlmc_cost", "mc_samples", "mc_variance", "factor"});
  json out = {{"rows", json::array()}, {"levels", json::array()}};
  for (const auto& row : r.rows) {
    rows.row({row.L, row.n_min, row.mlmc_variance, row.mlmc_cost, row.mc_samples, row.mc_variance, row.factor});
    out["rows"].push_back({{"L", row.L},
                           {"n_min", row.n_min},
                           {"mlmc_variance", row.mlmc_variance},
                           {"mlmc_cost", row.mlmc_cost},
                           {"mc_samples", row.mc_samples},
                           {"mc_variance", row.mc_variance},
                           {"factor", row.factor}});
  }
  CsvWriter levels(ctx.dir / "varred_levels.csv", {"ell", "n", "samples", "mean_Y", "var_Y", "mean_P", "var_P"});
  for (const auto& s : r.levels) {
    levels.row({s.ell, problem.ladder().level(s.ell).grid.n(), s.samples(), s.Y.mean(), s.Y.variance(),
                s.P_fine.mean(), s.P_fine.variance()});
    out["levels"].push_back(level_stats_json(s));
  }
  return out;
}

json run_table_kind(RunContext& ctx, const Problem& problem) {
  const auto& cfg = ctx.config;
  const auto t0 = Clock::now();
  bool incomplete = false;
  const auto stats = level_table(problem, cfg.L_max, cfg.table_samples, ctx.exec, &incomplete);
  ctx.timings.emplace_back("convergence-table", seconds_since(t0));
  ctx.incomplete = incomplete;
  const bool with_oracle = cfg.psi == "square";
  CsvWriter csv(ctx.dir / "convergence.csv",
                {"ell", "n", "tau", "samples", "mean_Y", "var_Y", "se_mean_Y", "log2_var_Y", "log2_abs_mean_Y",
                 "mean_P", "var_P", "cost_per_sample", "oracle_P"});
  json out = json::array();
  std::vector<double> lv;
  std::vector<double> var;
  for (const auto& s : stats) {
    const auto& level = problem.ladder().level(s.ell);
    const double oracle = with_oracle ? fluctuation_variance_oracle(problem.spec().rho0bar.value, problem.spec().phi,
                                                                    cfg.T, level, cfg.init_mode)
                                      : std::nan("");
    csv.row({s.ell, level.grid.n(), level.tau, s.samples(), s.Y.mean(), s.Y.variance(), s.Y.standard_error(),
             abs_or_nan_log2(s.Y.variance()), abs_or_nan_log2(s.Y.mean()), s.P_fine.mean(), s.P_fine.variance(),
             s.cost, oracle});
    json j = level_stats_json(s);
    if (with_oracle) j["oracle_P"] = oracle;
    out.push_back(j);
    if (s.ell >= 1 && s.Y.variance() > 0.0) {
      lv.push_back(s.ell);
      var.push_back(s.Y.variance());
    }
  }
  json result = {{"levels", out}};
  if (lv.size() >= 3) result["variance_slope"] = fit_decay_slope(lv, var);
  return result;
}

json run_mfl_kind(RunContext& ctx, const Problem& problem) {
  const auto& cfg = ctx.config;
  const auto t0 = Clock::now();
  const LevelParams& level = problem.ladder().level(cfg.level);
  const QoISpec& spec = problem.spec();
  const Field phi_h = interpolate(spec.phi, level.grid);
  const std::set<long> snaps(cfg.snapshot_steps.begin(), cfg.snapshot_steps.end());
  auto dump = [&](const std::string& prefix, long m, const Field& f) {
    if (snaps.count(m)) write_field_csv(f, (ctx.dir / (prefix + "_step_" + std::to_string(m) + ".csv")).string());
  };

  CsvWriter csv(ctx.dir / "mfl.csv", {"step", "time", "mass", "min", "max", "linear_statistic"});
  const ThetaOperator op(level);
  Field cur = problem.rho0bar(cfg.level);
  Field next(level.grid);
  const double mass0 = cur.mass();
  double max_drift = 0.0;
  csv.row({0L, 0.0, cur.mass(), cur.min(), cur.max(), inner(cur, phi_h)});
  dump("mfl", 0, cur);
  for (long m = 1; m <= level.steps; ++m) {
    op.apply(cur, next);
    std::swap(cur, next);
    max_drift = std::max(max_drift, std::abs(cur.mass() - mass0) / mass0);
    csv.row({m, m * level.tau, cur.mass(), cur.min(), cur.max(), inner(cur, phi_h)});
    dump("mfl", m, cur);
  }
  write_field_csv(cur, (ctx.dir / "mfl_final.csv").string());

  const auto profile = fluctuation_variance_profile(spec.rho0bar.value, spec.phi, level, cfg.init_mode);
  CsvWriter oracle(ctx.dir / "oracle.csv", {"step", "time", "oracle_cumulative"});
  double acc = profile.initial;
  oracle.row({0L, 0.0, acc});
  for (std::size_t m = 0; m < profile.increments.size(); ++m) {
    acc += profile.increments[m];
    oracle.row({static_cast<long>(m) + 1, static_cast<double>(m + 1) * level.tau, acc});
  }

  json out = {{"level", cfg.level},
              {"n", level.grid.n()},
              {"steps", level.steps},
              {"mass", cur.mass()},
              {"max_relative_mass_drift", max_drift},
              {"final_min", cur.min()},
              {"final_max", cur.max()},
              {"oracle", profile.total()}};
  if (!snaps.empty()) {
    // One stochastic path (replicate 0) for trajectory snapshots.
    const NoiseStream stream{cfg.seed, cfg.level, 0, StreamRole::single, StreamFamily::aux, 0};
    PathOptions opts;
    opts.observer = [&](long m, const Field& f) { dump("path", m, f); };
    Field init = problem.rho0bar(cfg.level);
    if (cfg.init_mode == InitMode::particles) init = prepare_initial(spec, {level}, stream)[0].rho0;
    dump("path", 0, init);
    const Field end = simulate_path(init, level, spec.N, stream, opts);
    out["path_final_mass"] = end.mass();
  }
  ctx.timings.emplace_back("mfl", seconds_since(t0));
  return out;
}

json run_selftest_kind(RunContext& ctx) {
  const auto& cfg = ctx.config;
  const auto t0 = Clock::now();
  const auto rows = noise_selftest(cfg.coupling, cfg.dimension, cfg.selftest_n, cfg.selftest_samples, cfg.seed);
  ctx.timings.emplace_back("noise-selftest", seconds_since(t0));
  CsvWriter csv(ctx.dir / "noise_selftest.csv", {"coupling", "quantity", "value", "target", "standard_error"});
  json out = json::array();
  for (const auto& r : rows) {
    csv.row({r.coupling, r.quantity, r.value, r.target, r.standard_error});
    out.push_back({{"quantity", r.quantity}, {"value", r.value}, {"target", r.target}, {"se", r.standard_error}});
  }
  return out;
}

}  // namespace

RunOutcome run(const ExperimentConfig& config, const std::atomic<bool>* cancel) {
  ExperimentConfig cfg = config;
  if (const char* env = std::getenv("DKMLMC_OUTPUT_DIR"); env != nullptr && *env != '\0') cfg.output_dir = env;
  RunContext ctx{cfg, fs::path(cfg.output_dir), {cfg.workers, cancel}, {}, false};
  fs::create_directories(ctx.dir);

  json result;
  if (cfg.kind == RunKind::noise_selftest) {
    result = run_selftest_kind(ctx);
  } else {
    const Problem problem(cfg.ladder(), cfg.qoi(), cfg.seed);
    switch (cfg.kind) {
      case RunKind::mlmc: result = run_mlmc_kind(ctx, problem); break;
      case RunKind::mc: result = run_mc_kind(ctx, problem); break;
      case RunKind::varred: result = run_varred_kind(ctx, problem); break;
      case RunKind::convergence_table: result = run_table_kind(ctx, problem); break;
      case RunKind::mfl: result = run_mfl_kind(ctx, problem); break;
      case RunKind::noise_selftest: break;
    }
  }

  RunOutcome outcome;
  outcome.incomplete = ctx.incomplete;
  outcome.exit_code = ctx.incomplete ? 3 : 0;
  outcome.summary = {{"config", cfg.to_json()}, {"result", result}, {"incomplete", ctx.incomplete},
                     {"seed", cfg.seed}};
  {
    std::ofstream os(ctx.dir / "summary.json");
    os << outcome.summary.dump(2) << '\n';
    if (!os) throw std::runtime_error("cannot write summary.json");
  }
  CsvWriter timing(ctx.dir / "timing.csv", {"label", "wall_seconds"});
  for (const auto& [label, secs] : ctx.timings) timing.row({label, secs});
  return outcome;
}

}  // namespace dkmlmc
