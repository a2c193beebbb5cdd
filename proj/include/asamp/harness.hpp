#pragma once

#include "asm.hpp"
#include "denoisers.hpp"
#include "linalg.hpp"
#include "metrics.hpp"
#include "problem.hpp"
#include "splitting.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace asamp {

using json = nlohmann::json;

enum class ExperimentKind { Lasso, Channel };

struct SolverSpec {
  std::string name;
  std::string label;  // column value in the CSVs; defaults to name
  json params = json::object();
};

struct ExperimentConfig {
  std::string experiment = "lasso";
  ExperimentKind kind = ExperimentKind::Lasso;
  InstanceRecipe recipe;  // recipe.seed is the base seed
  int reps = 20;
  int full_reps = 200;
  int max_iters = 4000;
  double kkt_stop = 1e-6;
  bool stop_on_kkt = true;
  bool timing = true;
  int workers = 1;
  std::vector<SolverSpec> solvers;
};

// ---- config parsing ----

namespace detail {

inline void require_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(Errc::ConfigError, where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw Error(Errc::ConfigError, "unknown key '" + it.key() + "' in " + where);
}

template <class V>
V get_or(const json& j, const char* key, V def) {
  if (!j.contains(key) || j.at(key).is_null()) return def;
  try {
    return j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw Error(Errc::ConfigError, std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline const char* field_name(Field f) { return f == Field::Real ? "real" : "complex"; }

inline Field parse_field(const std::string& s) {
  if (s == "real") return Field::Real;
  if (s == "complex") return Field::Complex;
  throw Error(Errc::ConfigError, "unknown field '" + s + "'");
}

inline json recipe_to_json(const InstanceRecipe& r) {
  json j;
  j["field"] = field_name(r.field);
  j["ensemble"] = ensemble_name(r.ensemble);
  j["M"] = r.M;
  j["N"] = r.N;
  if (r.prior == PriorKind::BG)
    j["prior"] = {{"kind", "bg"}, {"epsilon", r.bg.epsilon}, {"sigma0_2", r.bg.sigma0_2}};
  else
    j["prior"] = {{"kind", "hmc"}, {"p01", r.hmc.p01}, {"p10", r.hmc.p10}, {"sigma0_2", r.hmc.sigma0_2}};
  j["snr_db"] = r.snr_db;
  j["seed"] = r.seed;
  j["lambda_scale"] = r.lambda_scale;
  j["lambda"] = r.lambda ? json(*r.lambda) : json(nullptr);
  j["require_nonempty"] = r.require_nonempty;
  return j;
}

inline void apply_recipe_keys(const json& j, InstanceRecipe& r) {
  using detail::get_or;
  r.field = parse_field(get_or<std::string>(j, "field", field_name(r.field)));
  r.ensemble = parse_ensemble(get_or<std::string>(j, "ensemble", ensemble_name(r.ensemble)));
  r.M = get_or<Index>(j, "M", r.M);
  r.N = get_or<Index>(j, "N", r.N);
  if (j.contains("prior")) {
    const json& p = j.at("prior");
    const auto kind = get_or<std::string>(p, "kind", "bg");
    if (kind == "bg") {
      detail::require_keys(p, {"kind", "epsilon", "sigma0_2"}, "prior");
      r.prior = PriorKind::BG;
      r.bg.epsilon = get_or<double>(p, "epsilon", r.bg.epsilon);
      r.bg.sigma0_2 = get_or<double>(p, "sigma0_2", r.bg.sigma0_2);
    } else if (kind == "hmc") {
      detail::require_keys(p, {"kind", "p01", "p10", "sigma0_2"}, "prior");
      r.prior = PriorKind::HMC;
      r.hmc.p01 = get_or<double>(p, "p01", r.hmc.p01);
      r.hmc.p10 = get_or<double>(p, "p10", r.hmc.p10);
      r.hmc.sigma0_2 = get_or<double>(p, "sigma0_2", r.hmc.sigma0_2);
    } else {
      throw Error(Errc::ConfigError, "unknown prior kind '" + kind + "'");
    }
  }
  r.snr_db = get_or<double>(j, "snr_db", r.snr_db);
  r.seed = get_or<std::uint64_t>(j, "seed", r.seed);
  r.lambda_scale = get_or<double>(j, "lambda_scale", r.lambda_scale);
  if (j.contains("lambda")) r.lambda = j.at("lambda").is_null() ? std::nullopt : std::optional<double>(j.at("lambda").get<double>());
  r.require_nonempty = get_or<bool>(j, "require_nonempty", r.require_nonempty);
  if (r.M < 1 || r.N < 1) throw Error(Errc::ConfigError, "dimensions must be positive");
  if (r.prior == PriorKind::BG && !(r.bg.epsilon > 0.0 && r.bg.epsilon < 1.0 && r.bg.sigma0_2 > 0.0))
    throw Error(Errc::ConfigError, "BG prior needs 0 < epsilon < 1 and sigma0_2 > 0");
  if (r.prior == PriorKind::HMC &&
      !(r.hmc.p01 > 0.0 && r.hmc.p01 < 1.0 && r.hmc.p10 > 0.0 && r.hmc.p10 < 1.0 && r.hmc.sigma0_2 > 0.0))
    throw Error(Errc::ConfigError, "HMC prior needs p01, p10 in (0,1) and sigma0_2 > 0");
}

inline InstanceRecipe recipe_from_json(const json& j) {
  detail::require_keys(j, {"field", "ensemble", "M", "N", "prior", "snr_db", "seed", "lambda_scale", "lambda",
                           "require_nonempty"},
                       "recipe");
  InstanceRecipe r;
  apply_recipe_keys(j, r);
  return r;
}

inline ExperimentConfig config_from_json(const json& j) {
  using detail::get_or;
  detail::require_keys(j, {"experiment", "kind", "field", "ensemble", "M", "N", "prior", "snr_db", "lambda_scale",
                           "lambda", "require_nonempty", "reps", "full_reps", "base_seed", "max_iters", "kkt_stop",
                           "stop_on_kkt", "timing", "workers", "solvers"},
                       "config");
  ExperimentConfig c;
  c.experiment = get_or<std::string>(j, "experiment", c.experiment);
  const auto kind = get_or<std::string>(j, "kind", "lasso");
  if (kind == "lasso")
    c.kind = ExperimentKind::Lasso;
  else if (kind == "channel")
    c.kind = ExperimentKind::Channel;
  else
    throw Error(Errc::ConfigError, "unknown kind '" + kind + "'");
  if (c.kind == ExperimentKind::Channel) {
    c.recipe.field = Field::Complex;
    c.recipe.ensemble = Ensemble::PdftRp;
    c.recipe.prior = PriorKind::HMC;
    c.recipe.require_nonempty = true;
    c.max_iters = 100;
    c.stop_on_kkt = false;
  }
  json rj = json::object();
  for (const char* k : {"field", "ensemble", "M", "N", "prior", "snr_db", "lambda_scale", "lambda", "require_nonempty"})
    if (j.contains(k)) rj[k] = j.at(k);
  apply_recipe_keys(rj, c.recipe);
  c.recipe.seed = get_or<std::uint64_t>(j, "base_seed", 1);
  c.reps = get_or<int>(j, "reps", c.reps);
  c.full_reps = get_or<int>(j, "full_reps", c.full_reps);
  c.max_iters = get_or<int>(j, "max_iters", c.max_iters);
  c.kkt_stop = get_or<double>(j, "kkt_stop", c.kkt_stop);
  c.stop_on_kkt = get_or<bool>(j, "stop_on_kkt", c.stop_on_kkt);
  c.timing = get_or<bool>(j, "timing", c.timing);
  c.workers = get_or<int>(j, "workers", c.workers);
  if (c.reps < 1 || c.full_reps < 1) throw Error(Errc::ConfigError, "reps must be >= 1");
  if (c.max_iters < 0) throw Error(Errc::ConfigError, "max_iters must be >= 0");
  if (c.workers < 0) throw Error(Errc::ConfigError, "workers must be >= 0");
  if (j.contains("solvers")) {
    for (const auto& s : j.at("solvers")) {
      SolverSpec sp;
      if (s.is_string()) {
        sp.name = s.get<std::string>();
      } else {
        sp.name = get_or<std::string>(s, "name", "");
        sp.label = get_or<std::string>(s, "label", "");
        sp.params = s;
        sp.params.erase("name");
        sp.params.erase("label");
      }
      if (sp.label.empty()) sp.label = sp.name;
      c.solvers.push_back(std::move(sp));
    }
  }
  std::set<std::string> labels;
  for (const auto& s : c.solvers)
    if (!labels.insert(s.label).second) throw Error(Errc::ConfigError, "duplicate solver label '" + s.label + "'");
  return c;
}

inline json config_to_json(const ExperimentConfig& c) {
  json j = recipe_to_json(c.recipe);
  j.erase("seed");
  j["experiment"] = c.experiment;
  j["kind"] = c.kind == ExperimentKind::Lasso ? "lasso" : "channel";
  j["base_seed"] = c.recipe.seed;
  j["reps"] = c.reps;
  j["full_reps"] = c.full_reps;
  j["max_iters"] = c.max_iters;
  j["kkt_stop"] = c.kkt_stop;
  j["stop_on_kkt"] = c.stop_on_kkt;
  j["timing"] = c.timing;
  j["workers"] = c.workers;
  j["solvers"] = json::array();
  for (const auto& s : c.solvers) {
    json o = s.params;
    o["name"] = s.name;
    if (s.label != s.name) o["label"] = s.label;
    j["solvers"].push_back(o);
  }
  return j;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ConfigError, path + ": " + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path) { return config_from_json(read_json_file(path)); }

// ---- solvers ----

struct RunOptions {
  int max_iters = 4000;
  double kkt_stop = 1e-6;
  bool stop_on_kkt = true;
  bool timing = true;
  bool compute_kkt = true;
};

template <class T>
struct Snapshot {
  const Vec<T>* x = nullptr;
  std::size_t support = 0;
  double v = std::numeric_limits<double>::quiet_NaN();
  double v_hat = std::numeric_limits<double>::quiet_NaN();
  bool exploded = false;
};

template <class T>
TraceRecord measure(const ProblemInstance<T>& p, const Snapshot<T>& s, int iter, double elapsed, const RunOptions& o) {
  TraceRecord r;
  r.iter = iter;
  r.support_size = s.support;
  r.v = s.v;
  r.v_hat = s.v_hat;
  r.elapsed_s = elapsed;
  r.exploded = s.exploded || !s.x->allFinite();
  if (r.exploded) return r;
  if (o.compute_kkt) r.kkt_residual = kkt_residual<T>(*s.x, p.A, p.y, p.lambda, p.sigma_w2 > 0.0 ? p.sigma_w2 : 1.0);
  if (p.x_dag && p.x_dag->squaredNorm() > 0.0) r.nmse_db = nmse_db<T>(*s.x, *p.x_dag);
  return r;
}

/// Shared driver: records iteration 0, then steps until the stopping rule or an explosion.
template <class T, class Step, class Snap>
RunTrace drive(const ProblemInstance<T>& p, const RunOptions& o, Step step, Snap snap) {
  using clock = std::chrono::steady_clock;
  RunTrace t;
  double elapsed = 0.0;
  t.push(measure<T>(p, snap(), 0, 0.0, o));
  for (int k = 1; k <= o.max_iters; ++k) {
    const auto t0 = clock::now();
    bool failed = false;
    try {
      step();
    } catch (const Error&) {
      failed = true;
    }
    if (o.timing) elapsed += std::chrono::duration<double>(clock::now() - t0).count();
    TraceRecord r;
    if (failed) {
      r.iter = k;
      r.elapsed_s = elapsed;
      r.exploded = true;
    } else {
      r = measure<T>(p, snap(), k, elapsed, o);
    }
    t.push(r);
    if (r.exploded) break;
    if (o.stop_on_kkt && r.kkt_residual <= o.kkt_stop) break;
  }
  return t;
}

inline AveragingMode parse_averaging(const std::string& s) {
  if (s == "none") return AveragingMode::None;
  if (s == "km" || s == "between_iterations") return AveragingMode::BetweenIterations;
  if (s == "raw" || s == "between_iterations_raw") return AveragingMode::BetweenIterationsRaw;
  if (s == "modules" || s == "between_modules") return AveragingMode::BetweenModules;
  throw Error(Errc::ConfigError, "unknown averaging '" + s + "'");
}

inline VarStrategy parse_strategy(const std::string& s) {
  if (s == "fixed") return VarStrategy::Fixed;
  if (s == "mix_hat_v") return VarStrategy::MixHatV;
  if (s == "subspace_mm") return VarStrategy::SubspaceMM;
  throw Error(Errc::ConfigError, "unknown strategy '" + s + "'");
}

inline const std::vector<std::string>& solver_names() {
  static const std::vector<std::string> n = {"asamp-l1", "vamp",      "admm",      "prs",      "ista",     "diag-vamp",
                                             "mps",      "asamp-bg",  "asamp-hmc", "vamp-bg",  "vamp-hmc"};
  return n;
}

inline std::set<std::string> solver_params(const std::string& name) {
  if (name == "asamp-l1") return {"strategy", "v", "v_hat", "rho0", "c", "s", "alpha", "epsilon_stab", "wide_cap", "averaging", "d"};
  if (name == "vamp") return {"v0"};
  if (name == "admm") return {"v0", "damping"};
  if (name == "prs") return {"v0"};
  if (name == "ista") return {"v"};
  if (name == "diag-vamp") return {"v0", "rho_bar", "ramp"};
  if (name == "mps") return {"v1", "v2"};
  if (name == "asamp-bg" || name == "asamp-hmc" || name == "vamp-bg" || name == "vamp-hmc")
    return {"c", "alpha", "averaging", "d", "epsilon", "sigma0_2", "verbatim_real_gamma", "strategy", "v", "v_hat"};
  throw Error(Errc::ConfigError, "unknown solver '" + name + "'");
}

inline void validate_solver(const SolverSpec& s) {
  detail::require_keys(s.params, solver_params(s.name), "solver " + s.name);
}

template <class T>
MmseOptions mmse_options(const SolverSpec& s, const InstanceRecipe& r) {
  using detail::get_or;
  MmseOptions o;
  o.prior = (s.name == "asamp-hmc" || s.name == "vamp-hmc") ? MmsePrior::HMC : MmsePrior::BG;
  o.subspace = s.name == "asamp-bg" || s.name == "asamp-hmc";
  o.hmc = r.hmc;
  if (r.prior == PriorKind::HMC)
    o.bg = {r.hmc.activity(), r.hmc.sigma0_2};
  else
    o.bg = r.bg;
  o.bg.epsilon = get_or<double>(s.params, "epsilon", o.bg.epsilon);
  o.bg.sigma0_2 = get_or<double>(s.params, "sigma0_2", o.bg.sigma0_2);
  if (o.prior == MmsePrior::HMC) o.hmc.sigma0_2 = get_or<double>(s.params, "sigma0_2", o.hmc.sigma0_2);
  o.beta_threshold = get_or<double>(s.params, "c", o.beta_threshold);
  o.bg_opts.verbatim_real_gamma = get_or<bool>(s.params, "verbatim_real_gamma", false);
  return o;
}

/// One solver on one instance.
template <class T>
RunTrace run_solver(const SolverSpec& s, const ProblemInstance<T>& p, const InstanceRecipe& recipe, const RunOptions& o) {
  using detail::get_or;
  validate_solver(s);
  const Index N = p.N();
  const json& q = s.params;

  if (s.name == "asamp-l1") {
    QuasiVarianceSchedule sch;
    sch.strategy = parse_strategy(get_or<std::string>(q, "strategy", "mix_hat_v"));
    double v = 1.0;
    if (sch.strategy == VarStrategy::Fixed && !q.contains("v")) v = guarded_v(1.0, GramCache<T>(p.A).tau_max());
    sch.v_fixed = get_or<double>(q, "v", v);
    sch.v_hat_fixed = get_or<double>(q, "v_hat", sch.v_fixed);
    sch.rho0 = get_or<double>(q, "rho0", sch.rho0);
    sch.c_guard = get_or<double>(q, "c", sch.c_guard);
    sch.s_window = get_or<int>(q, "s", sch.s_window);
    sch.alpha = get_or<double>(q, "alpha", sch.alpha);
    sch.epsilon_stab = get_or<double>(q, "epsilon_stab", sch.epsilon_stab);
    sch.wide_cap = get_or<double>(q, "wide_cap", sch.wide_cap);
    AveragingConfig avg;
    avg.mode = parse_averaging(get_or<std::string>(q, "averaging", "km"));
    avg.d = get_or<double>(q, "d", avg.d);
    if (!(sch.v_fixed > 0.0 && sch.v_hat_fixed > 0.0)) throw Error(Errc::ConfigError, "v and v_hat must be positive");
    if (!(avg.d > 0.0 && avg.d <= 1.0)) throw Error(Errc::ConfigError, "d must lie in (0, 1]");
    auto st = asm_init<T>(N, sch.v_fixed, sch.v_hat_fixed);
    return drive<T>(
        p, o, [&] { asamp_l1_iterate<T>(st, p, sch, avg); },
        [&] {
          return Snapshot<T>{&st.x_half, st.iter ? st.E.size() : 0, st.v, st.v_hat,
                             !std::isfinite(st.v_hat) || !st.x.allFinite()};
        });
  }

  if (s.name == "vamp" || s.name == "admm" || s.name == "prs") {
    const double v0 = get_or<double>(q, "v0", 1.0);
    if (!(v0 > 0.0)) throw Error(Errc::ConfigError, "v0 must be positive");
    VampOptions vo;
    if (s.name != "vamp") {
      vo.frozen = true;
      vo.damping = s.name == "admm" ? get_or<double>(q, "damping", 0.5) : 1.0;
    }
    GramCache<T> g(p.A);
    auto st = splitter_init<T>(N, v0);
    return drive<T>(
        p, o, [&] { vamp_iterate<T>(st, p, g, vo); },
        [&] { return Snapshot<T>{&st.x_half, st.support, st.v_A, st.v_B, st.exploded}; });
  }

  if (s.name == "ista") {
    double v = get_or<double>(q, "v", 0.0);
    if (!(v > 0.0)) v = 1.0 / GramCache<T>(p.A).tau_max();
    Vec<T> x = Vec<T>::Zero(N);
    std::size_t K = 0;
    return drive<T>(
        p, o,
        [&] {
          x = ista_step<T>(x, v, p);
          K = support_of<T>(x).size();
        },
        [&] { return Snapshot<T>{&x, K, v, std::numeric_limits<double>::quiet_NaN(), false}; });
  }

  if (s.name == "diag-vamp") {
    const double v0 = get_or<double>(q, "v0", 1.0);
    DiagVampOptions dv;
    dv.rho_bar = get_or<double>(q, "rho_bar", recipe.ensemble == Ensemble::Gaussian ? 0.9 : 0.8);
    dv.ramp = get_or<int>(q, "ramp", dv.ramp);
    auto st = splitter_init<T>(N, v0);
    return drive<T>(
        p, o, [&] { diag_vamp_iterate<T>(st, p, diag_vamp_rho(dv, st.iter)); },
        [&] { return Snapshot<T>{&st.x_half, st.support, st.v_A, st.v_B, st.exploded}; });
  }

  if (s.name == "mps") {
    MPSConfig cfg{get_or<double>(q, "v1", 1.0), get_or<double>(q, "v2", 1.0)};
    GramCache<T> g(p.A);
    const auto J_A = resolvent_grad_h<T>(p, g);
    const auto J_B = resolvent_l1<T>(p);
    Vec<T> z = Vec<T>::Zero(N);
    Vec<T> x = Vec<T>::Zero(N);
    std::size_t K = 0;
    return drive<T>(
        p, o,
        [&] {
          z = mps_step<T>(z, cfg, J_A, J_B);
          x = mps_readout<T>(z, cfg, J_B);
          K = support_of<T>(x).size();
        },
        [&] { return Snapshot<T>{&x, K, cfg.v1, cfg.v2, false}; });
  }

  // MMSE family
  const MmseOptions mo = mmse_options<T>(s, recipe);
  QuasiVarianceSchedule sch;
  sch.strategy = parse_strategy(get_or<std::string>(q, "strategy", "subspace_mm"));
  if (sch.strategy == VarStrategy::MixHatV) throw Error(Errc::ConfigError, "mix_hat_v is an L1 strategy");
  sch.alpha = get_or<double>(q, "alpha", sch.alpha);
  sch.v_fixed = get_or<double>(q, "v", 1.0);
  sch.v_hat_fixed = get_or<double>(q, "v_hat", 1.0);
  AveragingConfig avg;
  avg.mode = parse_averaging(get_or<std::string>(q, "averaging", "none"));
  avg.d = get_or<double>(q, "d", avg.d);
  auto st = mmse_init<T>(N, mo);
  std::size_t K = N;
  return drive<T>(
      p, o,
      [&] {
        K = st.E.size();
        asm_iterate_mmse<T>(st, p, mo, sch, avg);
      },
      [&] { return Snapshot<T>{&st.x_half, st.iter ? K : 0, st.v, st.v_hat, st.exploded}; });
}

// ---- experiments ----

struct RunResult {
  std::string solver;
  int replication = 0;
  RunTrace trace;
};

struct Report {
  std::string experiment;
  std::vector<std::string> solvers;  // labels in config order
  std::vector<RunResult> runs;       // sorted by (solver order, replication)
};

inline RunOptions run_options(const ExperimentConfig& c) {
  RunOptions o;
  o.max_iters = c.max_iters;
  o.kkt_stop = c.kkt_stop;
  o.stop_on_kkt = c.stop_on_kkt && c.kind == ExperimentKind::Lasso;
  o.timing = c.timing;
  o.compute_kkt = c.kind == ExperimentKind::Lasso;
  return o;
}

template <class T>
std::vector<RunResult> run_replication(const ExperimentConfig& c, int r) {
  InstanceRecipe rec = c.recipe;
  rec.seed = c.recipe.seed + static_cast<std::uint64_t>(r);
  const ProblemInstance<T> p = make_instance<T>(rec);
  const RunOptions o = run_options(c);
  std::vector<RunResult> out;
  for (const auto& s : c.solvers) out.push_back({s.label, r, run_solver<T>(s, p, rec, o)});
  return out;
}

/// Runs every replication (optionally on worker threads) and merges in a fixed order.
inline Report run_experiment(const ExperimentConfig& c) {
  if (c.solvers.empty()) throw Error(Errc::ConfigError, "no solvers configured");
  for (const auto& s : c.solvers) validate_solver(s);
  const int R = c.reps;
  std::vector<std::vector<RunResult>> slots(static_cast<std::size_t>(R));
  std::vector<std::exception_ptr> errs(static_cast<std::size_t>(R));
  std::atomic<int> next{0};
  auto work = [&] {
    for (int r; (r = next.fetch_add(1)) < R;) {
      try {
        slots[static_cast<std::size_t>(r)] = c.recipe.field == Field::Real ? run_replication<double>(c, r)
                                                                          : run_replication<cplx>(c, r);
      } catch (...) {
        errs[static_cast<std::size_t>(r)] = std::current_exception();
      }
    }
  };
  const int W = std::max(1, std::min(c.workers == 0 ? static_cast<int>(std::thread::hardware_concurrency()) : c.workers, R));
  if (W == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < W; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errs)
    if (e) std::rethrow_exception(e);
  Report rep;
  rep.experiment = c.experiment;
  for (const auto& s : c.solvers) rep.solvers.push_back(s.label);
  for (std::size_t si = 0; si < c.solvers.size(); ++si)
    for (int r = 0; r < R; ++r) rep.runs.push_back(std::move(slots[static_cast<std::size_t>(r)][si]));
  return rep;
}

inline std::vector<RunTrace> traces_of(const Report& rep, const std::string& solver) {
  std::vector<RunTrace> t;
  for (const auto& r : rep.runs)
    if (r.solver == solver) t.push_back(r.trace);
  return t;
}

inline int last_iter(const std::vector<RunTrace>& ts) {
  int m = 0;
  for (const auto& t : ts)
    if (!t.empty()) m = std::max(m, t.back().iter);
  return m;
}

// ---- CSV ----

inline const char* kTraceHeader =
    "experiment,solver,replication,iter,kkt_residual,nmse_db,support_size,v,v_hat,elapsed_s,exploded";
inline const char* kSummaryHeader =
    "experiment,solver,iter,runs,exploded_runs,median_kkt_residual,window_min_kkt_residual,median_nmse_db";

inline std::string fmt17(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

inline void write_trace_csv(const Report& rep, std::ostream& os) {
  os << kTraceHeader << '\n';
  for (const auto& run : rep.runs)
    for (const auto& r : run.trace.records())
      os << rep.experiment << ',' << run.solver << ',' << run.replication << ',' << r.iter << ',' << fmt17(r.kkt_residual)
         << ',' << fmt17(r.nmse_db) << ',' << r.support_size << ',' << fmt17(r.v) << ',' << fmt17(r.v_hat) << ','
         << fmt17(r.elapsed_s) << ',' << (r.exploded ? 1 : 0) << '\n';
}

inline void write_summary_csv(const Report& rep, std::ostream& os) {
  os << kSummaryHeader << '\n';
  for (const auto& s : rep.solvers) {
    const auto ts = traces_of(rep, s);
    if (ts.empty()) continue;
    const int K = last_iter(ts);
    std::vector<double> kkt(static_cast<std::size_t>(K) + 1), nmse(kkt.size());
    std::vector<int> boom(kkt.size());
    for (int k = 0; k <= K; ++k) {
      kkt[static_cast<std::size_t>(k)] = median_over_runs(ts, Metric::Kkt, k);
      nmse[static_cast<std::size_t>(k)] = median_over_runs(ts, Metric::Nmse, k);
      int b = 0;
      for (const auto& t : ts) b += std::isinf(value_at(t, Metric::Kkt, k)) && t.exploded();
      boom[static_cast<std::size_t>(k)] = b;
    }
    for (int k = 0; k <= K; ++k) {
      const int w0 = k / 5 * 5, w1 = std::min(K, w0 + 4);
      double wm = std::numeric_limits<double>::infinity();
      for (int i = w0; i <= w1; ++i) wm = std::min(wm, kkt[static_cast<std::size_t>(i)]);
      os << rep.experiment << ',' << s << ',' << k << ',' << ts.size() << ',' << boom[static_cast<std::size_t>(k)] << ','
         << fmt17(kkt[static_cast<std::size_t>(k)]) << ',' << fmt17(wm) << ',' << fmt17(nmse[static_cast<std::size_t>(k)])
         << '\n';
    }
  }
}

inline void write_file(const std::string& path, const std::function<void(std::ostream&)>& fn) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::IoError, "cannot write " + path);
  fn(f);
  if (!f) throw Error(Errc::IoError, "write failed for " + path);
}

struct CsvPaths {
  std::string trace;
  std::string summary;
};

inline CsvPaths emit_csv(const Report& rep, const std::string& dir) {
  CsvPaths p{dir + "/" + rep.experiment + "_trace.csv", dir + "/" + rep.experiment + "_summary.csv"};
  write_file(p.trace, [&](std::ostream& os) { write_trace_csv(rep, os); });
  write_file(p.summary, [&](std::ostream& os) { write_summary_csv(rep, os); });
  return p;
}

struct TraceRow {
  std::string experiment;
  std::string solver;
  int replication = 0;
  TraceRecord record;
};

inline double parse_double(const std::string& s) {
  if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw Error(Errc::IoError, "bad number '" + s + "'");
  return v;
}

inline std::vector<TraceRow> read_trace_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kTraceHeader) throw Error(Errc::IoError, "unexpected trace header");
  std::vector<TraceRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 11) throw Error(Errc::IoError, "bad trace row: " + line);
    TraceRow r;
    r.experiment = f[0];
    r.solver = f[1];
    r.replication = std::stoi(f[2]);
    r.record.iter = std::stoi(f[3]);
    r.record.kkt_residual = parse_double(f[4]);
    r.record.nmse_db = parse_double(f[5]);
    r.record.support_size = static_cast<std::size_t>(std::stoull(f[6]));
    r.record.v = parse_double(f[7]);
    r.record.v_hat = parse_double(f[8]);
    r.record.elapsed_s = parse_double(f[9]);
    r.record.exploded = f[10] == "1";
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---- instance files ----

/// Writes the recipe and, for real instances, the explicit data.
inline json instance_to_json(const InstanceRecipe& r, bool with_data) {
  json j;
  j["recipe"] = recipe_to_json(r);
  if (with_data) {
    if (r.field != Field::Real) throw Error(Errc::ConfigError, "explicit data is written for real instances only");
    const auto p = make_instance<double>(r);
    json A = json::array();
    for (Index i = 0; i < p.M(); ++i) A.push_back(std::vector<double>(p.A.row(i).begin(), p.A.row(i).end()));
    j["A"] = A;
    j["y"] = std::vector<double>(p.y.begin(), p.y.end());
    j["sigma_w2"] = p.sigma_w2;
    j["lambda"] = p.lambda;
    j["x_dag"] = std::vector<double>(p.x_dag->begin(), p.x_dag->end());
  }
  return j;
}

inline RVec vec_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const RVec>(v.data(), static_cast<Index>(v.size()));
}

/// Real instance from a file: explicit data wins over the recipe.
inline ProblemInstance<double> instance_from_json(const json& j) {
  detail::require_keys(j, {"recipe", "A", "y", "sigma_w2", "lambda", "x_dag"}, "instance");
  if (!j.contains("A")) {
    if (!j.contains("recipe")) throw Error(Errc::ConfigError, "instance needs a recipe or explicit data");
    const auto r = recipe_from_json(j.at("recipe"));
    if (r.field != Field::Real) throw Error(Errc::ConfigError, "solve handles real instances");
    return make_instance<double>(r);
  }
  ProblemInstance<double> p;
  const auto& rows = j.at("A");
  const auto M = static_cast<Index>(rows.size());
  if (M == 0) throw Error(Errc::DimensionError, "empty A");
  const auto N = static_cast<Index>(rows.at(0).size());
  p.A.resize(M, N);
  for (Index i = 0; i < M; ++i) {
    const RVec row = vec_from_json(rows.at(static_cast<std::size_t>(i)));
    if (row.size() != N) throw Error(Errc::DimensionError, "ragged A");
    p.A.row(i) = row.transpose();
  }
  p.y = vec_from_json(j.at("y"));
  if (p.y.size() != M) throw Error(Errc::DimensionError, "y length differs from rows of A");
  p.sigma_w2 = detail::get_or<double>(j, "sigma_w2", 1.0);
  p.lambda = detail::get_or<double>(j, "lambda", p.sigma_w2);
  if (j.contains("x_dag")) {
    p.x_dag = vec_from_json(j.at("x_dag"));
    if (p.x_dag->size() != N) throw Error(Errc::DimensionError, "x_dag length differs from columns of A");
  }
  return p;
}

}  // namespace asamp
