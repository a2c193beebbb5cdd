#include <asamp/harness.hpp>
#include <asamp/theory.hpp>
#include <asamp/verify.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string default_out_dir() {
  const char* e = std::getenv("ASAMP_OUT_DIR");
  return e && *e ? e : "results";
}

struct BenchFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> reps;
  bool full = false;
  std::string out;
  std::optional<int> workers;
  bool no_timing = false;
};

void add_bench_flags(CLI::App* sc, BenchFlags& f) {
  sc->add_option("--config", f.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sc->add_option("--seed", f.seed, "base seed; replication r uses seed + r");
  sc->add_option("--reps", f.reps, "number of replications")->check(CLI::PositiveNumber);
  sc->add_flag("--full", f.full, "use the config's full replication count");
  sc->add_option("--out", f.out, "output directory (default $ASAMP_OUT_DIR or ./results)");
  sc->add_option("--workers", f.workers, "worker threads, 0 = hardware concurrency")->check(CLI::NonNegativeNumber);
  sc->add_flag("--no-timing", f.no_timing, "record elapsed_s as 0 so CSVs are reproducible byte for byte");
}

int run_bench(const BenchFlags& f, asamp::ExperimentKind kind) {
  auto cfg = asamp::load_config(f.config);
  if (cfg.kind != kind)
    throw asamp::Error(asamp::Errc::ConfigError, "config kind does not match the subcommand");
  if (f.seed) cfg.recipe.seed = *f.seed;
  if (f.full) cfg.reps = cfg.full_reps;
  if (f.reps) cfg.reps = *f.reps;
  if (f.workers) cfg.workers = *f.workers;
  if (f.no_timing) cfg.timing = false;
  const std::string dir = f.out.empty() ? default_out_dir() : f.out;
  fs::create_directories(dir);
  std::cerr << "running " << cfg.experiment << ": " << cfg.reps << " replications, " << cfg.solvers.size()
            << " solvers\n";
  const auto rep = asamp::run_experiment(cfg);
  const auto paths = asamp::emit_csv(rep, dir);
  for (const auto& s : rep.solvers) {
    const auto ts = asamp::traces_of(rep, s);
    int boom = 0;
    for (const auto& t : ts) boom += t.exploded();
    const int K = asamp::last_iter(ts);
    std::cout << s << ": last iter " << K;
    if (kind == asamp::ExperimentKind::Lasso)
      std::cout << ", median kkt " << asamp::median_over_runs(ts, asamp::Metric::Kkt, K);
    std::cout << ", median nmse_db " << asamp::median_over_runs(ts, asamp::Metric::Nmse, K) << ", exploded " << boom
              << "/" << ts.size() << "\n";
  }
  std::cout << "wrote " << paths.trace << " and " << paths.summary << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Alternating subspace method solvers and benchmarks"};
  app.require_subcommand(1);

  BenchFlags lasso, channel;
  auto* bl = app.add_subcommand("bench-lasso", "lasso convergence benchmark");
  add_bench_flags(bl, lasso);
  auto* bc = app.add_subcommand("bench-channel", "channel estimation benchmark");
  add_bench_flags(bc, channel);

  auto* vt = app.add_subcommand("verify-theory", "numerical checks of the convergence theory");
  std::uint64_t vseed = 20240601;
  std::string vout;
  vt->add_option("--seed", vseed, "seed for the random instances");
  vt->add_option("--out", vout, "write the results as JSON to this file");

  auto* so = app.add_subcommand("solve", "run one solver on one real instance file");
  std::string inst, solver = "asamp-l1", sout;
  int max_iters = 4000;
  double kkt_stop = 1e-6;
  so->add_option("--config", inst, "instance file (JSON)")->required()->check(CLI::ExistingFile);
  so->add_option("--solver", solver, "solver name")->check(CLI::IsMember(asamp::solver_names()));
  so->add_option("--max-iters", max_iters, "iteration cap")->check(CLI::NonNegativeNumber);
  so->add_option("--kkt-stop", kkt_stop, "stop once the residual is at or below this");
  bool with_ref = false;
  so->add_flag("--reference", with_ref, "also compute the reference lasso solution");
  so->add_option("--out", sout, "write the trace (and reference) as JSON to this file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*bl) return run_bench(lasso, asamp::ExperimentKind::Lasso);
    if (*bc) return run_bench(channel, asamp::ExperimentKind::Channel);
    if (*vt) {
      bool all = true;
      asamp::json out = asamp::json::array();
      for (const auto& r : asamp::theory_suite(vseed)) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.summary << "\n";
        for (const auto& d : r.details) std::cout << "    " << d << "\n";
        out.push_back({{"name", r.name}, {"passed", r.passed}, {"summary", r.summary}, {"details", r.details}});
        all = all && r.passed;
      }
      if (!vout.empty()) {
        std::ofstream f(vout);
        if (!f) throw asamp::Error(asamp::Errc::IoError, "cannot write " + vout);
        f << out.dump(2) << "\n";
      }
      return all ? 0 : 1;
    }
    if (*so) {
      const auto j = asamp::read_json_file(inst);
      const auto p = asamp::instance_from_json(j);
      asamp::InstanceRecipe rec;
      if (j.contains("recipe")) rec = asamp::recipe_from_json(j.at("recipe"));
      asamp::RunOptions o;
      o.max_iters = max_iters;
      o.kkt_stop = kkt_stop;
      asamp::SolverSpec spec{solver, solver, asamp::json::object()};
      const auto t = asamp::run_solver<double>(spec, p, rec, o);
      const auto& last = t.back();
      std::cout << solver << ": " << last.iter << " iterations, kkt " << last.kkt_residual << ", support "
                << last.support_size << (last.exploded ? ", exploded" : "") << "\n";
      std::optional<asamp::OracleSolution> ref;
      if (with_ref) {
        ref = asamp::oracle_solution(p);
        std::cout << "reference solution (" << ref->method << "): support " << ref->support.size() << "\n";
      }
      if (!sout.empty()) {
        asamp::json r;
        r["solver"] = solver;
        r["iterations"] = last.iter;
        r["kkt_residual"] = last.kkt_residual;
        r["exploded"] = last.exploded;
        if (ref) r["reference"] = std::vector<double>(ref->x_star.begin(), ref->x_star.end());
        asamp::json tr = asamp::json::array();
        for (const auto& rr : t.records())
          tr.push_back({{"iter", rr.iter}, {"kkt_residual", rr.kkt_residual}, {"support_size", rr.support_size}});
        r["trace"] = tr;
        std::ofstream f(sout);
        if (!f) throw asamp::Error(asamp::Errc::IoError, "cannot write " + sout);
        f << r.dump(2) << "\n";
      }
      return last.exploded ? 1 : 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
