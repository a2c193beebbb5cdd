#include <asamp/harness.hpp>
#include <asamp/verify.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>

using namespace asamp;

namespace {

struct Line {
  int id;
  bool pass;
  std::string text;
};

std::vector<Line> lines;

void report(int id, bool pass, const std::string& text) {
  lines.push_back({id, pass, text});
  std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << id << ": " << text << std::endl;
}

std::string g(double x) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3g", x);
  return b;
}

ExperimentConfig config(const std::string& name) { return load_config(std::string(ASAMP_CONFIG_DIR) + "/" + name + ".json"); }

double median_iters_to(const std::vector<RunTrace>& ts, double tol, int censor) {
  std::vector<double> v;
  for (const auto& t : ts) {
    const int k = iterations_to(t, tol);
    v.push_back(k < 0 ? censor : k);
  }
  return lower_median(v);
}

double total_time(const std::vector<RunTrace>& ts) {
  std::vector<double> v;
  for (const auto& t : ts) v.push_back(t.back().elapsed_s);
  return lower_median(v);
}

std::string csv_of(const Report& rep) {
  std::ostringstream os;
  write_trace_csv(rep, os);
  write_summary_csv(rep, os);
  return os.str();
}

void timing_line(const std::string& tag, const Report& rep) {
  const double a = total_time(traces_of(rep, "asamp-l1")), v = total_time(traces_of(rep, "vamp"));
  std::cout << "info  timing " << tag << ": median seconds asamp-l1 " << g(a) << ", vamp " << g(v)
            << (a < v ? " (asamp faster)" : " (vamp faster)") << std::endl;
}

// Criteria 1 and 10 share the runs: single worker, then two workers, timing off.
void fig2(const std::string& name, bool& ok1, std::string& msg1, bool& ok10) {
  auto c = config(name);
  c.max_iters = 200;
  c.timing = false;
  c.workers = 1;
  const auto rep = run_experiment(c);
  const auto a = traces_of(rep, "asamp-l1");
  const double ka = median_over_runs(a, Metric::Kkt, 200);
  const double na = median_over_runs(a, Metric::Nmse, 200);
  const double kv = median_over_runs(traces_of(rep, "vamp"), Metric::Kkt, 200);
  const double kd = median_over_runs(traces_of(rep, "admm"), Metric::Kkt, 200);
  const bool ok = ka <= 1e-6 && na < 0.0 && kv > 1e-4 && kd > 1e-4;
  ok1 = ok1 && ok;
  msg1 += name + " (asamp " + g(ka) + " at 200, median iters " + g(median_iters_to(a, 1e-6, 201)) + ", nmse " + g(na) +
          " dB; vamp " + g(kv) + "; admm " + g(kd) + ") ";
  c.workers = 2;
  ok10 = ok10 && csv_of(rep) == csv_of(run_experiment(c));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    bool ok1 = true, ok10 = true;
    std::string msg1;
    fig2("fig2_gaussian", ok1, msg1, ok10);
    fig2("fig2_orthogonal", ok1, msg1, ok10);
    report(1, ok1, "median KKT <= 1e-6 by iteration 200, vamp and admm > 1e-4: " + msg1);

    {
      const auto rep = run_experiment(config("g50db"));
      const auto v = traces_of(rep, "vamp");
      int boom = 0;
      for (const auto& t : v) boom += t.exploded();
      const double it = median_iters_to(traces_of(rep, "asamp-l1"), 1e-6, 4001);
      const bool ok = 2 * boom >= static_cast<int>(v.size()) && it <= 4000;
      const auto a = traces_of(rep, "asamp-l1");
      std::vector<double> sz;
      for (const auto& t : a) sz.push_back(static_cast<double>(t.back().support_size));
      report(2, ok, "vamp degenerate in " + std::to_string(boom) + "/" + std::to_string(v.size()) +
                        " runs; asamp-l1 median iterations to 1e-6: " + g(it) + " (4001 = not reached), median kkt at 4000 " +
                        g(median_over_runs(a, Metric::Kkt, 4000)) + ", median final |E| " + g(lower_median(sz)));
      timing_line("g50db", rep);
    }

    {
      const auto rep = run_experiment(config("g4m"));
      const double a = median_iters_to(traces_of(rep, "asamp-l1"), 1e-6, 4001);
      const double d = median_iters_to(traces_of(rep, "admm"), 1e-6, 4001);
      report(3, a <= 0.5 * d, "median iterations to 1e-6: asamp-l1 " + g(a) + ", admm " + g(d) + " (4001 = not reached)");
      timing_line("g4m", rep);
    }

    {
      const auto rep = run_experiment(config("channel"));
      const auto h = traces_of(rep, "asamp-hmc"), b = traces_of(rep, "asamp-bg");
      const double h4 = median_over_runs(h, Metric::Nmse, 4), hf = median_over_runs(h, Metric::Nmse, 100);
      const double bf = median_over_runs(b, Metric::Nmse, 100);
      const bool ok = h4 <= hf + 1.0 && hf <= bf - 1.0;
      report(4, ok, "asamp-hmc nmse " + g(h4) + " dB at 4, floor " + g(hf) + " dB; asamp-bg floor " + g(bf) + " dB");
      int near = 0, deep = 0;
      for (const auto& t : h) {
        near += value_at(t, Metric::Nmse, 4) <= value_at(t, Metric::Nmse, 100) + 1.0;
        deep += value_at(t, Metric::Nmse, 100) <= -20.0;
      }
      std::cout << "info  channel: asamp-hmc runs within 1 dB of their own floor by iteration 4: " << near << "/" << h.size()
                << ", runs with floor <= -20 dB: " << deep << "/" << h.size() << std::endl;
    }

    const auto suite = theory_suite(20240601);
    for (std::size_t i = 0; i < suite.size(); ++i)
      report(5 + static_cast<int>(i), suite[i].passed, suite[i].name + ": " + suite[i].summary);

    report(10, ok10, "fig2 trace and summary CSVs byte-identical with 1 and 2 workers");
  } catch (const std::exception& e) {
    std::cout << "FAIL  acceptance aborted: " << e.what() << std::endl;
    return 1;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto fails = std::count_if(lines.begin(), lines.end(), [](const Line& l) { return !l.pass; });
  std::cout << "info  " << lines.size() - static_cast<std::size_t>(fails) << "/" << lines.size() << " criteria passed in "
            << g(secs) << " s" << std::endl;
  return fails == 0 ? 0 : 1;
}
