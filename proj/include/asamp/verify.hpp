#pragma once

#include "asm.hpp"
#include "denoisers.hpp"
#include "linalg.hpp"
#include "metrics.hpp"
#include "problem.hpp"
#include "rng.hpp"
#include "splitting.hpp"
#include "theory.hpp"

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

namespace asamp {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string summary;
  std::vector<std::string> details;
};

namespace verify_detail {

inline std::string num(double x) {
  std::ostringstream os;
  os.precision(3);
  os << x;
  return os.str();
}

inline double log_uniform(Rng& r, double lo, double hi) { return lo * std::pow(hi / lo, r.uniform()); }

// Small real lasso with lambda = frac * ||A^T y||_inf and unit noise normalization.
inline ProblemInstance<double> theory_instance(std::uint64_t seed, Index M, Index N, double frac = 0.2) {
  InstanceRecipe r;
  r.M = M;
  r.N = N;
  r.bg = {0.3, 1.0};
  r.snr_db = 20.0;
  r.seed = seed;
  r.require_nonempty = true;
  ProblemInstance<double> p = make_instance<double>(r);
  p.sigma_w2 = 1.0;
  p.lambda = frac * (p.A.transpose() * p.y).lpNorm<Eigen::Infinity>();
  return p;
}

inline RMat random_spd(Rng& r, Index n, double lo, double hi) {
  RMat G(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) G(i, j) = r.normal();
  Eigen::HouseholderQR<RMat> qr(G);
  const RMat Q = qr.householderQ();
  RVec d(n);
  for (Index i = 0; i < n; ++i) d[i] = log_uniform(r, lo, hi);
  RMat S = Q * d.asDiagonal() * Q.transpose();
  return 0.5 * (S + S.transpose());
}

}  // namespace verify_detail

/// ASAMP-L1 against the enumerated lasso optimum on small instances.
inline CheckResult check_oracle_equivalence(std::uint64_t seed, int count = 100, int max_iters = 20000) {
  using namespace verify_detail;
  CheckResult c{"oracle equivalence", true, "", {}};
  Rng rng(seed);
  int done = 0, skipped = 0, failed = 0;
  double worst = 0.0;
  int worst_iters = 0;
  for (std::uint64_t k = 0; done < count && k < static_cast<std::uint64_t>(count) * 20; ++k) {
    const Index N = 4 + 2 * static_cast<Index>(rng.below(5));
    const auto p = theory_instance(derive_seed(seed, 1000 + k), N / 2, N);
    OracleSolution o;
    try {
      o = oracle_solution(p);
    } catch (const Error&) {
      ++skipped;
      continue;
    }
    QuasiVarianceSchedule q;
    AveragingConfig avg;
    auto st = asm_init<double>(N, q.v_fixed, q.v_hat_fixed);
    int it = 0;
    double kkt = 1.0;
    for (; it < max_iters && kkt > 1e-10; ++it) {
      asamp_l1_iterate<double>(st, p, q, avg);
      kkt = kkt_residual<double>(st.x_half, p.A, p.y, p.lambda, 1.0);
      if (!std::isfinite(kkt)) break;
    }
    const double err = (st.x_half - o.x_star).lpNorm<Eigen::Infinity>();
    ++done;
    worst_iters = std::max(worst_iters, it);
    if (!(err <= 1e-7) || !(kkt <= 1e-10)) {
      ++failed;
      if (c.details.size() < 10)
        c.details.push_back("instance " + std::to_string(k) + " N=" + std::to_string(N) + ": err=" + num(err) +
                            " kkt=" + num(kkt));
    }
    if (std::isfinite(err)) worst = std::max(worst, err);
  }
  c.passed = failed == 0 && done == count;
  c.summary = std::to_string(done) + " instances, " + std::to_string(failed) + " mismatches, max |x-x*|_inf=" +
              num(worst) + ", max iters=" + std::to_string(worst_iters) + ", skipped non-general=" +
              std::to_string(skipped);
  return c;
}

/// H(G(mu*)) = mu* for super-supports of the solution support.
inline CheckResult check_fixed_point(std::uint64_t seed, int count = 50, int supports = 10) {
  using namespace verify_detail;
  CheckResult c{"fixed point", true, "", {}};
  Rng rng(seed);
  int done = 0, skipped = 0, bad = 0;
  double worst = 0.0;
  for (std::uint64_t k = 0; done < count && k < static_cast<std::uint64_t>(count) * 20; ++k) {
    const Index N = 10 + static_cast<Index>(rng.below(31));
    const Index M = std::max<Index>(2, N / 2);
    const auto p = theory_instance(derive_seed(seed, 2000 + k), M, N);
    OracleSolution o;
    try {
      o = oracle_solution(p);
    } catch (const Error&) {
      ++skipped;
      continue;
    }
    const double tt = gram_extremes<double>(p.A, complement(o.support, N)).max;
    const double vmax = tt > 0.0 ? 4.0 / tt : 4.0;
    ++done;
    for (int s = 0; s < supports; ++s) {
      IndexSet E = o.support;
      const double keep = rng.uniform();
      for (Index i : complement(o.support, N))
        if (rng.uniform() < keep) E.push_back(i);
      std::sort(E.begin(), E.end());
      const double v = vmax * (0.01 + 0.98 * rng.uniform());
      const double vh = vmax * (0.01 + 0.98 * rng.uniform());
      double res;
      try {
        res = lemma3_residual(p, o, E, v, vh);
      } catch (const Error& e) {
        res = std::numeric_limits<double>::infinity();
      }
      worst = std::max(worst, res);
      if (!(res <= 1e-8)) {
        ++bad;
        if (c.details.size() < 10)
          c.details.push_back("instance " + std::to_string(k) + " |E|=" + std::to_string(E.size()) + ": " + num(res));
      }
    }
  }
  c.passed = bad == 0 && done == count;
  c.summary = std::to_string(done) + " instances x " + std::to_string(supports) + " supports, max residual=" +
              num(worst) + ", failures=" + std::to_string(bad) + ", skipped=" + std::to_string(skipped);
  return c;
}

/// Measured per-step ratios against the convergence factor on the regime support <= E <= equicorrelation set.
inline CheckResult check_contraction(std::uint64_t seed, int count = 50, int starts = 4, int steps = 60) {
  using namespace verify_detail;
  CheckResult c{"contraction bound", true, "", {}};
  Rng rng(seed);
  int done = 0, skipped = 0, bad = 0;
  long in_regime = 0, total = 0;
  double worst_gap = -std::numeric_limits<double>::infinity();
  for (std::uint64_t k = 0; done < count && k < static_cast<std::uint64_t>(count) * 20; ++k) {
    const Index N = 8 + static_cast<Index>(rng.below(17));
    const Index M = N / 2;
    const auto p = theory_instance(derive_seed(seed, 3000 + k), M, N);
    OracleSolution o;
    try {
      o = oracle_solution(p);
    } catch (const Error&) {
      ++skipped;
      continue;
    }
    if (!o.general || o.support.empty()) {
      ++skipped;
      continue;
    }
    ++done;
    for (int s = 0; s < starts; ++s) {
      const SpectralSummary S0 = spectral_summary(p.A, o.support, o);
      const double v = (S0.tau_tilde_star > 0.0 ? 4.0 / S0.tau_tilde_star : 4.0) * (0.05 + 0.95 * rng.uniform());
      const double vh = v * log_uniform(rng, 0.5, 20.0);
      const double C = convergence_factor(v, vh, S0);
      const RVec ms = o.mu_star(p.A, p.y, v);
      RVec d(N);
      for (Index i = 0; i < N; ++i) d[i] = rng.normal();
      const double r = std::min(o.omega0(v), o.omega1) * log_uniform(rng, 0.05, 2.0);
      const RVec mu0 = ms + (std::isfinite(r) ? r : 1.0) * d / d.norm();
      std::vector<ContractionSample> samples;
      try {
        samples = measure_contraction(p, o, mu0, v, vh, steps);
      } catch (const Error&) {
        continue;
      }
      for (const auto& sm : samples) {
        ++total;
        if (!sm.in_regime) continue;
        ++in_regime;
        worst_gap = std::max(worst_gap, sm.ratio - C);
        if (!(sm.ratio <= C + 1e-6)) {
          ++bad;
          if (c.details.size() < 10)
            c.details.push_back("instance " + std::to_string(k) + " step " + std::to_string(sm.k) + ": ratio " +
                                num(sm.ratio) + " > C " + num(C));
        }
      }
    }
  }
  c.passed = bad == 0 && done == count && in_regime > 0;
  c.summary = std::to_string(done) + " instances, " + std::to_string(in_regime) + "/" + std::to_string(total) +
              " steps in regime, violations=" + std::to_string(bad) + ", max(ratio - C)=" + num(worst_gap) +
              ", skipped=" + std::to_string(skipped);
  return c;
}

/// Spectral radius bound, stepsize optimality, MPS/PRS agreement and the support-zeroing bound.
inline CheckResult check_mps(std::uint64_t seed) {
  using namespace verify_detail;
  CheckResult c{"MPS theory", true, "", {}};
  Rng rng(seed);

  // (a)
  int a_bad = 0;
  double a_worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Index n = 2 + static_cast<Index>(rng.below(9));
    const RMat A = random_spd(rng, n, 0.01, 100.0), B = random_spd(rng, n, 0.01, 100.0);
    const double tA = eig_sym_extremes<double>(A).max;
    const double v2 = log_uniform(rng, 0.01, 10.0);
    const double v1 = v2 - (0.05 + 0.9 * rng.uniform()) * std::min(v2, 2.0 / tA);
    const auto r = mps_quadratic_radii(A, B, v1, v2);
    a_worst = std::max(a_worst, r.rho12);
    if (!(r.rho12 < 1.0) || r.rho12 > r.rho1 * r.rho2 * (1.0 + 1e-9) + 1e-12) ++a_bad;
  }
  c.details.push_back("(a) 1000 SPD pairs: max rho(S1 S2)=" + num(a_worst) + ", failures=" + std::to_string(a_bad));

  // (b)
  int b_bad = 0;
  double b_margin = std::numeric_limits<double>::infinity();
  for (int t = 0; t < 20; ++t) {
    Extremes t1, t2;
    t1.min = log_uniform(rng, 0.01, 1.0);
    t1.max = t1.min * log_uniform(rng, 1.0, 1000.0);
    t2.min = log_uniform(rng, 0.01, 1.0);
    t2.max = t2.min * log_uniform(rng, 1.0, 1000.0);
    const VPair vp = solve_v_rho(t1, t2);
    const double best = rho_product(t1, t2, vp.v1, vp.v2);
    const double lo = 0.01 / std::max(t1.max, t2.max), hi = 100.0 / std::min(t1.min, t2.min);
    double gmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 200; ++i)
      for (int j = 0; j < 200; ++j) {
        const double v1 = lo * std::pow(hi / lo, i / 199.0), v2 = lo * std::pow(hi / lo, j / 199.0);
        gmin = std::min(gmin, rho_product(t1, t2, v1, v2));
      }
    b_margin = std::min(b_margin, gmin - best);
    if (best > gmin * (1.0 + 1e-9)) ++b_bad;
  }
  c.details.push_back("(b) 20 spectra x 200x200 grid: min(grid - solved)=" + num(b_margin) +
                      ", failures=" + std::to_string(b_bad));

  // (c)
  int c_bad = 0;
  for (int t = 0; t < 20; ++t) {
    const auto p = theory_instance(derive_seed(seed, 4000 + static_cast<std::uint64_t>(t)), 20, 40);
    const double v = log_uniform(rng, 0.1, 2.0);
    const MPSConfig cfg{v, v};
    const auto J_h = resolvent_grad_h<double>(p), J_g = resolvent_l1<double>(p);
    RVec z = RVec::Zero(p.N()), mu = z;
    bool same = true;
    for (int k = 0; k < 50 && same; ++k) {
      z = mps_step<double>(z, cfg, J_g, J_h);
      mu = prs_step<double>(mu, v, J_h, J_g).mu_B;
      same = (z.array() == mu.array()).all();
    }
    if (!same) ++c_bad;
  }
  c.details.push_back("(c) 20 instances x 50 sweeps: bitwise mismatches=" + std::to_string(c_bad));

  // (d)
  int d_done = 0, d_bad = 0, d_skip = 0;
  double d_slack = std::numeric_limits<double>::infinity();
  for (std::uint64_t k = 0; d_done < 50 && k < 2000; ++k) {
    auto p = theory_instance(derive_seed(seed, 5000 + k), 6, 12);
    // unit lambda: rescale the data so lambda = 1
    const double s = 1.0 / p.lambda;
    p.y *= s;
    p.lambda = 1.0;
    OracleSolution o;
    try {
      o = oracle_solution(p);
    } catch (const Error&) {
      ++d_skip;
      continue;
    }
    if (!o.general || !std::isfinite(o.omega0_tilde)) {
      ++d_skip;
      continue;
    }
    const double tN = gram_extremes<double>(p.A, full_set(p.N())).max;
    const double v2 = (0.5 + 2.5 * rng.uniform()) / tN;
    const double v1 = v2 - (0.2 + 0.6 * rng.uniform()) * std::min(v2, 2.0 / tN);
    const auto chk = check_mps_zeroing(p, o, {v1, v2}, RVec::Zero(p.N()), 200, 20000);
    if (chk.checked_until == 0) {
      ++d_skip;
      continue;
    }
    ++d_done;
    d_slack = std::min(d_slack, std::ceil(chk.bound) - static_cast<double>(chk.first_settled));
    if (!chk.holds) ++d_bad;
  }
  c.details.push_back("(d) " + std::to_string(d_done) + " instances: min(bound - first settled)=" + num(d_slack) +
                      ", failures=" + std::to_string(d_bad) + ", skipped=" + std::to_string(d_skip));

  c.passed = a_bad == 0 && b_bad == 0 && c_bad == 0 && d_bad == 0 && d_done == 50;
  c.summary = "(a) " + std::to_string(a_bad) + " (b) " + std::to_string(b_bad) + " (c) " + std::to_string(c_bad) +
              " (d) " + std::to_string(d_bad) + "/" + std::to_string(d_done) + " failures";
  return c;
}

/// Brute-force extrinsic activity P(s_i = 1 | mu_{-i}) over all 2^N state paths.
template <class T>
RVec hmc_activity_enumerated(const Vec<T>& mu, double v, const HMCPriorParams& p) {
  const Index N = mu.size();
  if (N > 20) throw Error(Errc::DomainError, "enumeration limited to N <= 20");
  RVec num = RVec::Zero(N), den = RVec::Zero(N);
  const double a = p.activity();
  for (std::uint64_t m = 0; m < (std::uint64_t{1} << N); ++m) {
    auto s = [&](Index i) { return static_cast<int>(m >> i & 1u); };
    double prior = s(0) ? a : 1.0 - a;
    for (Index i = 1; i < N; ++i) {
      const int u = s(i - 1), w = s(i);
      prior *= u ? (w ? 1.0 - p.p10 : p.p10) : (w ? p.p01 : 1.0 - p.p01);
    }
    std::vector<double> L(static_cast<std::size_t>(N));
    for (Index i = 0; i < N; ++i) L[static_cast<std::size_t>(i)] = gauss_lik(mu[i], s(i) ? v + p.sigma0_2 : v);
    for (Index i = 0; i < N; ++i) {
      double w = prior;
      for (Index j = 0; j < N; ++j)
        if (j != i) w *= L[static_cast<std::size_t>(j)];
      den[i] += w;
      if (s(i)) num[i] += w;
    }
  }
  return num.cwiseQuotient(den);
}

/// Woodbury, extrinsic-mean identity, memoryless HMC against BG, and the chain activity against enumeration.
inline CheckResult check_identities(std::uint64_t seed) {
  using namespace verify_detail;
  CheckResult c{"identities and reductions", true, "", {}};
  Rng rng(seed);

  double w_worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const RMat A = gen_gaussian_matrix(8, 16, derive_seed(seed, 6000 + static_cast<std::uint64_t>(t)));
    RVec B(16);
    for (Index i = 0; i < 16; ++i) B[i] = rng.uniform() < 0.3 ? 0.0 : 2.0 * rng.uniform();
    w_worst = std::max(w_worst, woodbury_check(A, B));
  }
  const bool w_ok = w_worst < 1e-10;
  c.details.push_back("Woodbury, 100 draws: max error=" + num(w_worst));

  double nu_worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Index N = 50;
    RVec mu(N);
    for (Index i = 0; i < N; ++i) mu[i] = 3.0 * rng.normal();
    const double v = log_uniform(rng, 0.01, 10.0), vh = log_uniform(rng, 0.01, 100.0), lam = log_uniform(rng, 0.01, 2.0);
    const RVec x = soft_threshold_vec<double>(mu, lam * v);
    for (Index i = 0; i < N; ++i) {
      if (x[i] == 0.0) continue;
      const double lhs = x[i] - vh * lam * sgn(x[i]);
      const double rhs = x[i] - (vh / v) * (mu[i] - x[i]);
      nu_worst = std::max(nu_worst, std::abs(lhs - rhs) / std::max({1.0, std::abs(mu[i]), vh * lam}));
    }
  }
  const bool nu_ok = nu_worst <= 1e-12;
  c.details.push_back("extrinsic mean identity on the support: max relative gap=" + num(nu_worst));

  // memoryless chain: p01 + p10 = 1
  const double act = 0.2;
  HMCPriorParams ml{act, 1.0 - act, 3.0};
  const Index Ns = 200000;
  Rng srng(derive_seed(seed, 7000));
  const auto st = sample_hmc_states(Ns, ml, srng);
  double ones = 0.0, after_one = 0.0, one_one = 0.0;
  for (Index i = 0; i < Ns; ++i) {
    ones += st[static_cast<std::size_t>(i)];
    if (i > 0 && st[static_cast<std::size_t>(i - 1)]) {
      after_one += 1.0;
      one_one += st[static_cast<std::size_t>(i)];
    }
  }
  const double sd = std::sqrt(act * (1.0 - act));
  const double z_rate = (ones / Ns - act) / (sd / std::sqrt(static_cast<double>(Ns)));
  const double z_cond = (one_one / after_one - act) / (sd / std::sqrt(after_one));
  const RVec xh = sample_hmc_signal<double>(Ns, ml, derive_seed(seed, 7001));
  const RVec xb = sample_bg_signal<double>(Ns, {act, 3.0}, derive_seed(seed, 7002));
  auto stats = [](const RVec& x) {
    double k = 0.0, s2 = 0.0;
    for (Index i = 0; i < x.size(); ++i)
      if (x[i] != 0.0) {
        k += 1.0;
        s2 += x[i] * x[i];
      }
    return std::pair{k, s2 / k};
  };
  const auto [kh, vh_] = stats(xh);
  const auto [kb, vb_] = stats(xb);
  const double z_two = (kh - kb) / std::sqrt(2.0 * Ns * act * (1.0 - act));
  // sample variance of x^2 for a Gaussian is 2 sigma^4
  const double z_var = (vh_ - vb_) / std::sqrt(2.0 * 9.0 / kh + 2.0 * 9.0 / kb);
  const bool dist_ok = std::abs(z_rate) < 5.0 && std::abs(z_cond) < 5.0 && std::abs(z_two) < 5.0 && std::abs(z_var) < 5.0;
  c.details.push_back("memoryless chain sampling z-scores: rate " + num(z_rate) + ", lag-1 " + num(z_cond) +
                      ", vs BG count " + num(z_two) + ", vs BG variance " + num(z_var));

  double den_worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Index N = 64;
    RVec mu(N);
    CVec cmu(N);
    for (Index i = 0; i < N; ++i) {
      mu[i] = 2.0 * rng.normal();
      cmu[i] = {rng.normal(), rng.normal()};
    }
    const double v = log_uniform(rng, 0.01, 5.0);
    const auto h = hmc_denoise<double>(mu, v, ml), b = bg_denoise<double>(mu, v, act, 3.0);
    const auto hc = hmc_denoise<cplx>(cmu, v, ml), bc = bg_denoise<cplx>(cmu, v, act, 3.0);
    den_worst = std::max({den_worst, (h.x - b.x).lpNorm<Eigen::Infinity>(), (h.v_post - b.v_post).lpNorm<Eigen::Infinity>(),
                          (hc.x - bc.x).lpNorm<Eigen::Infinity>(), (hc.v_post - bc.v_post).lpNorm<Eigen::Infinity>()});
  }
  const bool den_ok = den_worst <= 1e-12;
  c.details.push_back("memoryless HMC denoiser vs BG: max difference=" + num(den_worst));

  double e_worst = 0.0;
  for (int t = 0; t < 40; ++t) {
    const Index N = 2 + static_cast<Index>(rng.below(11));
    HMCPriorParams hp{log_uniform(rng, 0.02, 0.5), log_uniform(rng, 0.02, 0.5), log_uniform(rng, 0.5, 10.0)};
    const double v = log_uniform(rng, 0.05, 2.0);
    RVec mu(N);
    for (Index i = 0; i < N; ++i) mu[i] = rng.uniform() < 0.4 ? std::sqrt(hp.sigma0_2) * rng.normal() : 0.3 * rng.normal();
    e_worst = std::max(e_worst, (hmc_activity<double>(mu, v, hp) - hmc_activity_enumerated<double>(mu, v, hp))
                                    .lpNorm<Eigen::Infinity>());
  }
  const bool e_ok = e_worst <= 1e-10;
  c.details.push_back("chain activity vs 2^N enumeration (N <= 12): max difference=" + num(e_worst));

  c.passed = w_ok && nu_ok && dist_ok && den_ok && e_ok;
  c.summary = std::string("woodbury ") + (w_ok ? "ok" : "FAIL") + ", extrinsic mean " + (nu_ok ? "ok" : "FAIL") +
              ", sampling " + (dist_ok ? "ok" : "FAIL") + ", denoiser reduction " + (den_ok ? "ok" : "FAIL") +
              ", enumeration " + (e_ok ? "ok" : "FAIL");
  return c;
}

inline std::vector<CheckResult> theory_suite(std::uint64_t seed) {
  return {check_oracle_equivalence(derive_seed(seed, 5)), check_fixed_point(derive_seed(seed, 6)),
          check_contraction(derive_seed(seed, 7)), check_mps(derive_seed(seed, 8)), check_identities(derive_seed(seed, 9))};
}

}  // namespace asamp
