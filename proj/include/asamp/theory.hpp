#pragma once

#include "asm.hpp"
#include "linalg.hpp"
#include "metrics.hpp"
#include "problem.hpp"
#include "splitting.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace asamp {

struct OracleOptions {
  Index enum_max_n = 14;
  double kkt_tol = 1e-12;
  double equi_tol = 1e-8;
  long max_fista = 2000000;
};

struct OracleSolution {
  RVec x_star;
  RVec corr;  // A^T (y - A x*)
  IndexSet support;
  IndexSet equicorr;
  RVec sign_b;  // sgn(x*) on the support
  double lambda = 1.0;
  double omega1 = std::numeric_limits<double>::infinity();
  double omega0_tilde = std::numeric_limits<double>::infinity();
  bool general = true;
  std::string method;

  double omega0(double v) const { return v * omega0_tilde; }
  // (I - v grad h)(x*)
  RVec mu_star(const RMat& A, const RVec& y, double v) const { return x_star + v * (A.transpose() * (y - A * x_star)); }
};

namespace detail {

inline bool kkt_holds(const RMat& A, const RVec& y, double lambda, const RVec& x, double tol) {
  const RVec c = A.transpose() * (y - A * x);
  for (Index i = 0; i < x.size(); ++i) {
    if (x[i] != 0.0) {
      if (std::abs(c[i] - lambda * (x[i] > 0 ? 1.0 : -1.0)) > tol * std::max(1.0, lambda)) return false;
    } else if (std::abs(c[i]) > lambda * (1.0 + tol)) {
      return false;
    }
  }
  return true;
}

// x_S = (A_S^T A_S)^{-1}(A_S^T y - lambda b)
inline std::optional<RVec> closed_form_on(const RMat& G, const RVec& Aty, const IndexSet& S, const RVec& b,
                                          double lambda, Index N) {
  const auto K = static_cast<Index>(S.size());
  RMat GS(K, K);
  RVec r(K);
  for (Index a = 0; a < K; ++a) {
    r[a] = Aty[S[static_cast<std::size_t>(a)]] - lambda * b[a];
    for (Index c = 0; c < K; ++c) GS(a, c) = G(S[static_cast<std::size_t>(a)], S[static_cast<std::size_t>(c)]);
  }
  Eigen::LLT<RMat> llt(GS);
  if (llt.info() != Eigen::Success) return std::nullopt;
  return extend<double>(llt.solve(r), S, N);
}

inline void finish_oracle(OracleSolution& o, const RMat& A, const RVec& y, const OracleOptions& opt) {
  const Index N = A.cols();
  o.corr = A.transpose() * (y - A * o.x_star);
  o.support = support_of<double>(o.x_star);
  o.sign_b.resize(static_cast<Index>(o.support.size()));
  o.omega1 = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < o.support.size(); ++j) {
    const double xi = o.x_star[o.support[j]];
    o.sign_b[static_cast<Index>(j)] = xi > 0 ? 1.0 : -1.0;
    o.omega1 = std::min(o.omega1, std::abs(xi));
  }
  o.equicorr.clear();
  o.omega0_tilde = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < N; ++i) {
    const double gap = o.lambda - std::abs(o.corr[i]);
    if (gap <= opt.equi_tol * o.lambda || o.x_star[i] != 0.0)
      o.equicorr.push_back(i);
    else
      o.omega0_tilde = std::min(o.omega0_tilde, gap);
  }
  if (!o.equicorr.empty()) {
    const Extremes ex = gram_extremes<double>(A, o.equicorr);
    o.general = static_cast<Index>(o.equicorr.size()) <= A.rows() && ex.min > 1e-10 * std::max(ex.max, 1e-300);
  }
}

}  // namespace detail

/// Lasso minimizer of 1/2||y - Ax||^2 + lambda||x||_1 by sign-pattern enumeration (small N) or FISTA with
/// closed-form refinement.
inline OracleSolution oracle_solution(const RMat& A, const RVec& y, double lambda, const OracleOptions& opt = {}) {
  if (!(lambda > 0.0)) throw Error(Errc::DomainError, "oracle needs lambda > 0");
  const Index N = A.cols(), M = A.rows();
  OracleSolution o;
  o.lambda = lambda;
  const RMat G = A.transpose() * A;
  const RVec Aty = A.transpose() * y;
  if (N <= opt.enum_max_n) {
    o.method = "enumeration";
    std::vector<RVec> found;
    const Index kmax = std::min(M, N);
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << N); ++mask) {
      IndexSet S;
      for (Index i = 0; i < N; ++i)
        if (mask >> i & 1u) S.push_back(i);
      const auto K = static_cast<Index>(S.size());
      if (K > kmax) continue;
      for (std::uint64_t sg = 0; sg < (std::uint64_t{1} << K); ++sg) {
        RVec b(K);
        for (Index a = 0; a < K; ++a) b[a] = (sg >> a & 1u) ? -1.0 : 1.0;
        auto x = detail::closed_form_on(G, Aty, S, b, lambda, N);
        if (!x) break;
        bool signs = true;
        for (Index a = 0; a < K && signs; ++a) signs = (*x)[S[static_cast<std::size_t>(a)]] * b[a] > 0.0;
        if (!signs) continue;
        if (!detail::kkt_holds(A, y, lambda, *x, 1e-10)) continue;
        bool dup = false;
        for (const auto& f : found) dup = dup || (f - *x).lpNorm<Eigen::Infinity>() <= 1e-8 * (1.0 + f.lpNorm<Eigen::Infinity>());
        if (!dup) found.push_back(*x);
      }
    }
    if (found.empty()) throw Error(Errc::NoConvergence, "no sign pattern passes the KKT test");
    if (found.size() > 1) throw Error(Errc::NotGeneral, "several supports satisfy the KKT conditions");
    o.x_star = found.front();
    detail::finish_oracle(o, A, y, opt);
    return o;
  }

  o.method = "fista";
  const double L = eig_sym_extremes<double>(G).max;
  if (!(L > 0.0)) {
    o.x_star = RVec::Zero(N);
    detail::finish_oracle(o, A, y, opt);
    return o;
  }
  const double step = 1.0 / L;
  RVec x = RVec::Zero(N), z = x;
  double t = 1.0;
  for (long k = 1; k <= opt.max_fista; ++k) {
    const RVec xn = soft_threshold_vec<double>(z + step * (Aty - G * z), lambda * step);
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    z = xn + ((t - 1.0) / tn) * (xn - x);
    x = xn;
    t = tn;
    if (k % 50 == 0) {
      const IndexSet S = support_of<double>(x);
      RVec b(static_cast<Index>(S.size()));
      for (std::size_t j = 0; j < S.size(); ++j) b[static_cast<Index>(j)] = x[S[j]] > 0 ? 1.0 : -1.0;
      auto xr = detail::closed_form_on(G, Aty, S, b, lambda, N);
      if (xr) {
        bool signs = true;
        for (std::size_t j = 0; j < S.size() && signs; ++j) signs = (*xr)[S[j]] * b[static_cast<Index>(j)] > 0.0;
        if (signs && kkt_residual<double>(*xr, A, y, lambda, 1.0) <= opt.kkt_tol &&
            detail::kkt_holds(A, y, lambda, *xr, 1e-9)) {
          o.x_star = *xr;
          detail::finish_oracle(o, A, y, opt);
          return o;
        }
      }
    }
  }
  throw Error(Errc::NoConvergence, "FISTA did not reach the oracle tolerance");
}

inline OracleSolution oracle_solution(const ProblemInstance<double>& p, const OracleOptions& opt = {}) {
  return oracle_solution(p.A, p.y, p.lambda, opt);
}

struct SpectralSummary {
  double tau_hat_min = 0.0;
  double tau_hat_max = 0.0;
  double tau_tilde = 0.0;
  double tau_tilde_star = 0.0;
  double tau_hat_1_star = 0.0;
  double tau_hat_K_star = 0.0;
  double tau_N = 0.0;
};

// Starred quantities are attained at the extreme sets by Cauchy interlacing.
inline SpectralSummary spectral_summary(const RMat& A, const IndexSet& E, const OracleSolution& o) {
  const Index N = A.cols();
  SpectralSummary s;
  const Extremes h = gram_extremes<double>(A, E);
  s.tau_hat_min = h.min;
  s.tau_hat_max = h.max;
  s.tau_tilde = gram_extremes<double>(A, complement(E, N)).max;
  s.tau_tilde_star = gram_extremes<double>(A, complement(o.support, N)).max;
  const Extremes q = gram_extremes<double>(A, o.equicorr);
  s.tau_hat_1_star = q.min;
  s.tau_hat_K_star = q.max;
  s.tau_N = gram_extremes<double>(A, full_set(N)).max;
  return s;
}

struct UniformQuantities {
  double tau_tilde_star = 0.0;
  double tau_hat_1_star = std::numeric_limits<double>::infinity();
  double tau_hat_K_star = 0.0;
};

/// Brute-force subset enumeration of the starred quantities (small N only).
inline UniformQuantities uniform_quantities_enumerated(const RMat& A, const IndexSet& support, const IndexSet& equicorr) {
  const Index N = A.cols();
  if (N > 24) throw Error(Errc::DomainError, "enumeration limited to N <= 24");
  UniformQuantities u;
  const IndexSet rest = complement(support, N);
  const auto nr = rest.size();
  for (std::uint64_t m = 1; m < (std::uint64_t{1} << nr); ++m) {
    IndexSet C;
    for (std::size_t j = 0; j < nr; ++j)
      if (m >> j & 1u) C.push_back(rest[j]);
    u.tau_tilde_star = std::max(u.tau_tilde_star, eig_sym_extremes<double>(gram_on<double>(A, C)).max);
  }
  IndexSet extra;
  std::set_difference(equicorr.begin(), equicorr.end(), support.begin(), support.end(), std::back_inserter(extra));
  for (std::uint64_t m = 0; m < (std::uint64_t{1} << extra.size()); ++m) {
    IndexSet C = support;
    for (std::size_t j = 0; j < extra.size(); ++j)
      if (m >> j & 1u) C.push_back(extra[j]);
    std::sort(C.begin(), C.end());
    if (C.empty()) continue;
    const Extremes ex = eig_sym_extremes<double>(gram_on<double>(A, C));
    u.tau_hat_1_star = std::min(u.tau_hat_1_star, ex.min);
    u.tau_hat_K_star = std::max(u.tau_hat_K_star, ex.max);
  }
  if (std::isinf(u.tau_hat_1_star)) u.tau_hat_1_star = 0.0;
  return u;
}

/// Per-step factor sqrt((1 - v t)^2 + v^2 tau~ t) / (1 + v_hat t) maximized over t in {t1, tK}.
inline double convergence_factor(double v, double v_hat, double tau_hat_1, double tau_hat_K, double tau_tilde) {
  auto f = [&](double t) { return std::sqrt(std::pow(1.0 - v * t, 2) + v * v * tau_tilde * t) / std::abs(1.0 + v_hat * t); };
  return std::max(f(tau_hat_1), f(tau_hat_K));
}

inline double convergence_factor(double v, const SpectralSummary& s) {
  return convergence_factor(v, v, s.tau_hat_1_star, s.tau_hat_K_star, s.tau_tilde_star);
}

inline double convergence_factor(double v, double v_hat, const SpectralSummary& s) {
  return convergence_factor(v, v_hat, s.tau_hat_1_star, s.tau_hat_K_star, s.tau_tilde_star);
}

inline bool check_h_condition(double v, double v_hat, const std::vector<double>& tau_hats, double tau_tilde) {
  for (double t : tau_hats) {
    const double lhs = std::pow(1.0 - v * t, 2) + v * v * tau_tilde * t;
    const double rhs = std::pow(1.0 + v_hat * t, 2);
    if (lhs > rhs * (1.0 + 1e-14)) return false;
  }
  return true;
}

inline double hatv_upper_bound(double v, double tau_hat_1, double tau_tilde) {
  const double g = 1.0 / v;
  const double rad = tau_hat_1 * tau_hat_1 - (2.0 * g - tau_tilde) * tau_hat_1 + g * g;
  if (rad < 0.0) throw Error(Errc::DomainError, "negative radicand in the v_hat bound");
  return 1.0 / (std::sqrt(rad) - tau_hat_1);
}

/// v_hat large enough for a contraction factor theta on E = support = equicorrelation set.
inline double contraction_hat_v(double v, double theta, const SpectralSummary& s) {
  if (!(s.tau_hat_1_star > 0.0)) throw Error(Errc::DomainError, "needs tau_hat_1* > 0");
  double m = 0.0;
  for (double t : {s.tau_hat_1_star, s.tau_hat_K_star})
    m = std::max(m, std::sqrt(std::pow(1.0 - v * t, 2) + v * v * s.tau_tilde_star * t));
  return m / (theta * s.tau_hat_1_star);
}

// ---- the ASM iteration as a fixed-point map on mu ----

/// (1 + v_hat/v) S_{lambda v}(mu) - (v_hat/v) mu, entrywise on E.
template <class T>
Vec<T> map_G(const Vec<T>& mu_E, double v, double v_hat, double lambda) {
  return T(1.0 + v_hat / v) * soft_threshold_vec<T>(mu_E, lambda * v) - T(v_hat / v) * mu_E;
}

/// (I - v grad h) applied to the zero-extended subspace LMMSE of nu.
template <class T>
Vec<T> map_H(const Vec<T>& nu_E, const IndexSet& E, double v, double v_hat, const ProblemInstance<T>& p) {
  const Index N = p.N();
  Vec<T> u = Vec<T>::Zero(N);
  if (!E.empty()) u = extend<T>(subspace_lmmse<T>(nu_E, v_hat, restrict_columns(p.A, E), p.y), E, N);
  return u + T(v) * (p.A.adjoint() * (p.y - p.A * u));
}

template <class T>
Vec<T> asm_map(const Vec<T>& mu, const IndexSet& E, double v, double v_hat, const ProblemInstance<T>& p) {
  return map_H<T>(map_G<T>(restrict_vector<T>(mu, E), v, v_hat, p.lambda), E, v, v_hat, p);
}

template <class T>
IndexSet support_from_mu(const Vec<T>& mu, double threshold) {
  IndexSet E;
  for (Index i = 0; i < mu.size(); ++i)
    if (std::abs(mu[i]) > threshold) E.push_back(i);
  return E;
}

inline double lemma3_residual(const ProblemInstance<double>& p, const OracleSolution& o, const IndexSet& E, double v,
                              double v_hat) {
  const RVec mu = o.mu_star(p.A, p.y, v);
  return (asm_map<double>(mu, E, v, v_hat, p) - mu).norm();
}

struct ContractionSample {
  int k = 0;
  double ratio = 0.0;
  bool in_regime = false;  // support <= E^k <= equicorrelation set with matching signs
};

/// Iterates mu <- H(G(mu)) with E^k = supp S_{lambda v}(mu^k) and records ||mu^{k+1}-mu*|| / ||mu^k-mu*||.
inline std::vector<ContractionSample> measure_contraction(const ProblemInstance<double>& p, const OracleSolution& o,
                                                          RVec mu, double v, double v_hat, int steps,
                                                          double floor_rel = 1e-9) {
  const RVec ms = o.mu_star(p.A, p.y, v);
  const double floor = floor_rel * std::max(1.0, ms.norm());
  std::vector<ContractionSample> out;
  for (int k = 0; k < steps; ++k) {
    const double d0 = (mu - ms).norm();
    if (d0 < floor) break;
    const IndexSet E = support_from_mu<double>(mu, p.lambda * v);
    bool regime = is_subset(o.support, E) && is_subset(E, o.equicorr);
    for (std::size_t j = 0; j < o.support.size() && regime; ++j) {
      const Index i = o.support[j];
      regime = mu[i] * o.sign_b[static_cast<Index>(j)] > 0.0;
    }
    for (Index i : E)
      if (regime && o.x_star[i] == 0.0) regime = mu[i] * o.corr[i] > 0.0;
    RVec next = asm_map<double>(mu, E, v, v_hat, p);
    out.push_back({k, (next - ms).norm() / d0, regime});
    mu = std::move(next);
  }
  return out;
}

// ---- MPS on the lasso ----

struct MpsZeroingCheck {
  double bound = 0.0;  // ||z0 - z*|| / ((v2 - v1) omega0~)
  long first_settled = -1;  // first k after which x^k stays zero off the equicorrelation set
  long checked_until = 0;
  bool holds = false;
};

inline MpsZeroingCheck check_mps_zeroing(const ProblemInstance<double>& p, const OracleSolution& o, const MPSConfig& cfg,
                                         RVec z, long extra_iters = 200, long max_bound = 200000) {
  if (!(cfg.v1 < cfg.v2)) throw Error(Errc::DomainError, "zeroing bound needs v1 < v2");
  const Index N = p.N();
  const RVec zs = o.mu_star(p.A, p.y, cfg.v2);
  MpsZeroingCheck c;
  c.bound = (z - zs).norm() / ((cfg.v2 - cfg.v1) * o.omega0_tilde);
  const long kb = static_cast<long>(std::ceil(c.bound));
  if (kb > max_bound) return c;
  c.checked_until = std::max<long>(kb, 0) + extra_iters;
  const IndexSet off = complement(o.equicorr, N);
  const auto J_A = resolvent_grad_h<double>(p);
  const auto J_B = resolvent_l1<double>(p);
  long last_bad = -1;
  for (long k = 0; k <= c.checked_until; ++k) {
    const RVec x = mps_readout<double>(z, cfg, J_B);
    for (Index i : off)
      if (x[i] != 0.0) {
        last_bad = k;
        break;
      }
    z = mps_step<double>(z, cfg, J_A, J_B);
  }
  c.first_settled = last_bad + 1;
  c.holds = c.first_settled <= std::max<long>(kb, 0);
  return c;
}

// ---- MPS quadratic analysis ----

struct MpsRadii {
  double rho1 = 0.0;
  double rho2 = 0.0;
  double rho12 = 0.0;
};

// max over t of |1 - b t| / (1 + a t)
inline double radius_of(const RVec& eigs, double a, double b) {
  double r = 0.0;
  for (Index i = 0; i < eigs.size(); ++i) r = std::max(r, std::abs(1.0 - b * eigs[i]) / (1.0 + a * eigs[i]));
  return r;
}

inline RVec spd_eigenvalues(const RMat& S) {
  Eigen::LLT<RMat> llt(S);
  if (S.rows() != S.cols() || llt.info() != Eigen::Success) throw Error(Errc::NotSPD, "matrix is not SPD");
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, S.cwiseAbs().maxCoeff()))
    throw Error(Errc::NotSPD, "matrix is not symmetric");
  return eig_sym_values<double>(S);
}

/// Spectral radii of Sigma1 = (I - v2 A)(I + v1 A)^{-1}, Sigma2 = (I - v1 B)(I + v2 B)^{-1} and of their product.
inline MpsRadii mps_quadratic_radii(const RMat& A, const RMat& B, double v1, double v2) {
  const RVec ea = spd_eigenvalues(A), eb = spd_eigenvalues(B);
  const Index N = A.rows();
  const RMat I = RMat::Identity(N, N);
  const RMat S1 = (I - v2 * A) * (I + v1 * A).inverse();
  const RMat S2 = (I - v1 * B) * (I + v2 * B).inverse();
  Eigen::EigenSolver<RMat> es(S1 * S2, false);
  MpsRadii r;
  r.rho1 = radius_of(ea, v1, v2);
  r.rho2 = radius_of(eb, v2, v1);
  r.rho12 = es.eigenvalues().cwiseAbs().maxCoeff();
  return r;
}

inline double rho_product(const Extremes& t1, const Extremes& t2, double v1, double v2) {
  RVec a(2), b(2);
  a << t1.min, t1.max;
  b << t2.min, t2.max;
  return radius_of(a, v1, v2) * radius_of(b, v2, v1);
}

struct VPair {
  double v1 = 0.0;
  double v2 = 0.0;
};

/// Minimizer of rho(Sigma1) rho(Sigma2) from the spectral extremes: both factors equioscillate at their extremes.
inline VPair solve_v_rho(const Extremes& t1, const Extremes& t2) {
  if (!(t1.min > 0.0 && t2.min > 0.0 && t1.max >= t1.min && t2.max >= t2.min))
    throw Error(Errc::DomainError, "solve_v_rho needs positive extremes");
  // precisions g = 1/v; equioscillation of Sigma_i gives a Mobius map g_other -> g_i
  auto h = [](const Extremes& t, double g) {
    const double s = t.min + t.max;
    return (g * s + 2.0 * t.min * t.max) / (2.0 * g + s);
  };
  auto phi = [&](double g1) { return h(t2, h(t1, g1)) - g1; };
  const double lo = 2.0 * t2.min * t2.max / (t2.min + t2.max), hi = 0.5 * (t2.min + t2.max);
  std::vector<double> roots;
  if (hi - lo <= 1e-15 * hi) {
    roots.push_back(lo);
  } else {
    const int n = 2000;
    double ga = lo, fa = phi(lo);
    if (fa == 0.0) roots.push_back(ga);
    for (int i = 1; i <= n; ++i) {
      const double gb = lo * std::pow(hi / lo, static_cast<double>(i) / n);
      const double fb = phi(gb);
      if (fb == 0.0) {
        roots.push_back(gb);
      } else if ((fa < 0.0) != (fb < 0.0) && fa != 0.0) {
        double a = ga, b = gb, fl = fa;
        int it = 0;
        while (b - a > 1e-15 * b && it++ < 10000) {
          const double m = 0.5 * (a + b), fm = phi(m);
          if ((fm < 0.0) == (fl < 0.0)) {
            a = m;
            fl = fm;
          } else {
            b = m;
          }
        }
        if (it >= 10000) throw Error(Errc::NoConvergence, "bisection did not converge");
        roots.push_back(0.5 * (a + b));
      }
      ga = gb;
      fa = fb;
    }
  }
  if (roots.empty()) throw Error(Errc::NoConvergence, "no stationary pair found");
  VPair best;
  double bp = std::numeric_limits<double>::infinity();
  for (double g1 : roots) {
    const double g2 = h(t1, g1);
    const double pr = rho_product(t1, t2, 1.0 / g1, 1.0 / g2);
    if (pr < bp) {
      bp = pr;
      best = {1.0 / g1, 1.0 / g2};
    }
  }
  return best;
}

struct VampFixedPoint {
  double v1 = 0.0;
  double v2 = 0.0;
  bool degenerate = false;
  int iters = 0;
};

namespace detail {

// 1/(g1 + g2) = mean 1/(a + g1) = mean 1/(b + g2), scanned over log g1
inline bool has_interior_root(const RVec& a, const RVec& b) {
  auto mean_inv = [](const RVec& e, double g) { return (e.array() + g).inverse().mean(); };
  auto r = [&](double g1) {
    const double S = 1.0 / mean_inv(a, g1), g2 = S - g1;
    if (!(g2 > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return mean_inv(b, g2) - 1.0 / S;
  };
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (int i = 0; i <= 2400; ++i) {
    const double cur = r(std::pow(10.0, -10.0 + 20.0 * i / 2400.0));
    if (!std::isnan(cur) && !std::isnan(prev) && (cur == 0.0 || (cur < 0.0) != (prev < 0.0))) return true;
    prev = cur;
  }
  return false;
}

}  // namespace detail

/// Self-contained VAMP variance recursion on two spectra; damped in the log domain.
inline VampFixedPoint vamp_variance_fixed_point(const RVec& eigs_A, const RVec& eigs_B, double v1_init = 1.0,
                                                double v2_init = 1.0, int max_iters = 10000) {
  if (eigs_A.size() == 0 || eigs_B.size() == 0) throw Error(Errc::EmptyInput, "empty spectrum");
  auto mean_inv = [](const RVec& e, double g) {
    double s = 0.0;
    for (Index i = 0; i < e.size(); ++i) s += 1.0 / (e[i] + g);
    return s / static_cast<double>(e.size());
  };
  double g1 = 1.0 / v1_init, g2 = 1.0 / v2_init;
  const double gmin = 1.0 / kVarMax, gmax = 1.0 / kVarMin;
  VampFixedPoint out;
  for (int k = 0; k < max_iters; ++k) {
    double n2 = 1.0 / mean_inv(eigs_A, g1) - g1;
    n2 = std::exp(0.5 * std::log(g2) + 0.5 * std::log(std::clamp(n2, gmin, gmax)));
    double n1 = 1.0 / mean_inv(eigs_B, n2) - n2;
    n1 = std::exp(0.5 * std::log(g1) + 0.5 * std::log(std::clamp(n1, gmin, gmax)));
    const double change = std::abs(std::log(n1 / g1)) + std::abs(std::log(n2 / g2));
    g1 = n1;
    g2 = n2;
    out.iters = k + 1;
    if (g1 <= gmin * (1.0 + 1e-9) || g2 <= gmin * (1.0 + 1e-9) || g1 >= gmax * (1.0 - 1e-9) ||
        g2 >= gmax * (1.0 - 1e-9)) {
      out.degenerate = true;
      break;
    }
    if (change < 1e-14) break;
    if (k + 1 == max_iters) {
      // slow drift: degenerate iff the fixed-point equation has no interior root
      if (detail::has_interior_root(eigs_A, eigs_B)) throw Error(Errc::NoConvergence, "variance recursion did not settle");
      out.degenerate = true;
    }
  }
  out.v1 = 1.0 / g1;
  out.v2 = 1.0 / g2;
  return out;
}

/// max |(I + B A^T A)^{-1} - (I - B A^T (I + A B A^T)^{-1} A)| for diagonal B.
inline double woodbury_check(const RMat& A, const RVec& B_diag) {
  const Index N = A.cols(), M = A.rows();
  if (B_diag.size() != N) throw Error(Errc::DimensionError, "B must have N entries");
  const RMat B = B_diag.asDiagonal();
  Eigen::FullPivLU<RMat> lhs_lu(RMat::Identity(N, N) + B * A.transpose() * A);
  if (!lhs_lu.isInvertible()) throw Error(Errc::SolveFailure, "I + B A^T A is singular");
  Eigen::FullPivLU<RMat> w_lu(RMat::Identity(M, M) + A * B * A.transpose());
  if (!w_lu.isInvertible()) throw Error(Errc::SolveFailure, "I + A B A^T is singular");
  const RMat lhs = lhs_lu.inverse();
  const RMat rhs = RMat::Identity(N, N) - B * A.transpose() * w_lu.solve(A);
  return (lhs - rhs).cwiseAbs().maxCoeff();
}

}  // namespace asamp
