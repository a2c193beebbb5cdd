#pragma once

#include "denoisers.hpp"
#include "linalg.hpp"
#include "metrics.hpp"
#include "problem.hpp"
#include "splitting.hpp"

#include <cmath>
#include <deque>
#include <string>

namespace asamp {

enum class VarStrategy { Fixed, MixHatV, SubspaceMM };
enum class AveragingMode { None, BetweenIterations, BetweenIterationsRaw, BetweenModules };
enum class MmsePrior { BG, HMC };

struct QuasiVarianceSchedule {
  VarStrategy strategy = VarStrategy::MixHatV;
  double v_fixed = 1.0;
  double v_hat_fixed = 1.0;
  double rho0 = 0.7;
  double c_guard = 0.5;
  int s_window = 4;
  double alpha = 0.5;
  double epsilon_stab = 0.1;
  double wide_cap = 100.0;  // v_hat <= wide_cap * v while |E| > M
};

struct AveragingConfig {
  AveragingMode mode = AveragingMode::BetweenIterations;
  double d = 0.5;
};

template <class T>
struct AsmState {
  Vec<T> x;       // denoiser output x^k
  Vec<T> x_half;  // x^{k+1/2}, zero off E
  Vec<T> hist;    // averaging history
  Vec<T> mu;
  Vec<T> nu_hat;  // on E
  IndexSet E;
  double v = 1.0;
  double v_hat = 1.0;
  int iter = 0;
  std::deque<IndexSet> window;
  bool clamped = false;   // v_hat hit the clamp this iteration
  bool exploded = false;  // MMSE variances degenerated
};

/// Stable solve of (I + v_hat A^H A)^{-1}(nu + v_hat A^H y) on the columns of A_hat.
template <class T>
Vec<T> subspace_lmmse(const Vec<T>& nu, double v_hat, const Mat<T>& Ah, const Vec<T>& y) {
  const Index K = Ah.cols(), M = Ah.rows();
  if (K == 0) throw Error(Errc::EmptySupport, "subspace LMMSE on an empty support");
  if (!(v_hat > 0.0)) throw Error(Errc::DomainError, "v_hat must be positive");
  const double iv = 1.0 / v_hat;
  if (K <= M) {
    Mat<T> G = Ah.adjoint() * Ah;
    G.diagonal().array() += T(iv);
    return solve_hpd<T>(G, T(iv) * nu + Ah.adjoint() * y);
  }
  Mat<T> W = Ah * Ah.adjoint();
  W.diagonal().array() += T(iv);
  return nu + Ah.adjoint() * solve_hpd<T>(W, y - Ah * nu);
}

template <class T>
struct SubspacePosterior {
  Vec<T> x;
  double v_half = 0.0;
};

/// Gaussian posterior on E with prior N(nu, v_hat) and noise variance sigma2:
/// mean and average posterior variance tr[(I/v_hat + A^H A/sigma2)^{-1}]/|E|.
template <class T>
SubspacePosterior<T> subspace_posterior(const Vec<T>& nu, double v_hat, const Mat<T>& Ah, const Vec<T>& y,
                                        double sigma2) {
  const Index K = Ah.cols(), M = Ah.rows();
  if (K == 0) throw Error(Errc::EmptySupport, "subspace posterior on an empty support");
  const bool small_cols = K <= M;
  Mat<T> G = small_cols ? Mat<T>(Ah.adjoint() * Ah) : Mat<T>(Ah * Ah.adjoint());
  Eigen::SelfAdjointEigenSolver<Mat<T>> es(G);
  const RVec s = es.eigenvalues().cwiseMax(0.0);
  const Mat<T>& U = es.eigenvectors();
  const double iv = 1.0 / v_hat;
  const RVec post = (1.0 / (iv + s.array() / sigma2)).matrix();
  SubspacePosterior<T> out;
  double tr = post.sum();
  if (small_cols) {
    Vec<T> r = U.adjoint() * (T(iv) * nu + Ah.adjoint() * y / T(sigma2));
    out.x = U * r.cwiseProduct(post.template cast<T>());
  } else {
    const double g = v_hat / sigma2;
    const RVec w = (g / (1.0 + g * s.array())).matrix();
    Vec<T> r = U.adjoint() * (y - Ah * nu);
    out.x = nu + Ah.adjoint() * (U * r.cwiseProduct(w.template cast<T>()));
    tr += static_cast<double>(K - M) * v_hat;
  }
  out.v_half = tr / static_cast<double>(K);
  return out;
}

template <class T>
IndexSet select_support_l1(const Vec<T>& x) {
  return support_of<T>(x);
}

inline IndexSet select_support_beta(const RVec& beta, double c) {
  IndexSet E;
  for (Index i = 0; i < beta.size(); ++i)
    if (beta[i] >= c) E.push_back(i);
  return E;
}

template <class T>
T sgn(const T& z) {
  const double a = std::abs(z);
  if (a == 0.0) return T(0);
  return z / a;
}

// Default v for the Fixed strategy.
inline double guarded_v(double v, double tau_max) { return tau_max > 4.0 ? v / tau_max : v; }

template <class T>
AsmState<T> asm_init(Index N, double v, double v_hat) {
  AsmState<T> s;
  s.x = Vec<T>::Zero(N);
  s.x_half = Vec<T>::Zero(N);
  s.mu = Vec<T>::Zero(N);
  s.v = v;
  s.v_hat = v_hat;
  return s;
}

/// MixHatV quasi-variance: v fixed, v_hat from the rho-mixed variance.
inline double mix_hat_v(double v, std::size_t E, std::size_t Ubar, Index M, Index N, const QuasiVarianceSchedule& q,
                        bool* clamped = nullptr) {
  const auto nE = static_cast<double>(E);
  const bool wide = static_cast<double>(Ubar) > (1.0 + q.c_guard) * static_cast<double>(M);
  const double rho = wide ? q.rho0
                         : nE / (static_cast<double>(Ubar) + q.epsilon_stab);
  const double vbar = v * nE / static_cast<double>(N);
  const double prec = 1.0 / (rho * v + (1.0 - rho) * vbar) - 1.0 / v;
  const double cap = kVarMax * v;
  if (!(prec > 0.0) || 1.0 / prec > cap) {
    if (clamped) *clamped = true;
    return cap;
  }
  if (clamped) *clamped = false;
  return 1.0 / prec;
}

template <class T>
void push_window(AsmState<T>& s, const IndexSet& E, int s_window) {
  s.window.push_back(E);
  while (static_cast<int>(s.window.size()) > s_window + 1) s.window.pop_front();
}

template <class T>
std::size_t window_union_size(const AsmState<T>& s) {
  IndexSet U;
  for (const auto& E : s.window) U = set_union(U, E);
  return U.size();
}

template <class T>
Vec<T> apply_averaging(AsmState<T>& s, const Vec<T>& x_half, const Vec<T>& x_prev, const AveragingConfig& avg) {
  const T d(avg.d), e(1.0 - avg.d);
  switch (avg.mode) {
    case AveragingMode::None:
      return x_half;
    case AveragingMode::BetweenIterations: {
      if (s.hist.size() != x_half.size()) s.hist = x_half;
      Vec<T> xa = d * x_half + e * s.hist;
      s.hist = xa;
      return xa;
    }
    case AveragingMode::BetweenIterationsRaw: {
      if (s.hist.size() != x_half.size()) s.hist = x_half;
      Vec<T> xa = d * x_half + e * s.hist;
      s.hist = x_half;
      return xa;
    }
    case AveragingMode::BetweenModules:
      if (s.iter == 0) return x_half;
      return d * x_half + e * x_prev;
  }
  return x_half;
}

/// One ASAMP-L1 sweep: support, quasi-variances, subspace LMMSE, averaging, gradient step, soft threshold.
template <class T>
void asamp_l1_iterate(AsmState<T>& s, const ProblemInstance<T>& p, const QuasiVarianceSchedule& q,
                      const AveragingConfig& avg) {
  const Index N = p.N(), M = p.M();
  IndexSet E = s.iter == 0 ? full_set(N) : select_support_l1<T>(s.x);
  const bool empty_fallback = E.empty();
  if (empty_fallback) E = full_set(N);
  push_window(s, E, q.s_window);

  double v = s.v, vh = s.v_hat;
  s.clamped = false;
  switch (q.strategy) {
    case VarStrategy::Fixed:
      v = q.v_fixed;
      vh = q.v_hat_fixed;
      break;
    case VarStrategy::MixHatV:
      v = q.v_fixed;
      vh = mix_hat_v(v, E.size(), window_union_size(s), M, N, q, &s.clamped);
      if (s.iter > 0 && static_cast<Index>(E.size()) == N) vh = std::min(vh, v);
      if (static_cast<Index>(E.size()) > M && vh > q.wide_cap * v) {
        vh = q.wide_cap * v;
        s.clamped = true;
      }
      break;
    case VarStrategy::SubspaceMM: {
      const Mat<T> Ah = restrict_columns(p.A, E);
      const Vec<T> nu0 = restrict_vector<T>(s.x, E);
      const auto post = subspace_posterior<T>(nu0, vh, Ah, p.y, 1.0);
      double ve;
      if (!extrinsic_variance(post.v_half, vh, ve)) s.clamped = true;
      v = ve;
      double m = 0.0;
      for (Index i : E) m += std::abs(s.x[i]) > 0 ? v : 0.0;
      m = q.alpha * m / static_cast<double>(E.size());
      double vhn;
      if (!(m > 0.0) || !extrinsic_variance(m, v, vhn)) {
        s.clamped = true;
        vhn = m > 0.0 ? kVarMax : vh;
      }
      vh = vhn;
      break;
    }
  }

  const Mat<T> Ah = restrict_columns(p.A, E);
  Vec<T> nu(static_cast<Index>(E.size()));
  for (std::size_t j = 0; j < E.size(); ++j) {
    const T xi = s.x[E[j]];
    nu[static_cast<Index>(j)] = xi - T(vh * p.lambda) * sgn(xi);
  }
  const Vec<T> xh = subspace_lmmse<T>(nu, vh, Ah, p.y);
  Vec<T> x_half = extend<T>(xh, E, N);
  const Vec<T> x_ave = apply_averaging(s, x_half, s.x, avg);
  s.mu = x_ave + T(v) * (p.A.adjoint() * (p.y - p.A * x_ave));
  s.x = soft_threshold_vec<T>(s.mu, p.lambda * v);
  s.nu_hat = std::move(nu);
  s.x_half = std::move(x_half);
  s.E = std::move(E);
  s.v = v;
  s.v_hat = vh;
  ++s.iter;
}

struct MmseOptions {
  MmsePrior prior = MmsePrior::BG;
  BGPriorParams bg{};
  HMCPriorParams hmc{};
  double beta_threshold = 0.01;
  bool subspace = true;  // false: E fixed to [N] (VAMP-BG / VAMP-HMC)
  BGOptions bg_opts{};
};

template <class T>
double mmse_prior_variance(const MmseOptions& o) {
  return o.prior == MmsePrior::BG ? o.bg.epsilon * o.bg.sigma0_2 : o.hmc.activity() * o.hmc.sigma0_2;
}

template <class T>
DenoiserOutput<T> mmse_denoise(const Vec<T>& mu, double v, const MmseOptions& o) {
  if (o.prior == MmsePrior::BG) return bg_denoise<T>(mu, v, o.bg.epsilon, o.bg.sigma0_2, o.bg_opts);
  return hmc_denoise<T>(mu, v, o.hmc, o.bg_opts);
}

template <class T>
AsmState<T> mmse_init(Index N, const MmseOptions& o) {
  AsmState<T> s = asm_init<T>(N, 1.0, mmse_prior_variance<T>(o));
  s.E = full_set(N);
  s.nu_hat = Vec<T>::Zero(N);
  return s;
}

/// One sweep of the MMSE alternating subspace method (ASAMP-BG / ASAMP-HMC; VAMP-BG / VAMP-HMC when
/// o.subspace is false).
template <class T>
void asm_iterate_mmse(AsmState<T>& s, const ProblemInstance<T>& p, const MmseOptions& o,
                      const QuasiVarianceSchedule& q, const AveragingConfig& avg) {
  if (s.exploded) return;
  const Index N = p.N();
  const double s2 = p.sigma_w2 > 0.0 ? p.sigma_w2 : 1.0;
  if (s.E.empty()) s.E = full_set(N);
  const Mat<T> Ah = restrict_columns(p.A, s.E);
  bool ok = true;
  double v = s.v, vh = s.v_hat;
  s.clamped = false;
  if (q.strategy == VarStrategy::Fixed) {
    v = q.v_fixed;
    vh = q.v_hat_fixed;
  }
  const auto post = subspace_posterior<T>(s.nu_hat, vh, Ah, p.y, s2);
  if (q.strategy != VarStrategy::Fixed) ok = extrinsic_variance(post.v_half, vh, v);
  Vec<T> x_half = extend<T>(post.x, s.E, N);
  const Vec<T> x_prev = s.x;
  const Vec<T> x_ave = apply_averaging(s, x_half, x_prev, avg);
  s.mu = x_ave + T(v / s2) * (p.A.adjoint() * (p.y - p.A * x_ave));
  const auto den = mmse_denoise<T>(s.mu, v, o);
  s.x = den.x;
  IndexSet E = o.subspace ? select_support_beta(den.beta, o.beta_threshold) : full_set(N);
  if (E.empty()) E = full_set(N);
  double vhn = vh;
  if (q.strategy != VarStrategy::Fixed) {
    double m = 0.0;
    for (Index i : E) m += den.v_post[i];
    m /= static_cast<double>(E.size());
    if (o.subspace) m *= q.alpha;
    if (!extrinsic_variance(m, v, vhn)) ok = false;
  }
  Vec<T> nu(static_cast<Index>(E.size()));
  for (std::size_t j = 0; j < E.size(); ++j) {
    const Index i = E[j];
    nu[static_cast<Index>(j)] = s.x[i] - T(vhn / v) * (s.mu[i] - s.x[i]);
  }
  s.x_half = std::move(x_half);
  s.nu_hat = std::move(nu);
  s.E = std::move(E);
  s.v = v;
  s.v_hat = vhn;
  ++s.iter;
  // clamped variances keep the run going; only a non-finite state stops it
  s.clamped = !ok;
  if (!s.x.allFinite() || !s.x_half.allFinite()) s.exploded = true;
}

}  // namespace asamp
