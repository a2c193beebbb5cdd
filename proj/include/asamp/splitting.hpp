#pragma once

#include "denoisers.hpp"
#include "linalg.hpp"
#include "problem.hpp"

#include <cmath>
#include <functional>
#include <limits>

namespace asamp {

inline constexpr double kVarMin = 1e-12;
inline constexpr double kVarMax = 1e12;

/// (I + v A^H A)^{-1}(mu + v A^H y) via the N x N normal equations.
template <class T>
Vec<T> lmmse_primal(const Vec<T>& mu, double v, const Mat<T>& A, const Vec<T>& y) {
  Mat<T> G = A.adjoint() * A;
  G *= T(v);
  G.diagonal().array() += T(1);
  return solve_hpd<T>(G, mu + T(v) * (A.adjoint() * y));
}

/// Same map through the M x M dual system: mu + v A^H (I + v A A^H)^{-1}(y - A mu).
template <class T>
Vec<T> lmmse_dual(const Vec<T>& mu, double v, const Mat<T>& A, const Vec<T>& y) {
  Mat<T> W = A * A.adjoint();
  W *= T(v);
  W.diagonal().array() += T(1);
  return mu + T(v) * (A.adjoint() * solve_hpd<T>(W, y - A * mu));
}

template <class T>
Vec<T> lmmse(const Vec<T>& mu, double v, const Mat<T>& A, const Vec<T>& y) {
  if (!(v > 0.0)) throw Error(Errc::DomainError, "lmmse needs v > 0");
  return A.rows() < A.cols() ? lmmse_dual<T>(mu, v, A, y) : lmmse_primal<T>(mu, v, A, y);
}

// Eigendecomposition of the smaller Gram matrix, computed once per problem.
template <class T>
class GramCache {
 public:
  GramCache() = default;
  explicit GramCache(const Mat<T>& A) : A_(&A) {
    rows_ = A.rows() <= A.cols();
    Mat<T> G = rows_ ? Mat<T>(A * A.adjoint()) : Mat<T>(A.adjoint() * A);
    Eigen::SelfAdjointEigenSolver<Mat<T>> es(G);
    s_ = es.eigenvalues().cwiseMax(0.0);
    U_ = es.eigenvectors();
  }

  const RVec& eigenvalues() const { return s_; }
  double tau_max() const { return s_.size() ? s_.maxCoeff() : 0.0; }

  // (I + v A^H A)^{-1} r
  Vec<T> apply_inverse(const Vec<T>& r, double v) const {
    const Mat<T>& A = *A_;
    const RVec w = (1.0 / (1.0 + v * s_.array())).matrix();
    if (rows_) {
      Vec<T> c = U_.adjoint() * (A * r);
      c = c.cwiseProduct(w.template cast<T>());
      return r - T(v) * (A.adjoint() * (U_ * c));
    }
    Vec<T> c = U_.adjoint() * r;
    c = c.cwiseProduct(w.template cast<T>());
    return U_ * c;
  }

  // tr[(I + v A^H A)^{-1}]
  double trace_inverse(double v) const {
    const double n = static_cast<double>(A_->cols()) - static_cast<double>(s_.size());
    return n + (1.0 / (1.0 + v * s_.array())).sum();
  }

  Vec<T> lmmse(const Vec<T>& mu, double v, const Vec<T>& y) const {
    return apply_inverse(mu + T(v) * (A_->adjoint() * y), v);
  }

 private:
  const Mat<T>* A_ = nullptr;
  bool rows_ = true;
  RVec s_;
  Mat<T> U_;
};

template <class T>
Vec<T> ista_step(const Vec<T>& x, double v, const ProblemInstance<T>& p) {
  return soft_threshold_vec<T>(x + T(v) * (p.A.adjoint() * (p.y - p.A * x)), p.lambda * v);
}

template <class T>
using Resolvent = std::function<Vec<T>(const Vec<T>&, double)>;

template <class T>
Resolvent<T> resolvent_grad_h(const ProblemInstance<T>& p) {
  return [&p](const Vec<T>& z, double v) { return lmmse<T>(z, v, p.A, p.y); };
}

template <class T>
Resolvent<T> resolvent_grad_h(const ProblemInstance<T>& p, const GramCache<T>& g) {
  return [&p, &g](const Vec<T>& z, double v) { return g.lmmse(z, v, p.y); };
}

template <class T>
Resolvent<T> resolvent_l1(const ProblemInstance<T>& p) {
  return [&p](const Vec<T>& z, double v) { return soft_threshold_vec<T>(z, p.lambda * v); };
}

template <class T>
struct PrsResult {
  Vec<T> mu_B;
  Vec<T> mu_A;
  Vec<T> x;
  Vec<T> x_half;
};

/// One Peaceman-Rachford sweep mu_B <- (2 J_g - I)(2 J_h - I) mu_B.
template <class T>
PrsResult<T> prs_step(const Vec<T>& mu_B, double v0, const Resolvent<T>& J_h, const Resolvent<T>& J_g) {
  PrsResult<T> out;
  out.x_half = J_h(mu_B, v0);
  out.mu_A = T(2.0) * out.x_half - mu_B;
  out.x = J_g(out.mu_A, v0);
  out.mu_B = T(2.0) * out.x - out.mu_A;
  return out;
}

template <class T>
PrsResult<T> prs_step(const Vec<T>& mu_B, double v0, const ProblemInstance<T>& p) {
  return prs_step<T>(mu_B, v0, resolvent_grad_h(p), resolvent_l1(p));
}

struct MPSConfig {
  double v1 = 1.0;
  double v2 = 1.0;
};

// R^t_{vT} = (1+t) J_{vT} - t I
template <class T>
Vec<T> relaxed_resolvent(const Vec<T>& z, double v, double t, const Resolvent<T>& J) {
  return T(1.0 + t) * J(z, v) - T(t) * z;
}

/// z <- R^{v2/v1}_{v1 A} R^{v1/v2}_{v2 B} z
template <class T>
Vec<T> mps_step(const Vec<T>& z, const MPSConfig& cfg, const Resolvent<T>& J_A, const Resolvent<T>& J_B) {
  if (!(cfg.v1 > 0.0 && cfg.v2 > 0.0)) throw Error(Errc::DomainError, "MPS needs v1, v2 > 0");
  const Vec<T> w = relaxed_resolvent<T>(z, cfg.v2, cfg.v1 / cfg.v2, J_B);
  return relaxed_resolvent<T>(w, cfg.v1, cfg.v2 / cfg.v1, J_A);
}

template <class T>
Vec<T> mps_readout(const Vec<T>& z, const MPSConfig& cfg, const Resolvent<T>& J_B) {
  return J_B(z, cfg.v2);
}

template <class T>
struct SplitterState {
  Vec<T> x;       // denoiser output
  Vec<T> x_half;  // LMMSE output, the reported estimate
  Vec<T> mu_A;
  Vec<T> mu_B;
  double v_A = 1.0;
  double v_B = 1.0;
  RVec v_B_diag;  // Diag-VAMP only
  int iter = 0;
  bool exploded = false;
  std::size_t support = 0;
};

template <class T>
SplitterState<T> splitter_init(Index N, double v0) {
  SplitterState<T> s;
  s.x = Vec<T>::Zero(N);
  s.x_half = Vec<T>::Zero(N);
  s.mu_A = Vec<T>::Zero(N);
  s.mu_B = Vec<T>::Zero(N);
  s.v_A = v0;
  s.v_B = v0;
  return s;
}

// Extrinsic variance 1/(1/post - 1/in); false when degenerate.
inline bool extrinsic_variance(double post, double in, double& out) {
  if (!(post > 0.0)) {
    out = kVarMin;
    return false;
  }
  const double prec = 1.0 / post - 1.0 / in;
  if (!(prec > 0.0)) {
    out = kVarMax;
    return false;
  }
  out = 1.0 / prec;
  if (out > kVarMax) {
    out = kVarMax;
    return false;
  }
  if (out < kVarMin) {
    out = kVarMin;
    return false;
  }
  return true;
}

struct VampOptions {
  bool frozen = false;       // fixed v_A = v_B (ADMM / PRS mean recursion)
  double damping = 1.0;      // 1 = none; 0.5 with frozen gives DRS
};

/// One VAMP iteration (mean recursion plus trace-based variance matching) on the lasso.
template <class T>
void vamp_iterate(SplitterState<T>& s, const ProblemInstance<T>& p, const GramCache<T>& g, const VampOptions& opt = {}) {
  if (s.exploded) return;
  const auto N = static_cast<double>(p.N());
  s.x_half = g.lmmse(s.mu_B, s.v_B, p.y);
  double vA = s.v_A;
  bool ok = true;
  if (!opt.frozen) {
    const double v_post = s.v_B / N * g.trace_inverse(s.v_B);
    ok = extrinsic_variance(v_post, s.v_B, vA);
  }
  s.mu_A = T(1.0 + vA / s.v_B) * s.x_half - T(vA / s.v_B) * s.mu_B;
  s.v_A = vA;
  s.x = soft_threshold_vec<T>(s.mu_A, p.lambda * vA);
  std::size_t K = 0;
  for (Index i = 0; i < s.x.size(); ++i) K += s.x[i] != T(0);
  s.support = K;
  double vB = s.v_B;
  if (!opt.frozen && ok) ok = extrinsic_variance(vA * static_cast<double>(K) / N, vA, vB);
  Vec<T> mu_B = T(1.0 + vB / vA) * s.x - T(vB / vA) * s.mu_A;
  if (opt.damping != 1.0) mu_B = T(opt.damping) * mu_B + T(1.0 - opt.damping) * s.mu_B;
  s.mu_B = std::move(mu_B);
  s.v_B = vB;
  ++s.iter;
  if (!ok) s.exploded = true;
}

struct DiagVampOptions {
  double rho_bar = 0.9;
  int ramp = 20;
};

inline double diag_vamp_rho(const DiagVampOptions& o, int k) {
  if (o.ramp <= 0) return o.rho_bar;
  return o.rho_bar * std::min(1.0, static_cast<double>(k) / o.ramp);
}

/// Module A of Diag-VAMP: x = (I + L A^H A)^{-1}(mu + L A^H y) with diagonal L (zeros allowed).
/// Also returns the mean posterior variance.
template <class T>
Vec<T> diag_lmmse(const Vec<T>& mu, const RVec& L, const Mat<T>& A, const Vec<T>& y, double* v_post_mean = nullptr) {
  const Index N = A.cols();
  Mat<T> AL = A * L.template cast<T>().asDiagonal();
  Mat<T> W = AL * A.adjoint();
  W.diagonal().array() += T(1);
  Eigen::LLT<Mat<T>> llt(W);
  if (llt.info() != Eigen::Success) throw Error(Errc::SolveFailure, "I + A L A^H not positive definite");
  const Vec<T> r = mu + L.template cast<T>().cwiseProduct(A.adjoint() * y);
  const Vec<T> x = r - L.template cast<T>().cwiseProduct(A.adjoint() * llt.solve(A * r));
  if (v_post_mean) {
    // diag(L - L A^H W^{-1} A L)
    const Mat<T> WiA = llt.solve(A);
    double tr = 0.0;
    for (Index j = 0; j < N; ++j) {
      const double q = std::real(A.col(j).dot(WiA.col(j)));
      tr += L[j] - L[j] * L[j] * q;
    }
    *v_post_mean = tr / static_cast<double>(N);
  }
  return x;
}

template <class T>
void diag_vamp_iterate(SplitterState<T>& s, const ProblemInstance<T>& p, double rho) {
  if (s.exploded) return;
  const Index N = p.N();
  if (s.v_B_diag.size() != N) s.v_B_diag = RVec::Constant(N, s.v_B);
  double v_post = 0.0;
  s.x_half = diag_lmmse<T>(s.mu_B, s.v_B_diag, p.A, p.y, &v_post);
  double vbar_in = s.v_B_diag.mean();
  double vA = s.v_A;
  bool ok = extrinsic_variance(v_post, vbar_in, vA);
  s.v_A = vA;
  s.mu_A = s.x_half + T(vA) * (p.A.adjoint() * (p.y - p.A * s.x_half));
  s.x = soft_threshold_vec<T>(s.mu_A, p.lambda * vA);
  RVec vi = RVec::Zero(N);
  std::size_t K = 0;
  for (Index i = 0; i < N; ++i)
    if (s.x[i] != T(0)) {
      vi[i] = vA;
      ++K;
    }
  s.support = K;
  const double vbar = vi.mean();
  RVec vB(N);
  for (Index i = 0; i < N; ++i) {
    const double vm = rho * vi[i] + (1.0 - rho) * vbar;
    if (vm <= 0.0) {
      vB[i] = 0.0;
      continue;
    }
    double e;
    if (!extrinsic_variance(vm, vA, e)) ok = false;
    vB[i] = e;
  }
  if (K == 0) ok = false;
  for (Index i = 0; i < N; ++i) s.mu_B[i] = s.x[i] - T(vB[i] / vA) * (s.mu_A[i] - s.x[i]);
  s.v_B_diag = vB;
  s.v_B = vB.mean();
  ++s.iter;
  if (!ok) s.exploded = true;
}

}  // namespace asamp
