#pragma once

#include "linalg.hpp"
#include "problem.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace asamp {

template <class T>
struct DenoiserOutput {
  Vec<T> x;
  RVec v_post;
  RVec beta;  // empty for soft-threshold
  double v_post_mean = 0.0;
};

// Complex soft threshold shrinks the modulus and keeps the phase.
template <class T>
T soft_threshold_scalar(const T& mu, double t) {
  const double a = std::abs(mu);
  if (a <= t) return T(0);
  if constexpr (is_complex_v<T>)
    return mu * ((a - t) / a);
  else
    return mu > 0 ? mu - t : mu + t;
}

template <class T>
Vec<T> soft_threshold_vec(const Vec<T>& mu, double t) {
  Vec<T> x(mu.size());
  for (Index i = 0; i < mu.size(); ++i) x[i] = soft_threshold_scalar(mu[i], t);
  return x;
}

/// Prox of lambda*v*||.||_1 with the 0/1 divergence rule for v_post.
template <class T>
DenoiserOutput<T> soft_threshold(const Vec<T>& mu, double v, double lambda) {
  DenoiserOutput<T> out;
  const double t = lambda * v;
  out.x = soft_threshold_vec(mu, t);
  out.v_post = RVec::Zero(mu.size());
  for (Index i = 0; i < mu.size(); ++i)
    if (std::abs(mu[i]) > t) out.v_post[i] = v;
  out.v_post_mean = mu.size() ? out.v_post.mean() : 0.0;
  return out;
}

struct BGOptions {
  // use the printed real-Gaussian Gamma even for complex data
  bool verbatim_real_gamma = false;
};

template <class T>
DenoiserOutput<T> bg_denoise(const Vec<T>& mu, double v, const RVec& pi, double sigma0_2, BGOptions opt = {}) {
  const Index N = mu.size();
  DenoiserOutput<T> out;
  out.x.resize(N);
  out.v_post.resize(N);
  out.beta.resize(N);
  const double shrink = sigma0_2 / (v + sigma0_2);
  const double ratio = (v + sigma0_2) / v;
  const bool circular = is_complex_v<T> && !opt.verbatim_real_gamma;
  const double log_pref = circular ? std::log(ratio) : 0.5 * std::log(ratio);
  const double coef = circular ? (v + sigma0_2) / (v * sigma0_2) : (v + sigma0_2) / (2.0 * v * sigma0_2);
  for (Index i = 0; i < N; ++i) {
    const T z = shrink * mu[i];
    const double z2 = abs2(z);
    const double p = pi[i];
    double lg = std::log1p(-p) - std::log(p) + log_pref - coef * z2;
    lg = std::clamp(lg, -700.0, 700.0);
    const double b = 1.0 / (1.0 + std::exp(lg));
    out.beta[i] = b;
    out.x[i] = z * b;
    out.v_post[i] = v * shrink * b + z2 * b * (1.0 - b);
  }
  out.v_post_mean = N ? out.v_post.mean() : 0.0;
  return out;
}

template <class T>
DenoiserOutput<T> bg_denoise(const Vec<T>& mu, double v, double eps, double sigma0_2, BGOptions opt = {}) {
  return bg_denoise<T>(mu, v, RVec::Constant(mu.size(), eps), sigma0_2, opt);
}

// Gaussian density of a scalar observation with variance var, up to a common factor.
template <class T>
double gauss_lik(const T& m, double var) {
  if constexpr (is_complex_v<T>)
    return std::exp(-abs2(m) / var) / var;
  else
    return std::exp(-0.5 * abs2(m) / var) / std::sqrt(var);
}

/// Extrinsic activity probabilities of the binary chain by normalized forward-backward.
template <class T>
RVec hmc_activity(const Vec<T>& mu, double v, const HMCPriorParams& p) {
  const Index N = mu.size();
  RVec pi(N);
  if (N == 0) return pi;
  std::vector<std::array<double, 2>> L(static_cast<std::size_t>(N)), f(L.size()), b(L.size());
  for (Index i = 0; i < N; ++i) {
    double l0 = gauss_lik(mu[i], v), l1 = gauss_lik(mu[i], v + p.sigma0_2);
    const double s = l0 + l1;
    if (!(s > 0.0) || !std::isfinite(s)) {
      // both densities underflowed: compare in the log domain
      double lg0, lg1;
      if constexpr (is_complex_v<T>) {
        lg0 = -abs2(mu[i]) / v - std::log(v);
        lg1 = -abs2(mu[i]) / (v + p.sigma0_2) - std::log(v + p.sigma0_2);
      } else {
        lg0 = -0.5 * abs2(mu[i]) / v - 0.5 * std::log(v);
        lg1 = -0.5 * abs2(mu[i]) / (v + p.sigma0_2) - 0.5 * std::log(v + p.sigma0_2);
      }
      const double m = std::max(lg0, lg1);
      l0 = std::exp(lg0 - m);
      l1 = std::exp(lg1 - m);
    }
    const double t = l0 + l1;
    L[static_cast<std::size_t>(i)] = {l0 / t, l1 / t};
  }
  const double T00 = 1.0 - p.p01, T01 = p.p01, T10 = p.p10, T11 = 1.0 - p.p10;
  const double a = p.activity();
  f[0] = {1.0 - a, a};
  for (std::size_t i = 1; i < L.size(); ++i) {
    const double u0 = f[i - 1][0] * L[i - 1][0], u1 = f[i - 1][1] * L[i - 1][1];
    double n0 = u0 * T00 + u1 * T10, n1 = u0 * T01 + u1 * T11;
    const double s = n0 + n1;
    f[i] = {n0 / s, n1 / s};
  }
  b.back() = {0.5, 0.5};
  for (std::size_t i = L.size() - 1; i-- > 0;) {
    const double w0 = L[i + 1][0] * b[i + 1][0], w1 = L[i + 1][1] * b[i + 1][1];
    double n0 = T00 * w0 + T01 * w1, n1 = T10 * w0 + T11 * w1;
    const double s = n0 + n1;
    b[i] = {n0 / s, n1 / s};
  }
  for (std::size_t i = 0; i < L.size(); ++i) {
    const double q0 = f[i][0] * b[i][0], q1 = f[i][1] * b[i][1];
    pi[static_cast<Index>(i)] = std::clamp(q1 / (q0 + q1), 1e-300, 1.0 - 1e-16);
  }
  return pi;
}

template <class T>
DenoiserOutput<T> hmc_denoise(const Vec<T>& mu, double v, const HMCPriorParams& p, BGOptions opt = {}) {
  return bg_denoise<T>(mu, v, hmc_activity<T>(mu, v, p), p.sigma0_2, opt);
}

}  // namespace asamp
