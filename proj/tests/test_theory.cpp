#include <asamp/theory.hpp>
#include <asamp/verify.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace asamp;
using verify_detail::theory_instance;

TEST(Oracle, EnumerationMatchesFista) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto p = theory_instance(s, 6, 12);
    const auto a = oracle_solution(p);
    OracleOptions o;
    o.enum_max_n = 0;
    const auto b = oracle_solution(p, o);
    EXPECT_EQ(a.method, "enumeration");
    EXPECT_EQ(b.method, "fista");
    EXPECT_LT((a.x_star - b.x_star).lpNorm<Eigen::Infinity>(), 1e-8);
    EXPECT_EQ(a.support, b.support);
  }
}

TEST(Oracle, SupportAndEquicorrelation) {
  const auto p = theory_instance(3, 6, 12);
  const auto o = oracle_solution(p);
  EXPECT_TRUE(o.general);
  EXPECT_TRUE(is_subset(o.support, o.equicorr));
  for (Index i = 0; i < 12; ++i) EXPECT_LE(std::abs(o.corr[i]), p.lambda * (1.0 + 1e-9));
  for (Index i : o.support) EXPECT_NEAR(std::abs(o.corr[i]), p.lambda, 1e-9 * p.lambda);
  EXPECT_GT(o.omega1, 0.0);
  EXPECT_GT(o.omega0_tilde, 0.0);
}

TEST(Oracle, DuplicateColumnsAreNotGeneral) {
  auto p = theory_instance(4, 6, 8);
  p.A.col(1) = p.A.col(0);
  p.lambda = 0.05 * (p.A.transpose() * p.y).lpNorm<Eigen::Infinity>();
  try {
    const auto o = oracle_solution(p);
    // both twins off the support is the only unique case
    EXPECT_EQ(o.x_star[0], 0.0);
    EXPECT_EQ(o.x_star[1], 0.0);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotGeneral);
  }
  EXPECT_THROW(oracle_solution(p.A, p.y, 0.0), Error);
}

TEST(Spectral, StarredQuantitiesMatchEnumeration) {
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto p = theory_instance(10 + s, 8, 14);
    const auto o = oracle_solution(p);
    const auto sp = spectral_summary(p.A, o.support, o);
    const auto u = uniform_quantities_enumerated(p.A, o.support, o.equicorr);
    EXPECT_NEAR(sp.tau_tilde_star, u.tau_tilde_star, 1e-10);
    EXPECT_NEAR(sp.tau_hat_1_star, u.tau_hat_1_star, 1e-10);
    EXPECT_NEAR(sp.tau_hat_K_star, u.tau_hat_K_star, 1e-10);
  }
}

TEST(Bounds, HConditionExamples) {
  const double tt = 2.0;
  for (double t : {0.0, 0.1, 1.0, 10.0}) EXPECT_TRUE(check_h_condition(1.5, 1.5, {t}, tt));
  EXPECT_TRUE(check_h_condition(2.0, 2.0, {0.3, 7.0}, tt));
  EXPECT_FALSE(check_h_condition(4.0, 4.0, {1.0}, tt));
}

TEST(Bounds, HatVBoundMatchesGridScan) {
  // largest v_hat with (v_hat / v) * sqrt((1 - v t)^2 + v^2 tau~ t) / (1 + v_hat t) <= 1
  const double tt = 3.0, v = 4.0 / tt, t1 = tt / 2.0;
  const double b = hatv_upper_bound(v, t1, tt);
  EXPECT_NEAR(b, v, 1e-12);
  for (auto [vv, t] : {std::pair{0.5, 0.4}, {1.0, 1.2}, {0.2, 2.9}}) {
    const double lhs = std::sqrt(std::pow(1.0 - vv * t, 2) + vv * vv * tt * t);
    double best = 0.0;
    for (int i = 1; i <= 200000; ++i) {
      const double vh = vv * 1e-3 * std::pow(1e6, i / 200000.0);
      if (vh / vv * lhs / (1.0 + vh * t) <= 1.0) best = vh;
    }
    EXPECT_NEAR(hatv_upper_bound(vv, t, tt), best, 1e-4 * best) << vv << " " << t;
  }
  EXPECT_NEAR(hatv_upper_bound(0.7, 1e-12, tt), 0.7, 1e-9);
}

TEST(Bounds, ConvergenceFactor) {
  EXPECT_NEAR(convergence_factor(1.0, 1.0, 1.0, 1.0, 0.0), 0.0, 1e-15);
  EXPECT_NEAR(convergence_factor(0.5, 0.5, 1.0, 1.0, 1.0), std::sqrt(0.25 + 0.25) / 1.5, 1e-15);
  SpectralSummary s;
  s.tau_hat_1_star = 0.5;
  s.tau_hat_K_star = 2.0;
  s.tau_tilde_star = 1.0;
  const double vh = contraction_hat_v(0.5, 0.5, s);
  EXPECT_LE(convergence_factor(0.5, vh, s), 0.5 + 1e-12);
}

TEST(Lemma3, FixedPointOnSuperSupports) {
  const auto p = theory_instance(21, 10, 20);
  const auto o = oracle_solution(p);
  const double tt = spectral_summary(p.A, o.support, o).tau_tilde_star;
  Rng r(1);
  for (int k = 0; k < 10; ++k) {
    IndexSet E = o.support;
    for (Index i = 0; i < 20; ++i)
      if (r.uniform() < 0.4) E.push_back(i);
    std::sort(E.begin(), E.end());
    E.erase(std::unique(E.begin(), E.end()), E.end());
    const double v = 4.0 / tt * r.uniform(), vh = 4.0 / tt * r.uniform();
    EXPECT_LT(lemma3_residual(p, o, E, v, vh), 1e-8);
  }
}

TEST(Contraction, SmallSuite) {
  const auto c = check_contraction(5, 5, 2, 40);
  EXPECT_TRUE(c.passed) << c.summary;
}

TEST(Mps, ZeroingBound) {
  const auto p = theory_instance(30, 6, 12, 0.3);
  auto q = p;
  q.y /= std::sqrt(p.lambda);
  q.A /= std::sqrt(p.lambda);
  q.lambda = 1.0;
  const auto o = oracle_solution(q);
  const double tN = eig_sym_extremes<double>(q.A.transpose() * q.A).max;
  const MPSConfig cfg{0.8 / tN, 1.0 / tN};
  const auto z = check_mps_zeroing(q, o, cfg, RVec::Zero(12), 200, 50000);
  EXPECT_TRUE(z.holds) << z.bound << " " << z.first_settled;
  EXPECT_THROW(check_mps_zeroing(q, o, {1.0, 1.0}, RVec::Zero(12)), Error);
}

TEST(Mps, QuadraticRadii) {
  Rng r(2);
  for (int k = 0; k < 20; ++k) {
    const RMat A = verify_detail::random_spd(r, 5, 0.1, 10.0), B = verify_detail::random_spd(r, 5, 0.1, 10.0);
    const auto m = mps_quadratic_radii(A, B, 0.3 + r.uniform(), 0.3 + r.uniform());
    EXPECT_LT(m.rho12, 1.0);
    EXPECT_LE(m.rho12, m.rho1 * m.rho2 + 1e-12);
  }
  RMat N = RMat::Identity(3, 3);
  N(0, 1) = 1.0;
  EXPECT_THROW(mps_quadratic_radii(N, RMat::Identity(3, 3), 1.0, 1.0), Error);
}

TEST(Mps, SolveVRhoSymmetricAndFirstOrder) {
  const auto s = solve_v_rho({2.0, 2.0}, {2.0, 2.0});
  EXPECT_NEAR(s.v1, 0.5, 1e-9);
  EXPECT_NEAR(s.v2, 0.5, 1e-9);
  EXPECT_NEAR(rho_product({2.0, 2.0}, {2.0, 2.0}, s.v1, s.v2), 0.0, 1e-9);
  const Extremes t1{0.2, 5.0}, t2{0.5, 3.0};
  const auto v = solve_v_rho(t1, t2);
  const double g1 = 1.0 / v.v1, g2 = 1.0 / v.v2;
  EXPECT_NEAR((g2 - t1.min) / (g1 + t1.min), (t1.max - g2) / (g1 + t1.max), 1e-8);
  EXPECT_NEAR((g1 - t2.min) / (g2 + t2.min), (t2.max - g1) / (g2 + t2.max), 1e-8);
  const double best = rho_product(t1, t2, v.v1, v.v2);
  for (int i = 0; i < 60; ++i)
    for (int j = 0; j < 60; ++j)
      EXPECT_LE(best, rho_product(t1, t2, 1e-2 * std::pow(1e4, i / 59.0), 1e-2 * std::pow(1e4, j / 59.0)) + 1e-12);
  EXPECT_THROW(solve_v_rho({0.0, 1.0}, t2), Error);
}

TEST(Vamp, VarianceFixedPoint) {
  const auto c = vamp_variance_fixed_point(RVec::Constant(4, 2.0), RVec::Constant(6, 2.0));
  EXPECT_FALSE(c.degenerate);
  EXPECT_NEAR(c.v1, 0.5, 1e-10);
  EXPECT_NEAR(c.v2, 0.5, 1e-10);
  Rng r(3);
  RVec a(30), b(30);
  for (Index i = 0; i < 30; ++i) {
    a[i] = 0.1 + 3.0 * r.uniform();
    b[i] = 0.1 + 3.0 * r.uniform();
  }
  const auto f = vamp_variance_fixed_point(a, b);
  const double g1 = 1.0 / f.v1, g2 = 1.0 / f.v2;
  auto mean_inv = [](const RVec& e, double g) { return (e.array() + g).inverse().mean(); };
  EXPECT_NEAR(1.0 / (g1 + g2), mean_inv(a, g1), 1e-10);
  EXPECT_NEAR(1.0 / (g1 + g2), mean_inv(b, g2), 1e-10);
}

TEST(Vamp, RankDeficientSpectrumDegenerates) {
  // A^T A with N - M zeros against a hard 0/1 spectrum with |E| = M active entries
  RVec a = RVec::Zero(20), b = RVec::Zero(20);
  a.head(10).setConstant(2.0);
  b.head(10).setConstant(1e12);
  EXPECT_TRUE(vamp_variance_fixed_point(a, b).degenerate);
}

TEST(Woodbury, Identity) {
  Rng r(4);
  RMat A(5, 9);
  for (Index i = 0; i < A.size(); ++i) A.data()[i] = r.normal();
  EXPECT_EQ(woodbury_check(A, RVec::Zero(9)), 0.0);
  RVec B(9);
  for (Index i = 0; i < 9; ++i) B[i] = i % 2 ? 0.0 : r.uniform();
  EXPECT_LT(woodbury_check(A, B), 1e-10);
  EXPECT_THROW(woodbury_check(A, RVec::Zero(4)), Error);
}
