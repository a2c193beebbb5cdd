#include <asamp/splitting.hpp>
#include <asamp/theory.hpp>

#include <gtest/gtest.h>

using namespace asamp;

namespace {

ProblemInstance<double> small_lasso(std::uint64_t seed, Index M = 6, Index N = 12) {
  InstanceRecipe r;
  r.M = M;
  r.N = N;
  r.bg = {0.3, 1.0};
  r.snr_db = 20.0;
  r.seed = seed;
  r.require_nonempty = true;
  auto p = make_instance<double>(r);
  p.sigma_w2 = 1.0;
  p.lambda = 0.2 * (p.A.transpose() * p.y).lpNorm<Eigen::Infinity>();
  return p;
}

RVec direct_lmmse(const RVec& mu, double v, const RMat& A, const RVec& y) {
  const RMat S = RMat::Identity(A.cols(), A.cols()) + v * A.transpose() * A;
  return S.fullPivLu().solve(mu + v * A.transpose() * y);
}

}  // namespace

TEST(Lmmse, PrimalDualAndCacheAgree) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    for (auto [M, N] : {std::pair<Index, Index>{6, 12}, {12, 6}}) {
      const auto p = small_lasso(s, M, N);
      RVec mu = RVec::LinSpaced(N, -1.0, 1.0);
      const double v = 0.7;
      const RVec ref = direct_lmmse(mu, v, p.A, p.y);
      EXPECT_LT((lmmse_primal<double>(mu, v, p.A, p.y) - ref).norm(), 1e-10);
      EXPECT_LT((lmmse_dual<double>(mu, v, p.A, p.y) - ref).norm(), 1e-10);
      GramCache<double> g(p.A);
      EXPECT_LT((g.lmmse(mu, v, p.y) - ref).norm(), 1e-10);
      const RMat S = (RMat::Identity(N, N) + v * p.A.transpose() * p.A).inverse();
      EXPECT_NEAR(g.trace_inverse(v), S.trace(), 1e-10);
    }
  }
}

TEST(Lmmse, ZeroVarianceReturnsPrior) {
  const auto p = small_lasso(1);
  const RVec mu = RVec::Ones(p.N());
  GramCache<double> g(p.A);
  EXPECT_LT((g.lmmse(mu, 0.0, p.y) - mu).norm(), 1e-15);
}

TEST(Ista, FixedPointAtLassoSolution) {
  const auto p = small_lasso(3);
  const auto o = oracle_solution(p);
  const RVec x = ista_step<double>(o.x_star, 0.3, p);
  EXPECT_LT((x - o.x_star).norm(), 1e-10);
}

TEST(Prs, FixedPointAtLassoSolution) {
  const auto p = small_lasso(4);
  const auto o = oracle_solution(p);
  const double v = 0.8;
  const RVec muB = o.x_star - v * (p.A.transpose() * (p.y - p.A * o.x_star));
  const auto r = prs_step<double>(muB, v, p);
  EXPECT_LT((r.mu_B - muB).norm(), 1e-10);
  EXPECT_LT((r.x - o.x_star).norm(), 1e-10);
  EXPECT_LT((r.x_half - o.x_star).norm(), 1e-10);
}

TEST(Mps, EqualStepsizesGivePrsBitForBit) {
  const auto p = small_lasso(5, 10, 20);
  const auto J_h = resolvent_grad_h<double>(p), J_g = resolvent_l1<double>(p);
  RVec z = RVec::Zero(p.N()), mu = z;
  for (int k = 0; k < 30; ++k) {
    z = mps_step<double>(z, {0.6, 0.6}, J_g, J_h);
    mu = prs_step<double>(mu, 0.6, J_h, J_g).mu_B;
    ASSERT_TRUE((z.array() == mu.array()).all()) << k;
  }
}

TEST(Mps, RelaxedResolventReflection) {
  const auto p = small_lasso(6);
  const auto J = resolvent_l1<double>(p);
  const RVec z = RVec::LinSpaced(p.N(), -2.0, 2.0);
  EXPECT_EQ(relaxed_resolvent<double>(z, 0.5, 1.0, J), (2.0 * J(z, 0.5) - z).eval());
  EXPECT_EQ(relaxed_resolvent<double>(z, 0.5, 0.0, J), J(z, 0.5));
  EXPECT_THROW(mps_step<double>(z, {0.0, 1.0}, J, J), Error);
}

TEST(Mps, ConvergesToLasso) {
  const auto p = small_lasso(7);
  const auto o = oracle_solution(p);
  GramCache<double> g(p.A);
  const double tN = g.tau_max();
  const MPSConfig cfg{0.5 / tN, 1.0 / tN};
  const auto J_A = resolvent_grad_h<double>(p, g), J_B = resolvent_l1<double>(p);
  RVec z = RVec::Zero(p.N());
  for (int k = 0; k < 20000; ++k) z = mps_step<double>(z, cfg, J_A, J_B);
  EXPECT_LT((mps_readout<double>(z, cfg, J_B) - o.x_star).norm(), 1e-8);
}

TEST(Extrinsic, Examples) {
  double out = 0.0;
  EXPECT_TRUE(extrinsic_variance(0.5, 1.0, out));
  EXPECT_DOUBLE_EQ(out, 1.0);
  EXPECT_FALSE(extrinsic_variance(1.0, 1.0, out));
  EXPECT_EQ(out, kVarMax);
  EXPECT_FALSE(extrinsic_variance(0.0, 1.0, out));
  EXPECT_EQ(out, kVarMin);
  EXPECT_FALSE(extrinsic_variance(2.0, 1.0, out));
}

TEST(Vamp, FrozenUndampedIsPrs) {
  const auto p = small_lasso(8, 10, 20);
  GramCache<double> g(p.A);
  auto s = splitter_init<double>(p.N(), 1.0);
  RVec mu = RVec::Zero(p.N());
  for (int k = 0; k < 40; ++k) {
    vamp_iterate<double>(s, p, g, {true, 1.0});
    mu = prs_step<double>(mu, 1.0, p).mu_B;
    ASSERT_LT((s.mu_B - mu).norm(), 1e-9 * (1.0 + mu.norm()));
  }
}

TEST(Vamp, VarianceMatchesTraceFormula) {
  const auto p = small_lasso(9, 10, 20);
  GramCache<double> g(p.A);
  auto s = splitter_init<double>(p.N(), 1.0);
  vamp_iterate<double>(s, p, g);
  const RMat S = (RMat::Identity(20, 20) + p.A.transpose() * p.A).inverse();
  const double post = S.trace() / 20.0;
  EXPECT_NEAR(s.v_A, 1.0 / (1.0 / post - 1.0), 1e-10);
}

TEST(Vamp, DegenerationRaisesFlag) {
  // lambda tiny: the support saturates and the variances run away
  auto p = small_lasso(10, 20, 40);
  p.lambda *= 1e-6;
  GramCache<double> g(p.A);
  auto s = splitter_init<double>(p.N(), 1.0);
  for (int k = 0; k < 2000 && !s.exploded; ++k) vamp_iterate<double>(s, p, g);
  EXPECT_TRUE(s.exploded);
}

TEST(DiagVamp, ZeroMixingIsVamp) {
  const auto p = small_lasso(11, 10, 20);
  GramCache<double> g(p.A);
  auto a = splitter_init<double>(p.N(), 1.0), b = a;
  for (int k = 0; k < 15; ++k) {
    vamp_iterate<double>(a, p, g);
    diag_vamp_iterate<double>(b, p, 0.0);
    if (a.exploded || b.exploded) break;
    ASSERT_LT((a.x_half - b.x_half).norm(), 1e-8 * (1.0 + a.x_half.norm())) << k;
    ASSERT_NEAR(a.v_B, b.v_B, 1e-8 * a.v_B);
  }
}

TEST(DiagVamp, LmmseWithZerosMatchesDense) {
  const auto p = small_lasso(12, 6, 12);
  RVec L(12);
  for (Index i = 0; i < 12; ++i) L[i] = i % 3 == 0 ? 0.0 : 0.5 + 0.1 * i;
  const RVec mu = RVec::LinSpaced(12, -1.0, 1.0);
  double vp = 0.0;
  const RVec x = diag_lmmse<double>(mu, L, p.A, p.y, &vp);
  const RMat Ld = L.asDiagonal();
  const RMat S = (RMat::Identity(12, 12) + Ld * p.A.transpose() * p.A).inverse();
  const RVec ref = S * (mu + Ld * p.A.transpose() * p.y);
  EXPECT_LT((x - ref).norm(), 1e-10);
  EXPECT_NEAR(vp, (S * Ld).trace() / 12.0, 1e-10);
  for (Index i = 0; i < 12; i += 3) EXPECT_NEAR(x[i], mu[i], 1e-12);
}

TEST(DiagVamp, RampSchedule) {
  DiagVampOptions o{0.9, 20};
  EXPECT_EQ(diag_vamp_rho(o, 0), 0.0);
  EXPECT_DOUBLE_EQ(diag_vamp_rho(o, 10), 0.45);
  EXPECT_DOUBLE_EQ(diag_vamp_rho(o, 100), 0.9);
}
