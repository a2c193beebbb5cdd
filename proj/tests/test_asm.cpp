#include <asamp/asm.hpp>
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

ProblemInstance<cplx> small_channel(std::uint64_t seed) {
  InstanceRecipe r;
  r.field = Field::Complex;
  r.ensemble = Ensemble::PdftRp;
  r.prior = PriorKind::HMC;
  r.hmc = {0.02, 0.1, 6.0};
  r.M = 48;
  r.N = 96;
  r.snr_db = 30.0;
  r.seed = seed;
  r.require_nonempty = true;
  return make_instance<cplx>(r);
}

}  // namespace

TEST(SubspaceLmmse, BothFormsMatchDirectSolve) {
  const auto p = small_lasso(1, 8, 16);
  for (const IndexSet& E : {IndexSet{0, 3, 5}, IndexSet{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}}) {
    const RMat Ah = restrict_columns<double>(p.A, E);
    const RVec nu = RVec::LinSpaced(static_cast<Index>(E.size()), -1.0, 2.0);
    const double vh = 2.5;
    const RMat S = RMat::Identity(Ah.cols(), Ah.cols()) / vh + Ah.transpose() * Ah;
    const RVec ref = S.fullPivLu().solve(nu / vh + Ah.transpose() * p.y);
    EXPECT_LT((subspace_lmmse<double>(nu, vh, Ah, p.y) - ref).norm(), 1e-10);
  }
  EXPECT_THROW(subspace_lmmse<double>(RVec(0), 1.0, RMat(8, 0), p.y), Error);
  EXPECT_THROW(subspace_lmmse<double>(RVec::Ones(1), 0.0, restrict_columns<double>(p.A, {0}), p.y), Error);
}

TEST(SubspaceLmmse, PosteriorWithNoise) {
  const auto p = small_channel(2);
  const double s2 = 0.05, vh = 0.8;
  for (const IndexSet& E : {IndexSet{1, 4, 9, 30}, full_set(96)}) {
    const CMat Ah = restrict_columns<cplx>(p.A, E);
    CVec nu(static_cast<Index>(E.size()));
    for (Index i = 0; i < nu.size(); ++i) nu[i] = cplx(0.1 * i, -0.05 * i);
    const CMat S = CMat::Identity(Ah.cols(), Ah.cols()) / vh + Ah.adjoint() * Ah / s2;
    const CMat Si = S.inverse();
    const CVec ref = Si * (nu / vh + Ah.adjoint() * p.y / s2);
    const auto post = subspace_posterior<cplx>(nu, vh, Ah, p.y, s2);
    EXPECT_LT((post.x - ref).norm(), 1e-9 * (1.0 + ref.norm()));
    EXPECT_NEAR(post.v_half, Si.trace().real() / static_cast<double>(E.size()), 1e-10);
  }
}

TEST(QuasiVariance, MixHatVValues) {
  QuasiVarianceSchedule q;
  q.epsilon_stab = 0.0;
  // rho = 100/120, vbar = 0.25 -> mix = 0.875 -> v_hat = 7
  EXPECT_NEAR(mix_hat_v(1.0, 100, 120, 200, 400, q), 7.0, 1e-12);
  // union above (1+c)M: rho0
  EXPECT_NEAR(mix_hat_v(1.0, 100, 400, 200, 400, q), 1.0 / (1.0 / 0.775 - 1.0), 1e-12);
  // stable support with the default epsilon stays finite
  QuasiVarianceSchedule d;
  bool clamped = true;
  EXPECT_NEAR(mix_hat_v(1.0, 50, 50, 200, 400, d, &clamped), 1.0 / (1.0 / (1.0 - 0.875 * 0.1 / 50.1) - 1.0), 1e-8);
  EXPECT_FALSE(clamped);
}

TEST(QuasiVariance, ClampedLimits) {
  QuasiVarianceSchedule q;
  q.epsilon_stab = 0.0;
  bool clamped = false;
  // stable support: rho -> 1
  EXPECT_EQ(mix_hat_v(1.0, 50, 50, 200, 400, q, &clamped), kVarMax);
  EXPECT_TRUE(clamped);
  // full support
  EXPECT_EQ(mix_hat_v(2.0, 400, 400, 500, 400, q, &clamped), 2.0 * kVarMax);
  EXPECT_TRUE(clamped);
  mix_hat_v(1.0, 100, 120, 200, 400, q, &clamped);
  EXPECT_FALSE(clamped);
}

TEST(SupportSelection, Beta) {
  const RVec beta = (RVec(3) << 0.9, 0.1, 0.5).finished();
  EXPECT_EQ(select_support_beta(beta, 0.5), (IndexSet{0, 2}));
  // larger c gives a nested set
  Rng r(3);
  RVec b(100);
  for (Index i = 0; i < 100; ++i) b[i] = r.uniform();
  EXPECT_TRUE(is_subset(select_support_beta(b, 0.7), select_support_beta(b, 0.3)));
  EXPECT_EQ(select_support_l1<double>((RVec(4) << 0, 1, 0, -2).finished()), (IndexSet{1, 3}));
}

TEST(Averaging, FirstStepAndKmHistory) {
  AsmState<double> s = asm_init<double>(3, 1.0, 1.0);
  const RVec a = RVec::Constant(3, 2.0), b = RVec::Constant(3, 4.0);
  AveragingConfig km{AveragingMode::BetweenIterations, 0.5};
  EXPECT_EQ(apply_averaging(s, a, RVec(RVec::Zero(3)), km), a);
  // history is the previous averaged value
  EXPECT_EQ(apply_averaging(s, b, RVec(RVec::Zero(3)), km), RVec::Constant(3, 3.0));
  EXPECT_EQ(apply_averaging(s, b, RVec(RVec::Zero(3)), km), RVec::Constant(3, 3.5));
  AsmState<double> t = asm_init<double>(3, 1.0, 1.0);
  AveragingConfig raw{AveragingMode::BetweenIterationsRaw, 0.5};
  apply_averaging(t, a, RVec(RVec::Zero(3)), raw);
  apply_averaging(t, b, RVec(RVec::Zero(3)), raw);
  EXPECT_EQ(apply_averaging(t, b, RVec(RVec::Zero(3)), raw), RVec::Constant(3, 4.0));
}

TEST(AsampL1, FixedPointAtLassoSolution) {
  const auto p = small_lasso(4);
  const auto o = oracle_solution(p);
  QuasiVarianceSchedule q;
  q.strategy = VarStrategy::Fixed;
  q.v_fixed = q.v_hat_fixed = 0.4;
  auto s = asm_init<double>(p.N(), 0.4, 0.4);
  s.x = o.x_star;
  s.iter = 1;
  for (int k = 0; k < 5; ++k) asamp_l1_iterate<double>(s, p, q, {AveragingMode::None, 0.5});
  EXPECT_LT((s.x - o.x_star).norm(), 1e-10);
  EXPECT_LT((s.x_half - o.x_star).norm(), 1e-10);
}

TEST(AsampL1, FirstSweepIsPrs) {
  const auto p = small_lasso(5, 8, 16);
  QuasiVarianceSchedule q;
  q.strategy = VarStrategy::Fixed;
  q.v_fixed = q.v_hat_fixed = 0.7;
  auto s = asm_init<double>(p.N(), 0.7, 0.7);
  asamp_l1_iterate<double>(s, p, q, {AveragingMode::None, 0.5});
  const auto r = prs_step<double>(RVec::Zero(p.N()), 0.7, p);
  EXPECT_LT((s.x - r.x).norm(), 1e-10);
  EXPECT_LT((s.x_half - r.x_half).norm(), 1e-10);
  EXPECT_EQ(s.E.size(), 16u);
}

TEST(AsampL1, ExtrinsicMeanIdentity) {
  const auto p = small_lasso(6, 8, 16);
  QuasiVarianceSchedule q;
  auto s = asm_init<double>(p.N(), 1.0, 1.0);
  for (int k = 0; k < 3; ++k) asamp_l1_iterate<double>(s, p, q, {});
  const RVec x = s.x, mu = s.mu;
  const double v = s.v;
  asamp_l1_iterate<double>(s, p, q, {});
  for (std::size_t j = 0; j < s.E.size(); ++j) {
    const Index i = s.E[j];
    const double alt = x[i] - (s.v_hat / v) * (mu[i] - x[i]);
    EXPECT_NEAR(s.nu_hat[static_cast<Index>(j)], alt, 1e-12 * std::max(1.0, std::abs(alt)));
  }
}

TEST(AsampL1, ConvergesToOracle) {
  for (std::uint64_t seed = 10; seed < 16; ++seed) {
    const auto p = small_lasso(seed);
    const auto o = oracle_solution(p);
    QuasiVarianceSchedule q;
    auto s = asm_init<double>(p.N(), 1.0, 1.0);
    for (int k = 0; k < 5000 && kkt_residual<double>(s.x_half, p.A, p.y, p.lambda, 1.0) > 1e-11; ++k)
      asamp_l1_iterate<double>(s, p, q, {});
    EXPECT_LT((s.x_half - o.x_star).lpNorm<Eigen::Infinity>(), 1e-7) << seed;
  }
}

TEST(AsampL1, EmptySupportFallsBackToFullSpace) {
  const auto p = small_lasso(7);
  QuasiVarianceSchedule q;
  auto s = asm_init<double>(p.N(), 1.0, 1.0);
  s.iter = 3;
  EXPECT_NO_THROW(asamp_l1_iterate<double>(s, p, q, {}));
  EXPECT_EQ(s.E, full_set(p.N()));
}

TEST(AsampL1, DroppedIndexCanReenter) {
  const auto p = small_lasso(8, 10, 20);
  const auto o = oracle_solution(p);
  ASSERT_FALSE(o.support.empty());
  const Index j = o.support.front();
  QuasiVarianceSchedule q;
  q.strategy = VarStrategy::Fixed;
  q.v_fixed = q.v_hat_fixed = 0.5;
  auto s = asm_init<double>(p.N(), 0.5, 0.5);
  s.x = o.x_star;
  s.x[j] = 0.0;
  s.iter = 1;
  asamp_l1_iterate<double>(s, p, q, {AveragingMode::None, 0.5});
  EXPECT_FALSE(std::binary_search(s.E.begin(), s.E.end(), j));
  bool back = false;
  for (int k = 0; k < 50 && !back; ++k) {
    asamp_l1_iterate<double>(s, p, q, {AveragingMode::None, 0.5});
    back = std::binary_search(s.E.begin(), s.E.end(), j);
  }
  EXPECT_TRUE(back);
}

TEST(AsmMmse, FirstIterationEqualsVamp) {
  const auto p = small_channel(3);
  MmseOptions a;
  a.prior = MmsePrior::HMC;
  a.hmc = {0.02, 0.1, 6.0};
  MmseOptions b = a;
  b.subspace = false;
  QuasiVarianceSchedule q;
  q.strategy = VarStrategy::SubspaceMM;
  auto sa = mmse_init<cplx>(p.N(), a), sb = mmse_init<cplx>(p.N(), b);
  asm_iterate_mmse<cplx>(sa, p, a, q, {AveragingMode::None, 0.5});
  asm_iterate_mmse<cplx>(sb, p, b, q, {AveragingMode::None, 0.5});
  EXPECT_EQ(sa.x_half, sb.x_half);
  EXPECT_EQ(sa.x, sb.x);
  EXPECT_EQ(sa.v, sb.v);
}

TEST(AsmMmse, MemorylessHmcRunEqualsBg) {
  const auto p = small_channel(4);
  MmseOptions h;
  h.prior = MmsePrior::HMC;
  h.hmc = {0.2, 0.8, 6.0};
  MmseOptions b;
  b.prior = MmsePrior::BG;
  b.bg = {0.2, 6.0};
  QuasiVarianceSchedule q;
  q.strategy = VarStrategy::SubspaceMM;
  auto sh = mmse_init<cplx>(p.N(), h), sb = mmse_init<cplx>(p.N(), b);
  for (int k = 0; k < 10; ++k) {
    asm_iterate_mmse<cplx>(sh, p, h, q, {AveragingMode::None, 0.5});
    asm_iterate_mmse<cplx>(sb, p, b, q, {AveragingMode::None, 0.5});
    ASSERT_EQ(sh.E, sb.E);
    ASSERT_LT((sh.x_half - sb.x_half).norm(), 1e-9 * (1.0 + sb.x_half.norm()));
  }
}

TEST(AsmMmse, HmcRecoversClusteredChannel) {
  std::vector<double> nmse;
  for (std::uint64_t seed = 5; seed < 10; ++seed) {
    const auto p = small_channel(seed);
    MmseOptions o;
    o.prior = MmsePrior::HMC;
    o.hmc = {0.02, 0.1, 6.0};
    QuasiVarianceSchedule q;
    q.strategy = VarStrategy::SubspaceMM;
    auto s = mmse_init<cplx>(p.N(), o);
    for (int k = 0; k < 30; ++k) asm_iterate_mmse<cplx>(s, p, o, q, {AveragingMode::None, 0.5});
    EXPECT_FALSE(s.exploded);
    nmse.push_back(nmse_db<cplx>(s.x_half, *p.x_dag));
  }
  EXPECT_LT(lower_median(nmse), -15.0);
}
