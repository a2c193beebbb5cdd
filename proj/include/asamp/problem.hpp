#pragma once

#include "linalg.hpp"
#include "rng.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>

namespace asamp {

template <class T>
struct ProblemInstance {
  Mat<T> A;
  Vec<T> y;
  double sigma_w2 = 1.0;
  double lambda = 1.0;
  std::optional<Vec<T>> x_dag;

  Index M() const { return A.rows(); }
  Index N() const { return A.cols(); }
  static constexpr Field field = field_of<T>();
};

struct BGPriorParams {
  double epsilon = 0.25;
  double sigma0_2 = 1.0;
};

struct HMCPriorParams {
  double p01 = 1.0 / 750.0;
  double p10 = 1.0 / 250.0;
  double sigma0_2 = 4.0;

  double activity() const { return p01 / (p01 + p10); }
};

enum class Ensemble { Gaussian, RowOrthogonal, PdftRp };
enum class PriorKind { BG, HMC };

inline const char* ensemble_name(Ensemble e) {
  switch (e) {
    case Ensemble::Gaussian: return "gaussian";
    case Ensemble::RowOrthogonal: return "row_orthogonal";
    case Ensemble::PdftRp: return "pdft_rp";
  }
  return "?";
}

inline Ensemble parse_ensemble(const std::string& s) {
  if (s == "gaussian" || s == "G") return Ensemble::Gaussian;
  if (s == "row_orthogonal" || s == "O") return Ensemble::RowOrthogonal;
  if (s == "pdft_rp") return Ensemble::PdftRp;
  throw Error(Errc::ConfigError, "unknown ensemble '" + s + "'");
}

inline RMat gen_gaussian_matrix(Index M, Index N, std::uint64_t seed) {
  if (M < 1 || N < 1) throw Error(Errc::DimensionError, "gaussian matrix needs M, N >= 1");
  Rng rng(seed);
  RMat A(M, N);
  const double var = 1.0 / static_cast<double>(M);
  for (Index j = 0; j < N; ++j)
    for (Index i = 0; i < M; ++i) A(i, j) = rng.gaussian<double>(var);
  return A;
}

inline std::vector<Index> random_permutation(Index N, Rng& rng) {
  std::vector<Index> p(static_cast<std::size_t>(N));
  for (Index i = 0; i < N; ++i) p[static_cast<std::size_t>(i)] = i;
  for (Index i = N - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
  }
  return p;
}

// M distinct indices of [0, N), sorted.
inline IndexSet random_subset(Index N, Index M, Rng& rng) {
  auto p = random_permutation(N, rng);
  IndexSet s(p.begin(), p.begin() + M);
  std::sort(s.begin(), s.end());
  return s;
}

inline RMat gen_row_orthogonal(Index M, Index N, std::uint64_t seed) {
  if (M > N || M < 1) throw Error(Errc::DimensionError, "row-orthogonal ensemble needs 1 <= M <= N");
  Rng rng(seed);
  RMat B(N, N);
  for (Index j = 0; j < N; ++j)
    for (Index i = 0; i < N; ++i) B(i, j) = rng.normal();
  Eigen::HouseholderQR<RMat> qr(B);
  RMat Q = qr.householderQ();
  IndexSet rows = random_subset(N, M, rng);
  RMat A(M, N);
  for (Index r = 0; r < M; ++r) A.row(r) = Q.row(rows[static_cast<std::size_t>(r)]);
  return A;
}

// S*F*P: rows `rows` of the unitary DFT after permuting its columns by `perm`.
inline CMat pdft_from(const IndexSet& rows, const std::vector<Index>& perm, Index N) {
  const auto M = static_cast<Index>(rows.size());
  CMat A(M, N);
  const double s = 1.0 / std::sqrt(static_cast<double>(N));
  for (Index j = 0; j < N; ++j) {
    const Index c = perm[static_cast<std::size_t>(j)];
    for (Index r = 0; r < M; ++r) {
      // reduce the phase index exactly before converting to an angle
      const auto k = static_cast<long long>((static_cast<long long>(rows[static_cast<std::size_t>(r)]) * c) % N);
      const double th = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(N);
      A(r, j) = cplx(s * std::cos(th), s * std::sin(th));
    }
  }
  return A;
}

inline CMat gen_pdft_rp(Index M, Index N, std::uint64_t seed) {
  if (M > N || M < 1) throw Error(Errc::DimensionError, "PDFT-RP needs 1 <= M <= N");
  Rng rng(seed);
  IndexSet rows = random_subset(N, M, rng);
  auto perm = random_permutation(N, rng);
  return pdft_from(rows, perm, N);
}

template <class T>
Vec<T> sample_bg_signal(Index N, const BGPriorParams& p, std::uint64_t seed) {
  Rng rng(seed);
  Vec<T> x = Vec<T>::Zero(N);
  for (Index i = 0; i < N; ++i) {
    const bool on = rng.uniform() < p.epsilon;
    const T g = rng.gaussian<T>(p.sigma0_2);
    if (on) x[i] = g;
  }
  return x;
}

inline std::vector<int> sample_hmc_states(Index N, const HMCPriorParams& p, Rng& rng) {
  std::vector<int> s(static_cast<std::size_t>(N), 0);
  if (N == 0) return s;
  s[0] = rng.uniform() < p.activity() ? 1 : 0;
  for (Index i = 1; i < N; ++i) {
    const double u = rng.uniform();
    const int prev = s[static_cast<std::size_t>(i - 1)];
    s[static_cast<std::size_t>(i)] = prev ? (u < p.p10 ? 0 : 1) : (u < p.p01 ? 1 : 0);
  }
  return s;
}

template <class T>
Vec<T> sample_hmc_signal(Index N, const HMCPriorParams& p, std::uint64_t seed, bool require_nonempty = false) {
  Rng rng(seed);
  std::vector<int> s;
  for (;;) {
    s = sample_hmc_states(N, p, rng);
    if (!require_nonempty || N == 0 || std::find(s.begin(), s.end(), 1) != s.end()) break;
  }
  Vec<T> x = Vec<T>::Zero(N);
  for (Index i = 0; i < N; ++i) {
    const T g = rng.gaussian<T>(p.sigma0_2);
    if (s[static_cast<std::size_t>(i)]) x[i] = g;
  }
  return x;
}

template <class T>
std::pair<Vec<T>, double> add_awgn(const Vec<T>& clean, double snr_db, std::uint64_t seed) {
  const double energy = clean.squaredNorm();
  if (energy <= 0.0) throw Error(Errc::ZeroSignal, "cannot set an SNR for a zero signal");
  const auto M = static_cast<double>(clean.size());
  const double s2 = std::isinf(snr_db) && snr_db > 0 ? 0.0 : energy / (M * std::pow(10.0, snr_db / 10.0));
  Rng rng(seed);
  Vec<T> y = clean;
  if (s2 > 0.0)
    for (Index i = 0; i < y.size(); ++i) y[i] += rng.gaussian<T>(s2);
  return {y, s2};
}

// Everything needed to regenerate an instance.
struct InstanceRecipe {
  Field field = Field::Real;
  Ensemble ensemble = Ensemble::Gaussian;
  Index M = 200;
  Index N = 400;
  PriorKind prior = PriorKind::BG;
  BGPriorParams bg{0.25, 30.0};
  HMCPriorParams hmc{};
  double snr_db = 30.0;
  std::uint64_t seed = 0;
  // lambda = lambda_scale * sigma_w^2 unless lambda is given
  double lambda_scale = 1.0;
  std::optional<double> lambda;
  bool require_nonempty = false;
};

enum Stream : std::uint64_t { kMatrixStream = 1, kSignalStream = 2, kNoiseStream = 3 };

template <class T>
Mat<T> gen_matrix(const InstanceRecipe& r) {
  const auto ms = derive_seed(r.seed, kMatrixStream);
  if constexpr (is_complex_v<T>) {
    if (r.ensemble == Ensemble::PdftRp) return gen_pdft_rp(r.M, r.N, ms);
    if (r.ensemble == Ensemble::Gaussian) return gen_gaussian_matrix(r.M, r.N, ms).template cast<T>();
    return gen_row_orthogonal(r.M, r.N, ms).template cast<T>();
  } else {
    if (r.ensemble == Ensemble::PdftRp) throw Error(Errc::ConfigError, "PDFT-RP is complex only");
    if (r.ensemble == Ensemble::Gaussian) return gen_gaussian_matrix(r.M, r.N, ms);
    return gen_row_orthogonal(r.M, r.N, ms);
  }
}

template <class T>
ProblemInstance<T> make_instance(const InstanceRecipe& r) {
  ProblemInstance<T> p;
  p.A = gen_matrix<T>(r);
  const auto ss = derive_seed(r.seed, kSignalStream);
  Vec<T> x = r.prior == PriorKind::BG ? sample_bg_signal<T>(r.N, r.bg, ss)
                                      : sample_hmc_signal<T>(r.N, r.hmc, ss, r.require_nonempty);
  if (r.require_nonempty && r.prior == PriorKind::BG) {
    std::uint64_t k = 1;
    while (x.squaredNorm() == 0.0) x = sample_bg_signal<T>(r.N, r.bg, derive_seed(ss, k++));
  }
  Vec<T> clean = p.A * x;
  auto [y, s2] = add_awgn<T>(clean, r.snr_db, derive_seed(r.seed, kNoiseStream));
  p.y = std::move(y);
  p.sigma_w2 = s2;
  p.lambda = r.lambda ? *r.lambda : r.lambda_scale * s2;
  p.x_dag = std::move(x);
  return p;
}

}  // namespace asamp
