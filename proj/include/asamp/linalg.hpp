#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace asamp {

using Index = Eigen::Index;

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
using RVec = Vec<double>;
using RMat = Mat<double>;
using cplx = std::complex<double>;
using CVec = Vec<cplx>;
using CMat = Mat<cplx>;

// Sorted, unique column indices.
using IndexSet = std::vector<Index>;

template <class T>
struct is_complex : std::false_type {};
template <class T>
struct is_complex<std::complex<T>> : std::true_type {};
template <class T>
inline constexpr bool is_complex_v = is_complex<T>::value;

enum class Field { Real, Complex };

template <class T>
constexpr Field field_of() {
  return is_complex_v<T> ? Field::Complex : Field::Real;
}

enum class Errc {
  NotPositiveDefinite,
  IndexOutOfRange,
  NonSymmetric,
  DimensionError,
  ZeroSignal,
  ZeroNoise,
  ZeroTruth,
  EmptyInput,
  EmptySupport,
  NotGeneral,
  DomainError,
  NoConvergence,
  NotSPD,
  SolveFailure,
  ConfigError,
  IoError,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::NotPositiveDefinite: return "NotPositiveDefinite";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::NonSymmetric: return "NonSymmetric";
    case Errc::DimensionError: return "DimensionError";
    case Errc::ZeroSignal: return "ZeroSignal";
    case Errc::ZeroNoise: return "ZeroNoise";
    case Errc::ZeroTruth: return "ZeroTruth";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::EmptySupport: return "EmptySupport";
    case Errc::NotGeneral: return "NotGeneral";
    case Errc::DomainError: return "DomainError";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::NotSPD: return "NotSPD";
    case Errc::SolveFailure: return "SolveFailure";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

template <class T>
inline double abs2(const T& z) {
  if constexpr (is_complex_v<T>)
    return std::norm(z);
  else
    return z * z;
}

/// Cholesky solve of a Hermitian positive definite system.
template <class T>
Vec<T> solve_hpd(const Mat<T>& M, const Vec<T>& b) {
  if (M.rows() != M.cols() || M.rows() != b.size())
    throw Error(Errc::DimensionError, "solve_hpd shape mismatch");
  if (M.rows() == 0) return Vec<T>(0);
  Eigen::LLT<Mat<T>> llt(M);
  if (llt.info() != Eigen::Success)
    throw Error(Errc::NotPositiveDefinite, "non-positive pivot in Cholesky factorization");
  return llt.solve(b);
}

template <class T>
Mat<T> restrict_columns(const Mat<T>& A, const IndexSet& E) {
  Mat<T> out(A.rows(), static_cast<Index>(E.size()));
  for (std::size_t j = 0; j < E.size(); ++j) {
    if (E[j] < 0 || E[j] >= A.cols())
      throw Error(Errc::IndexOutOfRange, "column index " + std::to_string(E[j]));
    out.col(static_cast<Index>(j)) = A.col(E[j]);
  }
  return out;
}

template <class T>
Vec<T> restrict_vector(const Vec<T>& x, const IndexSet& E) {
  Vec<T> out(static_cast<Index>(E.size()));
  for (std::size_t j = 0; j < E.size(); ++j) out[static_cast<Index>(j)] = x[E[j]];
  return out;
}

// Zero-padded extension of a vector living on E.
template <class T>
Vec<T> extend(const Vec<T>& xE, const IndexSet& E, Index N) {
  Vec<T> x = Vec<T>::Zero(N);
  for (std::size_t j = 0; j < E.size(); ++j) x[E[j]] = xE[static_cast<Index>(j)];
  return x;
}

inline IndexSet full_set(Index N) {
  IndexSet E(static_cast<std::size_t>(N));
  for (Index i = 0; i < N; ++i) E[static_cast<std::size_t>(i)] = i;
  return E;
}

inline IndexSet complement(const IndexSet& E, Index N) {
  IndexSet out;
  out.reserve(static_cast<std::size_t>(N) - std::min<std::size_t>(E.size(), N));
  std::size_t j = 0;
  for (Index i = 0; i < N; ++i) {
    if (j < E.size() && E[j] == i)
      ++j;
    else
      out.push_back(i);
  }
  return out;
}

inline bool is_subset(const IndexSet& a, const IndexSet& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

inline IndexSet set_union(const IndexSet& a, const IndexSet& b) {
  IndexSet out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

struct Extremes {
  double min = 0.0;
  double max = 0.0;
};

/// Smallest and largest eigenvalue of a Hermitian PSD matrix.
template <class T>
Extremes eig_sym_extremes(const Mat<T>& M) {
  if (M.rows() != M.cols()) throw Error(Errc::DimensionError, "eig_sym_extremes needs a square matrix");
  if (M.rows() == 0) return {};
  const double scale = M.cwiseAbs().rowwise().sum().maxCoeff();
  const double asym = (M - M.adjoint()).cwiseAbs().rowwise().sum().maxCoeff();
  if (asym > 1e-10 * std::max(scale, 1e-300) && asym > 0.0)
    throw Error(Errc::NonSymmetric, "matrix is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Mat<T>> es(M, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return {std::max(0.0, ev.minCoeff()), std::max(0.0, ev.maxCoeff())};
}

template <class T>
RVec eig_sym_values(const Mat<T>& M) {
  if (M.rows() == 0) return RVec(0);
  Eigen::SelfAdjointEigenSolver<Mat<T>> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

// Gram matrix of the columns of A on E (|E| x |E|).
template <class T>
Mat<T> gram_on(const Mat<T>& A, const IndexSet& E) {
  Mat<T> AE = restrict_columns(A, E);
  return AE.adjoint() * AE;
}

// Extremes of A_E^H A_E computed on the smaller of the two Gram matrices.
// The small Gram shares the nonzero spectrum; zeros are added when |E| > M.
template <class T>
Extremes gram_extremes(const Mat<T>& A, const IndexSet& E) {
  if (E.empty()) return {};
  Mat<T> AE = restrict_columns(A, E);
  const Index K = AE.cols(), M = AE.rows();
  if (K <= M) {
    Mat<T> G = AE.adjoint() * AE;
    return eig_sym_extremes<T>(G);
  }
  Mat<T> G = AE * AE.adjoint();
  Extremes ex = eig_sym_extremes<T>(G);
  ex.min = 0.0;
  return ex;
}

}  // namespace asamp
