#pragma once

#include "denoisers.hpp"
#include "linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace asamp {

/// Relative KKT residual of the sigma_w-normalized lasso.
template <class T>
double kkt_residual(const Vec<T>& x, const Mat<T>& A, const Vec<T>& y, double lambda, double sigma_w2) {
  if (!(sigma_w2 > 0.0)) throw Error(Errc::ZeroNoise, "kkt_residual needs sigma_w > 0");
  const double s = std::sqrt(sigma_w2);
  const Vec<T> r = (y - A * x) / s;
  const Vec<T> grad = -(A.adjoint() * r) / s;
  const Vec<T> p = soft_threshold_vec<T>(x - grad, lambda / sigma_w2);
  return (x - p).norm() / (1.0 + x.norm() + r.norm());
}

inline constexpr double kNmseFloorDb = -300.0;

template <class T>
double nmse_db(const Vec<T>& x, const Vec<T>& x_dag) {
  const double d = x_dag.squaredNorm();
  if (!(d > 0.0)) throw Error(Errc::ZeroTruth, "nmse_db needs a nonzero ground truth");
  const double e = (x - x_dag).squaredNorm();
  if (e <= 0.0) return kNmseFloorDb;
  return std::max(kNmseFloorDb, 10.0 * std::log10(e / d));
}

template <class T>
IndexSet support_of(const Vec<T>& x) {
  IndexSet E;
  for (Index i = 0; i < x.size(); ++i)
    if (x[i] != T(0)) E.push_back(i);
  return E;
}

struct SupportMetrics {
  std::size_t true_positive = 0;
  std::size_t false_positive = 0;
  std::size_t false_negative = 0;
};

inline SupportMetrics support_metrics(const IndexSet& est, const IndexSet& truth) {
  IndexSet common;
  std::set_intersection(est.begin(), est.end(), truth.begin(), truth.end(), std::back_inserter(common));
  return {common.size(), est.size() - common.size(), truth.size() - common.size()};
}

struct TraceRecord {
  int iter = 0;
  double kkt_residual = std::numeric_limits<double>::quiet_NaN();
  double nmse_db = std::numeric_limits<double>::quiet_NaN();
  std::size_t support_size = 0;
  double v = std::numeric_limits<double>::quiet_NaN();
  double v_hat = std::numeric_limits<double>::quiet_NaN();
  double elapsed_s = 0.0;
  bool exploded = false;
};

class RunTrace {
 public:
  void push(TraceRecord r) {
    if (!records_.empty()) {
      if (r.iter <= records_.back().iter) throw Error(Errc::DomainError, "trace iterations must increase");
      r.exploded = r.exploded || records_.back().exploded;
    }
    records_.push_back(r);
  }
  const std::vector<TraceRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const TraceRecord& back() const { return records_.back(); }
  bool exploded() const { return !records_.empty() && records_.back().exploded; }

 private:
  std::vector<TraceRecord> records_;
};

enum class Metric { Kkt, Nmse };

inline double metric_of(const TraceRecord& r, Metric m) {
  return m == Metric::Kkt ? r.kkt_residual : r.nmse_db;
}

// Value of a run at an iteration: last record carried forward; +inf once exploded.
inline double value_at(const RunTrace& t, Metric m, int iter) {
  if (t.empty()) throw Error(Errc::EmptyInput, "empty trace");
  const auto& rs = t.records();
  auto it = std::upper_bound(rs.begin(), rs.end(), iter, [](int k, const TraceRecord& r) { return k < r.iter; });
  const TraceRecord& r = it == rs.begin() ? rs.front() : *(it - 1);
  if (r.exploded || (t.exploded() && iter > rs.back().iter)) return std::numeric_limits<double>::infinity();
  const double val = metric_of(r, m);
  return std::isnan(val) ? std::numeric_limits<double>::infinity() : val;
}

inline double lower_median(std::vector<double> v) {
  if (v.empty()) throw Error(Errc::EmptyInput, "median of nothing");
  const auto k = (v.size() - 1) / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

inline double median_over_runs(const std::vector<RunTrace>& traces, Metric m, int iter) {
  if (traces.empty()) throw Error(Errc::EmptyInput, "no traces");
  std::vector<double> v;
  v.reserve(traces.size());
  for (const auto& t : traces) v.push_back(value_at(t, m, iter));
  return lower_median(std::move(v));
}

// First iteration whose residual is at or below tol; -1 if never.
inline int iterations_to(const RunTrace& t, double tol) {
  for (const auto& r : t.records())
    if (!r.exploded && r.kkt_residual <= tol) return r.iter;
  return -1;
}

}  // namespace asamp
