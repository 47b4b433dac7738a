#pragma once

// Horizon-T relative prediction error of the model frozen at time t:
//
//   eps_t^(k) = sum_{s=1..T} (y_k(t+s) - yhat_k(t+s | theta_t))^2 / sum_{s=1..T} y_k(t+s)^2
//
// and order statistics of an error curve past a transient cutoff.

#include "dfinv/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace dfinv {

struct OutputGroup {
  std::string name;
  std::vector<Index> outputs;
};

struct ErrorSeries {
  std::vector<Index> times;        // sample index t of each row
  Mat eps;                         // rows x n_out, NaN where flagged
  std::vector<std::vector<bool>> flagged;  // zero denominator
  std::vector<std::string> group_names;
  Mat groups;                      // rows x groups, mean over unflagged outputs (NaN if none)

  Index size() const { return eps.rows(); }
};

/// `predict(t, u)` returns yhat(u | theta_t). Rows are emitted for
/// t = first .. last inclusive; every t + T must be a valid row of Y.
inline ErrorSeries prediction_error_series(const std::function<Vec(Index, Index)>& predict,
                                           const Eigen::Ref<const Mat>& Y, Index first, Index last, Index T,
                                           const std::vector<OutputGroup>& groups) {
  detail::require(T >= 1, "prediction_error_series: horizon must be >= 1");
  detail::require(first >= 0 && last >= first - 1 && last + T < Y.rows(),
                  "prediction_error_series: evaluation window exceeds the data");
  const Index n_out = Y.cols(), rows = last - first + 1;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  ErrorSeries es;
  es.eps = Mat::Constant(rows, n_out, nan);
  es.groups = Mat::Constant(rows, static_cast<Index>(groups.size()), nan);
  for (const auto& g : groups) {
    for (Index k : g.outputs) detail::require(k >= 0 && k < n_out, "output group index out of range");
    es.group_names.push_back(g.name);
  }
  es.flagged.assign(static_cast<std::size_t>(rows), std::vector<bool>(static_cast<std::size_t>(n_out), false));
  for (Index i = 0; i < rows; ++i) {
    const Index t = first + i;
    es.times.push_back(t);
    Vec num = Vec::Zero(n_out), den = Vec::Zero(n_out);
    for (Index s = 1; s <= T; ++s) {
      const Vec yhat = predict(t, t + s);
      const Vec y = Y.row(t + s).transpose();
      num.array() += (y - yhat).array().square();
      den.array() += y.array().square();
    }
    for (Index k = 0; k < n_out; ++k) {
      if (den(k) > 0) es.eps(i, k) = num(k) / den(k);
      else es.flagged[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = true;
    }
    for (std::size_t g = 0; g < groups.size(); ++g) {
      double sum = 0.0;
      int cnt = 0;
      for (Index k : groups[g].outputs)
        if (!std::isnan(es.eps(i, k))) {
          sum += es.eps(i, k);
          ++cnt;
        }
      if (cnt > 0) es.groups(i, static_cast<Index>(g)) = sum / cnt;
    }
  }
  return es;
}

/// Version driven by per-time parameter snapshots: thetas[i] is theta_{first+i}.
inline ErrorSeries prediction_error_series(const UnifiedLinearModel& model, const DesignBlocks& design,
                                           const std::vector<Vec>& thetas, const Eigen::Ref<const Mat>& Y,
                                           Index first, Index T, const std::vector<OutputGroup>& groups) {
  const Index last = first + static_cast<Index>(thetas.size()) - 1;
  return prediction_error_series(
      [&](Index t, Index u) { return model.predict_from(design, u, thetas[static_cast<std::size_t>(t - first)]); },
      Y, first, last, T, groups);
}

struct SummaryStats {
  std::size_t count = 0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Linear-interpolation quantile (type 7) of sorted data.
inline double quantile_sorted(const std::vector<double>& v, double q) {
  detail::require(!v.empty(), "quantile of an empty sample");
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Boxplot statistics of `values` (NaNs skipped); whiskers reach the most
/// extreme points within 1.5 IQR of the quartiles.
inline SummaryStats summarize(std::vector<double> values) {
  values.erase(std::remove_if(values.begin(), values.end(), [](double x) { return std::isnan(x); }), values.end());
  if (values.empty()) throw std::invalid_argument("steady-state window is empty");
  std::sort(values.begin(), values.end());
  SummaryStats s;
  s.count = values.size();
  s.median = quantile_sorted(values, 0.5);
  s.q1 = quantile_sorted(values, 0.25);
  s.q3 = quantile_sorted(values, 0.75);
  const double iqr = s.q3 - s.q1;
  const double lo = s.q1 - 1.5 * iqr, hi = s.q3 + 1.5 * iqr;
  s.min = values.front();
  s.max = values.back();
  s.whisker_low = *std::find_if(values.begin(), values.end(), [&](double x) { return x >= lo; });
  s.whisker_high = *std::find_if(values.rbegin(), values.rend(), [&](double x) { return x <= hi; });
  return s;
}

/// Samples dropped as transient: round(cutoff_s / Ts).
inline Index cutoff_samples(double cutoff_s, double sample_period) {
  detail::require(cutoff_s >= 0 && sample_period > 0, "cutoff_samples: invalid arguments");
  return static_cast<Index>(std::llround(cutoff_s / sample_period));
}

/// Statistics of curve values whose time index is >= the cutoff sample.
inline SummaryStats steady_state_stats(const std::vector<Index>& times, const Eigen::Ref<const Vec>& curve,
                                       Index cutoff_index) {
  detail::require(static_cast<Index>(times.size()) == curve.size(), "steady_state_stats: size mismatch");
  std::vector<double> v;
  for (std::size_t i = 0; i < times.size(); ++i)
    if (times[i] >= cutoff_index) v.push_back(curve(static_cast<Index>(i)));
  return summarize(std::move(v));
}

}  // namespace dfinv
