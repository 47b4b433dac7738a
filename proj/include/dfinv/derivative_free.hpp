#pragma once

// Derivative-free features: xi_i(t) = R q_i(t-), where q_i(t-) holds the
// current and M past positions of joint i, newest first.
//
//   DF    R = I_{M+1}
//   DFW   R = diag(r_1 .. r_{M+1})
//   DFR   k x (M+1), unit-norm rows, first row e_1
//   DFSR  3 x (M+1): e_1, a filtered first and a filtered second backward
//         difference, both truncated to M lags

#include "dfinv/core.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dfinv {

enum class DfVariant { DF, DFW, DFR, DFSR };

inline std::string to_string(DfVariant v) {
  switch (v) {
    case DfVariant::DF: return "DF";
    case DfVariant::DFW: return "DFW";
    case DfVariant::DFR: return "DFR";
    case DfVariant::DFSR: return "DFSR";
  }
  return "?";
}

inline DfVariant df_variant_from_string(const std::string& s) {
  if (s == "DF") return DfVariant::DF;
  if (s == "DFW") return DfVariant::DFW;
  if (s == "DFR") return DfVariant::DFR;
  if (s == "DFSR") return DfVariant::DFSR;
  throw ConfigError("unknown derivative-free variant '" + s + "'");
}

struct DfsrParams {
  double alpha1 = 20.0;   // 1/s
  double alpha2 = 400.0;  // 1/s^2
  double beta1 = 0.5;
  double beta2 = 0.5;

  static DfsrParams for_period(double sample_period, double beta1 = 0.5, double beta2 = 0.5) {
    return {1.0 / sample_period, 1.0 / (sample_period * sample_period), beta1, beta2};
  }
};

namespace detail {

inline Vec dfsr_velocity_row(double alpha1, double beta1, Index M) {
  Vec r(M + 1);
  const double gain = alpha1 * (1.0 - beta1);
  r(0) = gain;
  double pw = 1.0;
  for (Index j = 1; j <= M; ++j) {
    r(j) = gain * pw * (beta1 - 1.0);
    pw *= beta1;
  }
  return r;
}

inline Vec dfsr_acceleration_row(double alpha2, double beta2, Index M) {
  Vec r(M + 1);
  const double gain = alpha2 * (1.0 - beta2);
  r(0) = gain;
  if (M >= 1) r(1) = gain * (beta2 - 2.0);
  double pw = 1.0;
  for (Index j = 2; j <= M; ++j) {
    r(j) = gain * pw * (beta2 - 1.0) * (beta2 - 1.0);
    pw *= beta2;
  }
  return r;
}

}  // namespace detail

class FeatureMatrixR {
 public:
  DfVariant variant() const { return variant_; }
  const Mat& R() const { return R_; }
  Index lags() const { return M_; }
  Index window() const { return M_ + 1; }
  Index features_per_joint() const { return R_.rows(); }
  const DfsrParams& dfsr() const { return dfsr_; }

  static FeatureMatrixR df(Index M) {
    detail::require(M >= 0, "DF: M must be >= 0");
    return FeatureMatrixR(DfVariant::DF, Mat::Identity(M + 1, M + 1), M);
  }

  static FeatureMatrixR dfw(const Eigen::Ref<const Vec>& weights) {
    detail::require(weights.size() >= 1, "DFW: need at least one weight");
    return FeatureMatrixR(DfVariant::DFW, weights.asDiagonal().toDenseMatrix(), weights.size() - 1);
  }

  /// Rows 2..k are normalized to unit norm; row 1 is forced to e_1.
  static FeatureMatrixR dfr(const Eigen::Ref<const Mat>& rows) {
    detail::require(rows.rows() >= 1 && rows.cols() >= 1, "DFR: empty feature matrix");
    detail::require(rows.rows() <= rows.cols(), "DFR: k must not exceed M + 1");
    Mat R = rows;
    R.row(0).setZero();
    R(0, 0) = 1.0;
    for (Index i = 1; i < R.rows(); ++i) {
      const double nrm = R.row(i).norm();
      if (!(nrm > 0) || !std::isfinite(nrm))
        throw std::invalid_argument("DFR: feature row " + std::to_string(i) + " has zero norm");
      R.row(i) /= nrm;
    }
    return FeatureMatrixR(DfVariant::DFR, std::move(R), rows.cols() - 1);
  }

  static FeatureMatrixR dfsr(const DfsrParams& p, Index M) {
    detail::require(M >= 2, "DFSR: M must be >= 2");
    if (!(p.beta1 > 0 && p.beta1 < 1 && p.beta2 > 0 && p.beta2 < 1))
      throw std::invalid_argument("DFSR: poles must lie in (0, 1)");
    Mat R = Mat::Zero(3, M + 1);
    R(0, 0) = 1.0;
    R.row(1) = detail::dfsr_velocity_row(p.alpha1, p.beta1, M).transpose();
    R.row(2) = detail::dfsr_acceleration_row(p.alpha2, p.beta2, M).transpose();
    FeatureMatrixR f(DfVariant::DFSR, std::move(R), M);
    f.dfsr_ = p;
    return f;
  }

  /// Free hyperparameters: DFW weights, DFR rows 2..k (row-major), DFSR
  /// [alpha1, alpha2, beta1, beta2]; empty for DF.
  Vec delta() const {
    switch (variant_) {
      case DfVariant::DF: return Vec();
      case DfVariant::DFW: return R_.diagonal();
      case DfVariant::DFR: {
        Vec d((R_.rows() - 1) * R_.cols());
        for (Index i = 1; i < R_.rows(); ++i)
          d.segment((i - 1) * R_.cols(), R_.cols()) = R_.row(i).transpose();
        return d;
      }
      case DfVariant::DFSR: {
        Vec d(4);
        d << dfsr_.alpha1, dfsr_.alpha2, dfsr_.beta1, dfsr_.beta2;
        return d;
      }
    }
    return Vec();
  }

  /// Same variant and shape, new hyperparameters.
  FeatureMatrixR with_delta(const Eigen::Ref<const Vec>& d) const {
    switch (variant_) {
      case DfVariant::DF:
        detail::require(d.size() == 0, "DF has no hyperparameters");
        return *this;
      case DfVariant::DFW:
        detail::require(d.size() == window(), "DFW: need M + 1 weights");
        return dfw(d);
      case DfVariant::DFR: {
        detail::require(d.size() == (R_.rows() - 1) * R_.cols(), "DFR: wrong delta size");
        Mat rows = R_;
        for (Index i = 1; i < R_.rows(); ++i)
          rows.row(i) = d.segment((i - 1) * R_.cols(), R_.cols()).transpose();
        return dfr(rows);
      }
      case DfVariant::DFSR:
        detail::require(d.size() == 4, "DFSR: need [alpha1, alpha2, beta1, beta2]");
        return dfsr({d(0), d(1), d(2), d(3)}, M_);
    }
    return *this;
  }

  /// Rebuild from a stored matrix (deserialization). DFSR parameters are
  /// required separately for that variant.
  static FeatureMatrixR from_matrix(DfVariant v, const Mat& R, const DfsrParams* p = nullptr) {
    switch (v) {
      case DfVariant::DF: return df(R.cols() - 1);
      case DfVariant::DFW: return dfw(R.diagonal());
      case DfVariant::DFR: return dfr(R);
      case DfVariant::DFSR:
        if (!p) throw ConfigError("DFSR feature matrix needs its filter parameters");
        return dfsr(*p, R.cols() - 1);
    }
    throw ConfigError("unknown feature matrix variant");
  }

 private:
  FeatureMatrixR(DfVariant v, Mat R, Index M) : variant_(v), R_(std::move(R)), M_(M) {}

  DfVariant variant_;
  Mat R_;
  Index M_;
  DfsrParams dfsr_{};
};

inline FeatureMatrixR dfsr_build_R(const DfsrParams& p, Index M) { return FeatureMatrixR::dfsr(p, M); }

/// Row 1 = e_1, rows 2-3 from the DFSR velocity/acceleration pattern, further
/// rows random; all normalized to unit norm.
inline FeatureMatrixR dfr_init(Index M, Index k, std::uint64_t seed, double beta1 = 0.5,
                               double beta2 = 0.5) {
  detail::require(k >= 1 && k <= M + 1, "dfr_init: need 1 <= k <= M + 1");
  Mat rows = Mat::Zero(k, M + 1);
  rows(0, 0) = 1.0;
  if (k >= 2) rows.row(1) = detail::dfsr_velocity_row(1.0, beta1, M).transpose();
  if (k >= 3) rows.row(2) = detail::dfsr_acceleration_row(1.0, beta2, M).transpose();
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index i = 3; i < k; ++i)
    for (Index j = 0; j <= M; ++j) rows(i, j) = normal(rng);
  return FeatureMatrixR::dfr(rows);
}

/// (M+1) x n window; column j is [q_j(t), q_j(t-1), ..., q_j(t-M)].
inline Mat past_window(const Eigen::Ref<const Mat>& positions, Index t, Index M) {
  detail::require(M >= 0, "past_window: M must be >= 0");
  if (t < M || t >= positions.rows())
    throw std::out_of_range("past_window: sample " + std::to_string(t) +
                            " lacks M = " + std::to_string(M) + " past samples");
  Mat w(M + 1, positions.cols());
  for (Index s = 0; s <= M; ++s) w.row(s) = positions.row(t - s);
  return w;
}

/// Stacked windows, one row per sample: joint j occupies columns
/// [j (M+1), (j+1)(M+1)). Rows t < M have no full window and are left zero.
inline Mat window_rows(const Eigen::Ref<const Mat>& positions, Index M) {
  const Index N = positions.rows(), n = positions.cols();
  Mat out = Mat::Zero(N, n * (M + 1));
  for (Index t = M; t < N; ++t)
    for (Index j = 0; j < n; ++j)
      for (Index s = 0; s <= M; ++s) out(t, j * (M + 1) + s) = positions(t - s, j);
  return out;
}

/// xi = [R q_1(t-); ...; R q_n(t-)] with `window` shaped (M+1) x n.
inline Vec apply_feature_matrix(const FeatureMatrixR& f, const Eigen::Ref<const Mat>& window) {
  if (window.rows() != f.window())
    throw std::invalid_argument("apply_feature_matrix: window length does not match R");
  const Mat xi = f.R() * window;  // k x n
  return Eigen::Map<const Vec>(xi.data(), xi.size());
}

/// Row-wise version over `window_rows` output; result N x (k n).
inline Mat apply_feature_matrix_rows(const FeatureMatrixR& f, const Eigen::Ref<const Mat>& windows) {
  const Index w = f.window(), k = f.features_per_joint();
  if (windows.cols() % w != 0)
    throw std::invalid_argument("apply_feature_matrix_rows: columns are not a multiple of M + 1");
  const Index n = windows.cols() / w;
  Mat out(windows.rows(), k * n);
  for (Index j = 0; j < n; ++j) out.middleCols(j * k, k) = windows.middleCols(j * w, w) * f.R().transpose();
  return out;
}

}  // namespace dfinv
