#pragma once

// Regularized least squares
//
//   theta = argmin (1/sigma^2) sum_t |y_t - Phi_t^T theta|^2 + theta^T W theta
//
// solved in batch through a Cholesky factor of A = Phi^T Phi / sigma^2 + W, or
// recursively by rank-one updates of that factor (one per output column).

#include "dfinv/core.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace dfinv {

namespace detail {

inline double smallest_pivot(const Mat& A) {
  Eigen::LDLT<Mat> ldlt(A);
  return ldlt.vectorD().minCoeff();
}

}  // namespace detail

/// Phi is (N n_out) x p_bar with one row per scalar observation.
inline Vec batch_solve(const Eigen::Ref<const Mat>& Phi, const Eigen::Ref<const Vec>& y,
                       const Eigen::Ref<const Vec>& prior_diag, double sigma2) {
  detail::require(sigma2 > 0, "batch_solve: sigma2 must be > 0");
  detail::require(Phi.cols() == prior_diag.size(), "batch_solve: prior size does not match Phi");
  detail::require(Phi.rows() == y.size(), "batch_solve: Phi and y row counts differ");
  const Index p = prior_diag.size();
  if (Phi.rows() == 0) return Vec::Zero(p);
  Mat A(p, p);
  A.setZero();
  A.selfadjointView<Eigen::Lower>().rankUpdate(Phi.transpose(), 1.0 / sigma2);
  A.diagonal() += prior_diag;
  A.triangularView<Eigen::StrictlyUpper>() = A.transpose();
  Eigen::LLT<Mat> llt(A);
  if (llt.info() != Eigen::Success) {
    std::ostringstream os;
    os << "batch_solve: Cholesky factorization failed (smallest pivot " << detail::smallest_pivot(A) << ")";
    throw NumericalError(os.str());
  }
  return llt.solve(Phi.transpose() * y / sigma2);
}

/// Immutable copy of the estimate at one instant.
struct ThetaSnapshot {
  Vec theta;
  std::size_t samples_seen = 0;
};

class RlsState {
 public:
  RlsState() = default;

  /// State holding only the prior: A = W, b = 0.
  static RlsState from_prior(const Eigen::Ref<const Vec>& prior_diag, double sigma2,
                             double forgetting = 1.0) {
    detail::require(sigma2 > 0, "RlsState: sigma2 must be > 0");
    detail::require(forgetting > 0 && forgetting <= 1, "RlsState: forgetting factor must be in (0, 1]");
    if (!((prior_diag.array() > 0).all()))
      throw std::invalid_argument("RlsState: prior precision must be strictly positive");
    RlsState s;
    s.L_ = prior_diag.cwiseSqrt().asDiagonal();
    s.b_ = Vec::Zero(prior_diag.size());
    s.theta_ = Vec::Zero(prior_diag.size());
    s.sigma2_ = sigma2;
    s.forgetting_ = forgetting;
    return s;
  }

  /// Batch initialization; equivalent to streaming the rows of Phi.
  static RlsState from_batch(const Eigen::Ref<const Mat>& Phi, const Eigen::Ref<const Vec>& y,
                             const Eigen::Ref<const Vec>& prior_diag, double sigma2) {
    RlsState s = from_prior(prior_diag, sigma2);
    const Index p = prior_diag.size();
    Mat A(p, p);
    A.setZero();
    if (Phi.rows() > 0) A.selfadjointView<Eigen::Lower>().rankUpdate(Phi.transpose(), 1.0 / sigma2);
    A.diagonal() += prior_diag;
    A.triangularView<Eigen::StrictlyUpper>() = A.transpose();
    Eigen::LLT<Mat> llt(A);
    if (llt.info() != Eigen::Success) {
      std::ostringstream os;
      os << "RlsState: Cholesky factorization failed (smallest pivot " << detail::smallest_pivot(A) << ")";
      throw NumericalError(os.str());
    }
    s.L_ = llt.matrixL();
    s.b_ = Phi.transpose() * y / sigma2;
    s.samples_seen_ = static_cast<std::size_t>(Phi.rows());
    s.refresh();
    return s;
  }

  /// Restore from checkpointed factor and right-hand side.
  static RlsState restore(Mat L, Vec b, std::size_t samples_seen, double sigma2, double forgetting = 1.0) {
    detail::require(L.rows() == L.cols() && L.rows() == b.size(), "RlsState: checkpoint shape mismatch");
    detail::require(sigma2 > 0, "RlsState: sigma2 must be > 0");
    if (!((L.diagonal().array() > 0).all()))
      throw NumericalError("RlsState: checkpoint factor has a non-positive diagonal");
    RlsState s;
    s.L_ = std::move(L);
    s.L_.triangularView<Eigen::StrictlyUpper>().setZero();
    s.b_ = std::move(b);
    s.samples_seen_ = samples_seen;
    s.sigma2_ = sigma2;
    s.forgetting_ = forgetting;
    s.refresh();
    return s;
  }

  Index dim() const { return b_.size(); }
  const Mat& chol_L() const { return L_; }
  const Vec& rhs() const { return b_; }
  const Vec& theta() const { return theta_; }
  std::size_t samples_seen() const { return samples_seen_; }
  double sigma2() const { return sigma2_; }
  double forgetting() const { return forgetting_; }

  /// Number of stored doubles: the factor plus b and theta.
  std::size_t footprint() const {
    return static_cast<std::size_t>(L_.size() + b_.size() + theta_.size());
  }

  /// A = L L^T, reconstructed (diagnostics and tests).
  Mat information() const { return L_ * L_.transpose(); }

  /// One sample: phi is p_bar x n_out, y has n_out entries. Returns false and
  /// leaves the state untouched when any input is non-finite.
  bool update(const Eigen::Ref<const Mat>& phi, const Eigen::Ref<const Vec>& y) {
    if (phi.rows() != dim() || phi.cols() != y.size())
      throw std::invalid_argument("RlsState::update: regressor shape does not match the state");
    if (!detail::all_finite(phi) || !detail::all_finite(y)) return false;
    if (forgetting_ < 1.0) {
      const double s = std::sqrt(forgetting_);
      L_ *= s;
      b_ *= forgetting_;
    }
    const double inv_sigma = 1.0 / std::sqrt(sigma2_);
    for (Index k = 0; k < phi.cols(); ++k) {
      work_ = phi.col(k) * inv_sigma;
      rank_one_update(work_);
      b_.noalias() += phi.col(k) * (y(k) / sigma2_);
    }
    ++samples_seen_;
    refresh();
    return true;
  }

  ThetaSnapshot snapshot() const { return {theta_, samples_seen_}; }

 private:
  // L L^T + v v^T, column by column with Givens-like rotations.
  void rank_one_update(Vec& v) {
    const Index p = dim();
    for (Index k = 0; k < p; ++k) {
      if (v(k) == 0.0) continue;
      const double lkk = L_(k, k);
      const double r = std::hypot(lkk, v(k));
      const double c = r / lkk, s = v(k) / lkk;
      L_(k, k) = r;
      if (k + 1 < p) {
        auto col = L_.col(k).tail(p - k - 1);
        auto rest = v.tail(p - k - 1);
        col = (col + s * rest) / c;
        rest = c * rest - s * col;
      }
    }
  }

  void refresh() {
    theta_ = L_.triangularView<Eigen::Lower>().solve(b_);
    L_.triangularView<Eigen::Lower>().transpose().solveInPlace(theta_);
  }

  Mat L_;
  Vec b_;
  Vec theta_;
  Vec work_;
  std::size_t samples_seen_ = 0;
  double sigma2_ = 1.0;
  double forgetting_ = 1.0;
};

}  // namespace dfinv
