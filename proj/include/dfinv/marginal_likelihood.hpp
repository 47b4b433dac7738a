#pragma once

// -2 log p(y | eta) for y = F theta + e, theta ~ N(0, W^-1), e ~ N(0, sigma^2 I),
// evaluated without forming the (N n_out)^2 covariance:
//
//   log det(F W^-1 F^T + s I) = Nn log s + log det A - log det W
//   r^T (F W^-1 F^T + s I)^-1 r = r^T r / s - u^T A^-1 u
//
// with A = W + F^T F / s and u = F^T r / s.

#include "dfinv/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace dfinv {

inline constexpr double kInfNll = std::numeric_limits<double>::infinity();

/// Generic dual form. F has one row per scalar observation; r is the target
/// minus any known mean. Returns +inf when A is not numerically PD.
inline double nll_dual(const Eigen::Ref<const Mat>& F, const Eigen::Ref<const Vec>& r,
                       const Eigen::Ref<const Vec>& prior_diag, double sigma2) {
  detail::require(F.rows() == r.size() && F.cols() == prior_diag.size(), "nll_dual: shape mismatch");
  if (!(sigma2 > 0) || !((prior_diag.array() > 0).all())) return kInfNll;
  const double n_obs = static_cast<double>(r.size());
  Mat A = F.transpose() * F / sigma2;
  A.diagonal() += prior_diag;
  Eigen::LLT<Mat> llt(A);
  if (llt.info() != Eigen::Success) return kInfNll;
  const Vec u = F.transpose() * r / sigma2;
  const double logdet_A = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double logdet_W = prior_diag.array().log().sum();
  const double quad = r.squaredNorm() / sigma2 - u.dot(llt.solve(u));
  const double v = n_obs * std::log(2.0 * std::numbers::pi) + n_obs * std::log(sigma2) + logdet_A -
                   logdet_W + quad;
  return std::isfinite(v) ? v : kInfNll;
}

struct NllResult {
  double value = kInfNll;
  Vec pi_hat;  // profiled mean parameters (profile mode only)
};

namespace detail {

inline bool chol_logdet(const Mat& A, Eigen::LLT<Mat>& llt, double& logdet) {
  llt.compute(A);
  if (llt.info() != Eigen::Success) return false;
  const Mat& L = llt.matrixLLT();
  logdet = 2.0 * L.diagonal().array().log().sum();
  return std::isfinite(logdet);
}

}  // namespace detail

/// Evaluator exploiting the shared feature map: theta = [pi; w_1..w_n] with
/// the same Phi for every output. `residual` is N x n_out (targets minus the
/// known offset). With `profile_pi` the RBD block is treated as an unknown
/// mean (closed-form weighted least squares, stabilized by `pi_precision`)
/// rather than integrated out.
inline NllResult structured_nll(const DesignBlocks& d, const Eigen::Ref<const Mat>& residual, double sigma2,
                                std::optional<double> rho2, double pi_precision, bool profile_pi) {
  NllResult out;
  const Index N = residual.rows(), n_out = residual.cols();
  if (!(sigma2 > 0)) return out;
  const bool has_phi = d.phi.size() > 0;
  const bool has_psi = !d.psi.empty();
  if (has_phi && !(rho2 && *rho2 > 0)) return out;
  const double n_obs = static_cast<double>(N * n_out);
  double value = n_obs * std::log(2.0 * std::numbers::pi) + n_obs * std::log(sigma2) +
                 residual.squaredNorm() / sigma2;

  Eigen::LLT<Mat> llt_B;
  Mat U;  // 2d x n_out, u_k = Phi^T r_k / s
  Mat BinvU;
  if (has_phi) {
    const Index f = d.phi.cols();
    Mat B(f, f);
    B.setZero();
    B.selfadjointView<Eigen::Lower>().rankUpdate(d.phi.transpose(), 1.0 / sigma2);
    B.triangularView<Eigen::StrictlyUpper>() = B.transpose();
    B.diagonal().array() += 1.0 / *rho2;
    double logdet_B = 0.0;
    if (!detail::chol_logdet(B, llt_B, logdet_B)) return out;
    U = d.phi.transpose() * residual / sigma2;
    BinvU = llt_B.solve(U);
    value += static_cast<double>(n_out) * (logdet_B + static_cast<double>(f) * std::log(*rho2));
    value -= (U.array() * BinvU.array()).sum();
  }
  if (has_psi) {
    const Index p = d.psi.front().cols();
    Mat S = Mat::Identity(p, p) * pi_precision;
    Vec g = Vec::Zero(p);
    for (Index k = 0; k < n_out; ++k) {
      const Mat& Pk = d.psi[static_cast<std::size_t>(k)];
      S.noalias() += Pk.transpose() * Pk / sigma2;
      g.noalias() += Pk.transpose() * residual.col(k) / sigma2;
      if (has_phi) {
        const Mat Ck = Pk.transpose() * d.phi / sigma2;  // p x 2d
        S.noalias() -= Ck * llt_B.solve(Ck.transpose());
        g.noalias() -= Ck * BinvU.col(k);
      }
    }
    S = 0.5 * (S + S.transpose());
    Eigen::LLT<Mat> llt_S;
    double logdet_S = 0.0;
    if (!detail::chol_logdet(S, llt_S, logdet_S)) return out;
    const Vec Sg = llt_S.solve(g);
    value -= g.dot(Sg);
    if (profile_pi) {
      out.pi_hat = Sg;
    } else {
      value += logdet_S - static_cast<double>(p) * std::log(pi_precision);
    }
  }
  if (std::isfinite(value)) out.value = value;
  return out;
}

}  // namespace dfinv
