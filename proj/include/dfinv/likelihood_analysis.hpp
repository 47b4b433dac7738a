#pragma once

// Small-N likelihood algebra relating the SP and SPK models. With
// R = K(x, x) + sigma^2 I, G = Psi^T R^-1 Psi:
//
//   pi_WLS      = G^-1 Psi^T R^-1 y
//   pi(gamma^2) = (G + gamma^-2 I)^-1 Psi^T R^-1 y
//   L_SP_hat    = log det(2 pi R) + |y - Psi pi_WLS|^2_{R^-1}
//   L_SPK       = log det(2 pi (gamma^2 Psi Psi^T + R)) + y^T (gamma^2 Psi Psi^T + R)^-1 y
//
// and L_SPK - L_SP_hat - p log gamma^2 -> log det G as gamma^2 grows.

#include "dfinv/rff.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

namespace dfinv {

struct PropInstance {
  Mat Psi;  // N x p
  Mat R;    // N x N, symmetric PD
  Vec y;    // N
};

/// Exact Gaussian Gram matrix of the rows of X.
inline Mat gaussian_gram(const Eigen::Ref<const Mat>& X, double width) {
  const Index N = X.rows();
  Mat K(N, N);
  for (Index i = 0; i < N; ++i)
    for (Index j = 0; j <= i; ++j) K(i, j) = K(j, i) = gaussian_kernel(X.row(i).transpose(), X.row(j).transpose(), width);
  return K;
}

/// Random instance: inputs and Psi iid N(0, 1), R = rho^2 K + sigma^2 I with
/// a unit-width Gaussian Gram, y iid N(0, 1).
inline PropInstance random_prop_instance(Index N, Index p, std::uint64_t seed, double rho2 = 1.0,
                                         double sigma2 = 0.1, Index input_dim = 2) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](Index r, Index c) {
    Mat m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = normal(rng);
    return m;
  };
  PropInstance inst;
  const Mat X = fill(N, input_dim);
  inst.R = rho2 * gaussian_gram(X, 1.0);
  inst.R.diagonal().array() += sigma2;
  inst.Psi = fill(N, p);
  inst.y = fill(N, 1).col(0);
  return inst;
}

namespace detail {

struct Whitened {
  Eigen::LLT<Mat> chol_R;
  Mat Psi;  // L^-1 Psi
  Vec y;    // L^-1 y
  double logdet_2pi_R = 0.0;
};

inline Whitened whiten(const Eigen::Ref<const Mat>& Psi, const Eigen::Ref<const Mat>& R,
                       const Eigen::Ref<const Vec>& y) {
  require(R.rows() == R.cols() && R.rows() == y.size() && Psi.rows() == y.size(),
          "likelihood: inconsistent shapes");
  Whitened w;
  w.chol_R.compute(R);
  if (w.chol_R.info() != Eigen::Success) throw NumericalError("likelihood: R is not positive definite");
  const auto L = w.chol_R.matrixL();
  w.Psi = L.solve(Psi);
  w.y = L.solve(y);
  const double n = static_cast<double>(y.size());
  w.logdet_2pi_R = n * std::log(2.0 * std::numbers::pi) +
                   2.0 * w.chol_R.matrixLLT().diagonal().array().log().sum();
  return w;
}

/// Cholesky of the p x p normal matrix; rank deficiency names the pivot.
inline Eigen::LLT<Mat> normal_factor(const Mat& G) {
  if (G.size() > 0) {
    Eigen::LDLT<Mat> ldlt(G);
    const Vec D = ldlt.vectorD();
    const double scale = std::max(G.diagonal().cwiseAbs().maxCoeff(), 1e-300);
    for (Index i = 0; i < D.size(); ++i)
      if (!(D(i) > 1e-12 * scale)) {
        std::ostringstream os;
        os << "weighted least squares: Psi^T R^-1 Psi is singular (pivot " << i << " = " << D(i) << ")";
        throw NumericalError(os.str());
      }
  }
  Eigen::LLT<Mat> llt(G);
  if (llt.info() != Eigen::Success) throw NumericalError("weighted least squares: normal matrix not PD");
  return llt;
}

}  // namespace detail

inline Vec wls_estimate(const Eigen::Ref<const Mat>& Psi, const Eigen::Ref<const Mat>& R,
                        const Eigen::Ref<const Vec>& y) {
  const detail::Whitened w = detail::whiten(Psi, R, y);
  const Mat G = w.Psi.transpose() * w.Psi;
  return detail::normal_factor(G).solve(w.Psi.transpose() * w.y);
}

inline Vec bayes_pi_estimate(const Eigen::Ref<const Mat>& Psi, const Eigen::Ref<const Mat>& R,
                             const Eigen::Ref<const Vec>& y, double gamma2) {
  detail::require(gamma2 > 0, "bayes_pi_estimate: gamma2 must be > 0");
  const detail::Whitened w = detail::whiten(Psi, R, y);
  Mat G = w.Psi.transpose() * w.Psi;
  G.diagonal().array() += 1.0 / gamma2;
  return G.ldlt().solve(w.Psi.transpose() * w.y);
}

/// log det(2 pi R) + |y - Psi pi|^2_{R^-1} at a given pi.
inline double likelihood_sp(const Eigen::Ref<const Mat>& Psi, const Eigen::Ref<const Mat>& R,
                            const Eigen::Ref<const Vec>& y, const Eigen::Ref<const Vec>& pi) {
  const detail::Whitened w = detail::whiten(Psi, R, y);
  return w.logdet_2pi_R + (w.y - w.Psi * pi).squaredNorm();
}

inline double profile_likelihood_sp(const Eigen::Ref<const Mat>& Psi, const Eigen::Ref<const Mat>& R,
                                    const Eigen::Ref<const Vec>& y) {
  const detail::Whitened w = detail::whiten(Psi, R, y);
  Vec r = w.y;
  if (Psi.cols() > 0) {
    const Mat G = w.Psi.transpose() * w.Psi;
    r -= w.Psi * detail::normal_factor(G).solve(w.Psi.transpose() * w.y);
  }
  return w.logdet_2pi_R + r.squaredNorm();
}

struct SpkLikelihood {
  double direct = 0.0;    // N x N covariance
  double expanded = 0.0;  // inversion lemma + Sylvester identity
  double discrepancy() const { return std::abs(direct - expanded); }
};

inline double likelihood_spk_direct(const Eigen::Ref<const Mat>& Psi, const Eigen::Ref<const Mat>& R,
                                    const Eigen::Ref<const Vec>& y, double gamma2) {
  Mat C = R;
  C.noalias() += gamma2 * Psi * Psi.transpose();
  Eigen::LLT<Mat> llt(C);
  if (llt.info() != Eigen::Success) throw NumericalError("likelihood_spk: covariance is not positive definite");
  const double n = static_cast<double>(y.size());
  return n * std::log(2.0 * std::numbers::pi) + 2.0 * llt.matrixLLT().diagonal().array().log().sum() +
         y.dot(llt.solve(y));
}

inline double likelihood_spk_expanded(const Eigen::Ref<const Mat>& Psi, const Eigen::Ref<const Mat>& R,
                                      const Eigen::Ref<const Vec>& y, double gamma2) {
  const detail::Whitened w = detail::whiten(Psi, R, y);
  const Index p = Psi.cols();
  Mat G = w.Psi.transpose() * w.Psi;
  G.diagonal().array() += 1.0 / gamma2;
  Eigen::LLT<Mat> llt(G);
  if (llt.info() != Eigen::Success) throw NumericalError("likelihood_spk: normal matrix is not positive definite");
  const Vec h = w.Psi.transpose() * w.y;
  const double logdet_G = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return w.logdet_2pi_R + static_cast<double>(p) * std::log(gamma2) + logdet_G + w.y.squaredNorm() -
         h.dot(llt.solve(h));
}

inline SpkLikelihood likelihood_spk(const Eigen::Ref<const Mat>& Psi, const Eigen::Ref<const Mat>& R,
                                    const Eigen::Ref<const Vec>& y, double gamma2) {
  detail::require(gamma2 > 0, "likelihood_spk: gamma2 must be > 0");
  return {likelihood_spk_direct(Psi, R, y, gamma2), likelihood_spk_expanded(Psi, R, y, gamma2)};
}

/// log det(Psi^T R^-1 Psi).
inline double limit_term(const Eigen::Ref<const Mat>& Psi, const Eigen::Ref<const Mat>& R) {
  const detail::Whitened w = detail::whiten(Psi, R, Vec::Zero(Psi.rows()));
  const Mat G = w.Psi.transpose() * w.Psi;
  const Eigen::LLT<Mat> llt = detail::normal_factor(G);
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

struct PropRow {
  double gamma2 = 0.0;
  double l_spk = 0.0;
  double l_sp = 0.0;
  double delta = 0.0;     // L_SPK - L_SP_hat - p log gamma^2
  double residual = 0.0;  // delta - log det(Psi^T R^-1 Psi)
};

inline std::vector<PropRow> verify_proposition(const PropInstance& inst,
                                               const std::vector<double>& schedule = {1e2, 1e4, 1e6, 1e8}) {
  const double l_sp = profile_likelihood_sp(inst.Psi, inst.R, inst.y);
  const double limit = limit_term(inst.Psi, inst.R);
  const double p = static_cast<double>(inst.Psi.cols());
  std::vector<PropRow> rows;
  for (double g2 : schedule) {
    PropRow r;
    r.gamma2 = g2;
    r.l_spk = likelihood_spk_expanded(inst.Psi, inst.R, inst.y, g2);
    r.l_sp = l_sp;
    r.delta = r.l_spk - l_sp - p * std::log(g2);
    r.residual = r.delta - limit;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace dfinv
