#pragma once

// Random Fourier features for the Gaussian kernel
//
//   K(x, y) = exp(-|x - y|^2 / (2 l^2)),
//   phi(x)  = d^{-1/2} [cos(W x / l); sin(W x / l)],  rows of W ~ N(0, I_m).
//
// The frequencies are drawn once and frozen; the width l only rescales them,
// so objectives over l see the same random draw everywhere. Reports quote
// tau = l^2.

#include "dfinv/core.hpp"

#include <cmath>

namespace dfinv {

struct RffBasis {
  Mat omega;           // d x m
  double width = 1.0;  // l

  Index pairs() const { return omega.rows(); }
  Index input_dim() const { return omega.cols(); }
  Index feature_dim() const { return 2 * omega.rows(); }
  double tau() const { return width * width; }

  RffBasis with_width(double l) const {
    detail::require(l > 0, "RffBasis: width must be > 0");
    return {omega, l};
  }
};

/// d frequency rows drawn iid from N(0, I_m), row-major fill order.
inline RffBasis sample_rff(Index d, Index m, std::uint64_t seed, double width = 1.0) {
  detail::require(d >= 1 && m >= 1, "sample_rff: d and m must be >= 1");
  detail::require(width > 0, "sample_rff: width must be > 0");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  RffBasis b;
  b.omega.resize(d, m);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < m; ++j) b.omega(i, j) = normal(rng);
  b.width = width;
  return b;
}

inline Vec rff_features(const Eigen::Ref<const Vec>& x, const RffBasis& basis) {
  if (x.size() != basis.input_dim())
    throw std::invalid_argument("rff_features: input dimension does not match the basis");
  const Index d = basis.pairs();
  const Vec z = basis.omega * x / basis.width;
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  Vec phi(2 * d);
  phi.head(d) = s * z.array().cos();
  phi.tail(d) = s * z.array().sin();
  return phi;
}

/// Row-wise features: X is N x m, result N x 2d.
inline Mat rff_feature_rows(const Eigen::Ref<const Mat>& X, const RffBasis& basis) {
  if (X.cols() != basis.input_dim())
    throw std::invalid_argument("rff_feature_rows: input dimension does not match the basis");
  const Index d = basis.pairs();
  const Mat Z = X * basis.omega.transpose() / basis.width;
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  Mat F(X.rows(), 2 * d);
  F.leftCols(d) = s * Z.array().cos();
  F.rightCols(d) = s * Z.array().sin();
  return F;
}

inline double gaussian_kernel(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& y,
                              double width) {
  return std::exp(-(x - y).squaredNorm() / (2.0 * width * width));
}

}  // namespace dfinv
