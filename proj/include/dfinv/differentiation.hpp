#pragma once

// Causal filtered backward differences:
//
//   qd  ~ (1 - z^-1) / Ts            * (1 - b1) / (1 - b1 z^-1) q
//   qdd ~ (1 - 2 z^-1 + z^-2) / Ts^2 * (1 - b2) / (1 - b2 z^-1) q
//
// The first-order low-pass sections have unit DC gain, so a ramp of slope v
// yields qd -> v for every pole b1.

#include "dfinv/core.hpp"

namespace dfinv {

struct DifferentiatorConfig {
  double beta1 = 0.5;
  double beta2 = 0.5;
  double sample_period = 0.05;

  void validate() const {
    detail::require(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1,
                    "DifferentiatorConfig: poles must lie in (0, 1)");
    detail::require(sample_period > 0, "DifferentiatorConfig: sample_period must be > 0");
  }
};

struct Derivatives {
  Mat qd;   // N x n
  Mat qdd;  // N x n
  // Rows [0, transient_samples) are start-up values (missing history).
  std::size_t transient_samples = 2;
};

namespace detail {

// Pole 0 is allowed here so the plain backward difference is reachable.
inline void check_pole(double b) {
  require(b >= 0 && b < 1, "differentiator pole must lie in [0, 1)");
}

}  // namespace detail

/// Exact IIR recursions with zero filter state; the backward differences are
/// zero until enough history exists (sample 0 for qd, samples 0-1 for qdd).
inline Derivatives numeric_differentiate(const Eigen::Ref<const Mat>& q, double beta1, double beta2,
                                         double sample_period) {
  detail::check_pole(beta1);
  detail::check_pole(beta2);
  detail::require(sample_period > 0, "numeric_differentiate: sample_period must be > 0");
  detail::require(q.rows() >= 3, "numeric_differentiate: series needs at least 3 samples");
  const Index N = q.rows(), n = q.cols();
  const double ts = sample_period, ts2 = sample_period * sample_period;
  Derivatives out;
  out.qd = Mat::Zero(N, n);
  out.qdd = Mat::Zero(N, n);
  for (Index j = 0; j < n; ++j) {
    double v = 0.0, a = 0.0;
    for (Index t = 0; t < N; ++t) {
      const double d1 = t >= 1 ? (q(t, j) - q(t - 1, j)) / ts : 0.0;
      const double d2 = t >= 2 ? (q(t, j) - 2.0 * q(t - 1, j) + q(t - 2, j)) / ts2 : 0.0;
      v = beta1 * v + (1.0 - beta1) * d1;
      a = beta2 * a + (1.0 - beta2) * d2;
      out.qd(t, j) = v;
      out.qdd(t, j) = a;
    }
  }
  return out;
}

inline Derivatives numeric_differentiate(const Eigen::Ref<const Mat>& q,
                                         const DifferentiatorConfig& cfg) {
  cfg.validate();
  return numeric_differentiate(q, cfg.beta1, cfg.beta2, cfg.sample_period);
}

}  // namespace dfinv
