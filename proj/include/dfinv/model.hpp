#pragma once

// The five model classes written as one linear-in-parameters model
//
//   y(t) = Phi(z_t)^T theta + offset(z_t) + e(t),   e ~ N(0, sigma^2 I)
//
// theta = [pi (p); w_1 (2d); ...; w_n (2d)]: the RBD block (classes with a
// physical part) followed by one random-feature block per output. Every
// output shares the feature map phi(.), so output k sees phi only in block w_k.
//
//   P    Phi = psi                      W = ridge I (gamma^-2 I if gamma^2 set)
//   NP   Phi = I (x) phi                W = rho^-2 I
//   SP   Phi = [psi; I (x) phi]         W = diag(ridge I, rho^-2 I), offset psi^T pi_hat
//   SP2  as SP, pi_hat from a preliminary least-squares fit
//   SPK  Phi = [psi; I (x) phi]         W = diag(gamma^-2 I, rho^-2 I)
//
// For SP/SP2 the RBD block estimates the deviation from pi_hat, so the mean
// can keep adapting online; with `adapt_mean = false` the block is dropped.

#include "dfinv/derivative_free.hpp"
#include "dfinv/input_locations.hpp"
#include "dfinv/rff.hpp"
#include "dfinv/rigid_body.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dfinv {

enum class ModelClass { P, NP, SP, SP2, SPK };
enum class FeatureMode { Standard, DF, DFW, DFR, DFSR };

inline std::string to_string(ModelClass c) {
  switch (c) {
    case ModelClass::P: return "P";
    case ModelClass::NP: return "NP";
    case ModelClass::SP: return "SP";
    case ModelClass::SP2: return "SP2";
    case ModelClass::SPK: return "SPK";
  }
  return "?";
}

inline ModelClass model_class_from_string(const std::string& s) {
  if (s == "P") return ModelClass::P;
  if (s == "NP") return ModelClass::NP;
  if (s == "SP") return ModelClass::SP;
  if (s == "SP2") return ModelClass::SP2;
  if (s == "SPK") return ModelClass::SPK;
  throw ConfigError("unknown model class '" + s + "'");
}

inline std::string to_string(FeatureMode m) {
  switch (m) {
    case FeatureMode::Standard: return "STANDARD";
    case FeatureMode::DF: return "DF";
    case FeatureMode::DFW: return "DFW";
    case FeatureMode::DFR: return "DFR";
    case FeatureMode::DFSR: return "DFSR";
  }
  return "?";
}

inline FeatureMode feature_mode_from_string(const std::string& s) {
  if (s == "STANDARD") return FeatureMode::Standard;
  if (s == "DF") return FeatureMode::DF;
  if (s == "DFW") return FeatureMode::DFW;
  if (s == "DFR") return FeatureMode::DFR;
  if (s == "DFSR") return FeatureMode::DFSR;
  throw ConfigError("unknown feature mode '" + s + "'");
}

inline DfVariant to_variant(FeatureMode m) {
  switch (m) {
    case FeatureMode::DF: return DfVariant::DF;
    case FeatureMode::DFW: return DfVariant::DFW;
    case FeatureMode::DFR: return DfVariant::DFR;
    case FeatureMode::DFSR: return DfVariant::DFSR;
    case FeatureMode::Standard: break;
  }
  throw ConfigError("STANDARD features have no feature matrix");
}

inline bool has_rbd_part(ModelClass c) { return c != ModelClass::NP; }
inline bool has_kernel_part(ModelClass c) { return c != ModelClass::P; }
inline bool has_mean_offset(ModelClass c) { return c == ModelClass::SP || c == ModelClass::SP2; }

struct HyperVector {
  double sigma2 = 1.0;
  std::optional<double> rho2;
  std::optional<double> tau;  // squared kernel width
  std::optional<double> gamma2;
  Vec pi;     // SP: mean parameters (hyperparameter); SP2: fixed preliminary estimate
  Vec delta;  // feature-matrix hyperparameters

  void validate(ModelClass c) const {
    auto pos = [](const std::optional<double>& v) { return v && *v > 0 && std::isfinite(*v); };
    if (!(sigma2 > 0 && std::isfinite(sigma2)))
      throw std::invalid_argument("HyperVector: sigma2 must be > 0");
    if (has_kernel_part(c) && !(pos(rho2) && pos(tau)))
      throw std::invalid_argument("HyperVector: rho2 and tau must be > 0 for " + to_string(c));
    if (c == ModelClass::SPK && !pos(gamma2))
      throw std::invalid_argument("HyperVector: gamma2 must be > 0 for SPK");
    if (gamma2 && !pos(gamma2)) throw std::invalid_argument("HyperVector: gamma2 must be > 0");
    if (has_mean_offset(c) && pi.size() == 0)
      throw std::invalid_argument("HyperVector: " + to_string(c) + " needs a mean vector pi");
  }
};

struct ModelBases {
  std::optional<RffBasis> rff;
  std::optional<FeatureMatrixR> features;
  std::optional<RbdGeometry> geometry;
  Normalizer normalizer;  // applied to the kernel inputs (x or xi)
};

/// Prior precision diagonal; see the table at the top of this file.
inline Vec prior_precision(ModelClass c, const HyperVector& eta, Index rbd_dim, Index rff_dim,
                           double ridge) {
  eta.validate(c);
  detail::require(ridge > 0, "prior_precision: ridge must be > 0");
  Vec w(rbd_dim + rff_dim);
  if (rbd_dim > 0) {
    const bool bayes_rbd = c == ModelClass::SPK || (c == ModelClass::P && eta.gamma2.has_value());
    w.head(rbd_dim).setConstant(bayes_rbd ? 1.0 / *eta.gamma2 : ridge);
  }
  if (rff_dim > 0) w.tail(rff_dim).setConstant(1.0 / *eta.rho2);
  return w;
}

/// Regressor blocks for a batch of samples. Phi is shared by every output.
struct DesignBlocks {
  Mat phi;               // N x 2d (empty without a kernel part)
  std::vector<Mat> psi;  // per output, N x p (empty without an RBD block in theta)
  Mat offset;            // N x n_out
};

/// Scale-aware ridge: 1e-8 * mean diag(Psi^T Psi) / sigma^2.
inline double rbd_ridge(const std::vector<Mat>& psi, double sigma2) {
  double diag_sum = 0.0;
  Index p = 0, rows = 0;
  for (const Mat& m : psi) {
    diag_sum += m.colwise().squaredNorm().sum();
    p = m.cols();
    rows += m.rows();
  }
  if (p == 0 || rows == 0 || !(diag_sum > 0)) return 1e-8;
  return 1e-8 * diag_sum / static_cast<double>(p) / sigma2;
}

class UnifiedLinearModel {
 public:
  UnifiedLinearModel(ModelClass cls, FeatureMode mode, std::size_t n_dof, std::size_t n_out,
                     ModelBases bases, HyperVector eta, double ridge, bool adapt_mean = true)
      : cls_(cls),
        mode_(mode),
        n_dof_(static_cast<Index>(n_dof)),
        n_out_(static_cast<Index>(n_out)),
        bases_(std::move(bases)),
        eta_(std::move(eta)),
        ridge_(ridge),
        adapt_mean_(adapt_mean) {
    eta_.validate(cls_);
    if (mode_ != FeatureMode::Standard) {
      if (!bases_.features) throw ConfigError(to_string(mode_) + " features need a feature matrix");
      if (bases_.features->variant() != to_variant(mode_))
        throw ConfigError("feature matrix variant does not match the feature mode");
      if (has_rbd_part(cls_) && bases_.features->features_per_joint() != 3)
        throw ConfigError(to_string(cls_) + " with derivative-free features needs k = 3");
    }
    if (has_kernel_part(cls_)) {
      if (!bases_.rff) throw ConfigError(to_string(cls_) + " needs a random-feature basis");
      bases_.rff = bases_.rff->with_width(std::sqrt(*eta_.tau));
      if (bases_.rff->input_dim() != kernel_input_dim())
        throw ConfigError("random-feature basis input dimension does not match the features");
      if (bases_.normalizer.dim() == 0) bases_.normalizer = Normalizer::identity(kernel_input_dim());
      if (bases_.normalizer.dim() != kernel_input_dim())
        throw ConfigError("normalizer dimension does not match the kernel inputs");
    }
    if (has_rbd_part(cls_)) {
      if (!bases_.geometry) throw ConfigError(to_string(cls_) + " needs the RBD geometry");
      if (bases_.geometry->n_dof != n_dof) throw ConfigError("RBD geometry has the wrong n_dof");
      if (has_mean_offset(cls_) &&
          eta_.pi.size() != static_cast<Index>(bases_.geometry->parameter_count()))
        throw ConfigError("mean vector pi has the wrong size");
    }
    prior_ = prior_precision(cls_, eta_, rbd_dim(), rff_dim(), ridge_);
  }

  ModelClass model_class() const { return cls_; }
  FeatureMode feature_mode() const { return mode_; }
  const HyperVector& hypers() const { return eta_; }
  const ModelBases& bases() const { return bases_; }
  double ridge() const { return ridge_; }
  bool adapt_mean() const { return adapt_mean_; }
  Index n_dof() const { return n_dof_; }
  Index n_out() const { return n_out_; }
  double sigma2() const { return eta_.sigma2; }
  const Vec& prior_diag() const { return prior_; }

  /// Raw sample size: x (3n) for STANDARD, stacked windows n (M+1) otherwise.
  Index raw_dim() const {
    return mode_ == FeatureMode::Standard ? 3 * n_dof_ : n_dof_ * bases_.features->window();
  }

  Index kernel_input_dim() const {
    return mode_ == FeatureMode::Standard ? 3 * n_dof_
                                          : n_dof_ * bases_.features->features_per_joint();
  }

  Index rbd_dim() const {
    if (!has_rbd_part(cls_) || (has_mean_offset(cls_) && !adapt_mean_)) return 0;
    return static_cast<Index>(bases_.geometry->parameter_count());
  }

  Index rff_dim() const { return has_kernel_part(cls_) ? bases_.rff->feature_dim() * n_out_ : 0; }

  Index theta_dim() const { return rbd_dim() + rff_dim(); }

  /// Same model with a different in-plane gravity for the RBD regressor.
  UnifiedLinearModel with_geometry(const RbdGeometry& g) const {
    UnifiedLinearModel m = *this;
    if (has_rbd_part(cls_)) m.bases_.geometry = g;
    return m;
  }

  /// Un-normalized features: x itself, or xi = R q(t-) for derivative-free modes.
  Mat feature_rows(const Eigen::Ref<const Mat>& Z) const {
    check_raw(Z.cols());
    if (mode_ == FeatureMode::Standard) return Z;
    return apply_feature_matrix_rows(*bases_.features, Z);
  }

  /// x-layout input for psi; derivative-free features (k = 3) are placed
  /// positionally as position, velocity and acceleration.
  Mat rbd_input_rows(const Mat& features) const {
    if (mode_ == FeatureMode::Standard) return features;
    const Index k = 3, n = n_dof_;
    Mat x(features.rows(), 3 * n);
    for (Index j = 0; j < n; ++j)
      for (Index f = 0; f < k; ++f) x.col(f * n + j) = features.col(j * k + f);
    return x;
  }

  DesignBlocks design(const Eigen::Ref<const Mat>& Z) const {
    const Mat feats = feature_rows(Z);
    DesignBlocks d;
    const Index N = Z.rows();
    d.offset = Mat::Zero(N, n_out_);
    if (has_kernel_part(cls_)) d.phi = rff_feature_rows(bases_.normalizer.apply_rows(feats), *bases_.rff);
    if (has_rbd_part(cls_)) {
      const Mat X = rbd_input_rows(feats);
      const Index p = static_cast<Index>(bases_.geometry->parameter_count());
      std::vector<Mat> psi(static_cast<std::size_t>(n_out_), Mat(N, p));
      for (Index t = 0; t < N; ++t) {
        const Mat ps = rbd_regressor(X.row(t).transpose(), *bases_.geometry);
        for (Index k = 0; k < n_out_; ++k) psi[static_cast<std::size_t>(k)].row(t) = ps.col(k).transpose();
      }
      if (has_mean_offset(cls_))
        for (Index k = 0; k < n_out_; ++k) d.offset.col(k) = psi[static_cast<std::size_t>(k)] * eta_.pi;
      if (rbd_dim() > 0) d.psi = std::move(psi);
    }
    return d;
  }

  /// p_bar x n_out regressor of one raw sample.
  Mat regressor(const Eigen::Ref<const Vec>& z) const {
    const DesignBlocks d = design(z.transpose());
    return regressor_from(d, 0);
  }

  Mat regressor_from(const DesignBlocks& d, Index t) const {
    Mat phi_total = Mat::Zero(theta_dim(), n_out_);
    const Index p = rbd_dim();
    for (Index k = 0; k < n_out_; ++k) {
      if (p > 0) phi_total.col(k).head(p) = d.psi[static_cast<std::size_t>(k)].row(t).transpose();
      if (d.phi.size() > 0) {
        const Index f = d.phi.cols();
        phi_total.col(k).segment(p + k * f, f) = d.phi.row(t).transpose();
      }
    }
    return phi_total;
  }

  Vec offset(const Eigen::Ref<const Vec>& z) const { return design(z.transpose()).offset.row(0).transpose(); }

  Vec predict(const Eigen::Ref<const Vec>& theta, const Eigen::Ref<const Vec>& z) const {
    check_theta(theta);
    const DesignBlocks d = design(z.transpose());
    return predict_from(d, 0, theta);
  }

  Vec predict_from(const DesignBlocks& d, Index t, const Eigen::Ref<const Vec>& theta) const {
    Vec y = d.offset.row(t).transpose();
    const Index p = rbd_dim();
    for (Index k = 0; k < n_out_; ++k) {
      if (p > 0) y(k) += d.psi[static_cast<std::size_t>(k)].row(t).dot(theta.head(p));
      if (d.phi.size() > 0) {
        const Index f = d.phi.cols();
        y(k) += d.phi.row(t).dot(theta.segment(p + k * f, f));
      }
    }
    return y;
  }

  /// Observations stacked sample-major: row t * n_out + k.
  Mat stacked_design(const DesignBlocks& d) const {
    const Index N = d.offset.rows();
    Mat F(N * n_out_, theta_dim());
    for (Index t = 0; t < N; ++t) F.middleRows(t * n_out_, n_out_) = regressor_from(d, t).transpose();
    return F;
  }

  /// Targets minus offsets, stacked like `stacked_design`.
  Vec stacked_targets(const DesignBlocks& d, const Eigen::Ref<const Mat>& Y) const {
    detail::require(Y.rows() == d.offset.rows() && Y.cols() == n_out_, "targets have the wrong shape");
    const Mat r = (Y - d.offset).transpose();
    return Eigen::Map<const Vec>(r.data(), r.size());
  }

 private:
  void check_raw(Index cols) const {
    if (cols != raw_dim())
      throw std::invalid_argument("model sample has " + std::to_string(cols) + " entries, expected " +
                                  std::to_string(raw_dim()));
  }
  void check_theta(const Eigen::Ref<const Vec>& theta) const {
    if (theta.size() != theta_dim())
      throw std::invalid_argument("theta has " + std::to_string(theta.size()) + " entries, expected " +
                                  std::to_string(theta_dim()));
  }

  ModelClass cls_;
  FeatureMode mode_;
  Index n_dof_, n_out_;
  ModelBases bases_;
  HyperVector eta_;
  double ridge_;
  bool adapt_mean_;
  Vec prior_;
};

/// p_bar x n_out regressor of `sample` under `model`.
inline Mat assemble_regressor(const UnifiedLinearModel& model, const Eigen::Ref<const Vec>& sample) {
  return model.regressor(sample);
}

inline Vec predict(const UnifiedLinearModel& model, const Eigen::Ref<const Vec>& theta,
                   const Eigen::Ref<const Vec>& sample) {
  return model.predict(theta, sample);
}

}  // namespace dfinv
