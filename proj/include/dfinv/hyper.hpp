#pragma once

// Hyperparameter estimation: marginal likelihood (Nelder-Mead with restarts on
// transformed coordinates), hold-out cross validation on a grid, and the
// preliminary least-squares mean used by SP2.

#include "dfinv/marginal_likelihood.hpp"
#include "dfinv/rls.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dfinv {

/// Everything needed to instantiate a model except its hyperparameters.
struct ModelSpec {
  ModelClass cls = ModelClass::NP;
  FeatureMode mode = FeatureMode::Standard;
  std::size_t n_dof = 2;
  std::size_t n_out = 2;
  std::optional<RffBasis> rff;               // frequencies; the width comes from tau
  std::optional<FeatureMatrixR> features;    // initial feature matrix (derivative-free modes)
  std::optional<RbdGeometry> geometry;
  bool adapt_mean = true;
};

/// Kernel inputs of raw rows Z before normalization.
inline Mat kernel_feature_rows(const ModelSpec& spec, const std::optional<FeatureMatrixR>& f,
                               const Eigen::Ref<const Mat>& Z) {
  if (spec.mode == FeatureMode::Standard) return Z;
  return apply_feature_matrix_rows(*f, Z);
}

/// Model for `eta` whose normalizer is fitted on `Z_fit`; `ridge` <= 0 means
/// "derive the scale-aware ridge from Z_fit".
inline UnifiedLinearModel build_model(const ModelSpec& spec, const HyperVector& eta,
                                      const Eigen::Ref<const Mat>& Z_fit, double ridge = 0.0,
                                      std::optional<bool> adapt_mean = std::nullopt) {
  ModelBases bases;
  bases.geometry = spec.geometry;
  if (spec.mode != FeatureMode::Standard) {
    if (!spec.features) throw ConfigError("derivative-free model without a feature matrix");
    bases.features = eta.delta.size() > 0 ? spec.features->with_delta(eta.delta) : *spec.features;
  }
  if (has_kernel_part(spec.cls)) {
    if (!spec.rff) throw ConfigError("model without a random-feature basis");
    bases.rff = spec.rff;
    bases.normalizer = Normalizer::fit(kernel_feature_rows(spec, bases.features, Z_fit));
  }
  const bool adapt = adapt_mean.value_or(spec.adapt_mean);
  UnifiedLinearModel m(spec.cls, spec.mode, spec.n_dof, spec.n_out, bases, eta, 1e-8, adapt);
  if (ridge > 0 || m.rbd_dim() == 0) {
    return ridge > 0 ? UnifiedLinearModel(spec.cls, spec.mode, spec.n_dof, spec.n_out, m.bases(), eta,
                                          ridge, adapt)
                     : m;
  }
  DesignBlocks d = m.design(Z_fit);
  return UnifiedLinearModel(spec.cls, spec.mode, spec.n_dof, spec.n_out, m.bases(), eta,
                            rbd_ridge(d.psi, eta.sigma2), adapt);
}

/// Ridge-stabilized least squares pi = (Psi^T Psi + eps I)^-1 Psi^T y with
/// eps = 1e-12 trace(Psi^T Psi) / p; `psi` holds one N x p block per output.
inline Vec preliminary_ls_pi(const std::vector<Mat>& psi, const Eigen::Ref<const Mat>& Y) {
  detail::require(!psi.empty(), "preliminary_ls_pi: no regressor blocks");
  detail::require(static_cast<Index>(psi.size()) == Y.cols(), "preliminary_ls_pi: output count mismatch");
  const Index p = psi.front().cols();
  Mat G = Mat::Zero(p, p);
  Vec h = Vec::Zero(p);
  for (std::size_t k = 0; k < psi.size(); ++k) {
    detail::require(psi[k].rows() == Y.rows(), "preliminary_ls_pi: row count mismatch");
    G.noalias() += psi[k].transpose() * psi[k];
    h.noalias() += psi[k].transpose() * Y.col(static_cast<Index>(k));
  }
  const double eps = std::max(1e-12 * G.trace() / static_cast<double>(p), 1e-300);
  G.diagonal().array() += eps;
  return G.ldlt().solve(h);
}

/// RBD regressor blocks of raw rows Z (the positional substitution applies in
/// derivative-free modes).
inline std::vector<Mat> rbd_blocks(const ModelSpec& spec, const HyperVector& eta,
                                   const Eigen::Ref<const Mat>& Z) {
  ModelSpec p = spec;
  p.cls = ModelClass::P;
  HyperVector e;
  e.sigma2 = 1.0;
  e.delta = eta.delta;
  return build_model(p, e, Z, 1.0).design(Z).psi;
}

// ---------------------------------------------------------------------------
// Marginal likelihood

/// -2 log marginal likelihood of (Z, Y) under spec/eta. SP profiles its mean
/// in closed form (returned through `pi_hat`), as does P without gamma^2.
inline double evaluate_nll(const ModelSpec& spec, const HyperVector& eta, const Eigen::Ref<const Mat>& Z,
                           const Eigen::Ref<const Mat>& Y, Vec* pi_hat = nullptr) {
  try {
    HyperVector e = eta;
    bool profile = false;
    std::optional<bool> adapt;
    if (spec.cls == ModelClass::SP) {
      e.pi = Vec::Zero(static_cast<Index>(spec.geometry->parameter_count()));
      profile = true;
      adapt = true;
    } else if (spec.cls == ModelClass::SP2) {
      adapt = false;
    } else if (spec.cls == ModelClass::P && !e.gamma2) {
      profile = true;
    }
    const UnifiedLinearModel m = build_model(spec, e, Z, 1e-8, adapt);
    const DesignBlocks d = m.design(Z);
    double pi_prec = 1.0;
    if (!d.psi.empty()) pi_prec = profile ? rbd_ridge(d.psi, e.sigma2) : 1.0 / *e.gamma2;
    const Mat residual = Y - d.offset;
    NllResult r = structured_nll(d, residual, e.sigma2, e.rho2, pi_prec, profile);
    if (pi_hat && profile) *pi_hat = r.pi_hat;
    return r.value;
  } catch (const std::invalid_argument&) {
    return kInfNll;
  } catch (const NumericalError&) {
    return kInfNll;
  }
}

/// Map between a HyperVector and the unconstrained coordinates the optimizer
/// sees: logs of the variances, raw DFR rows / DFW weights, log alpha and
/// logit beta for DFSR.
class HyperCodec {
 public:
  HyperCodec(ModelClass cls, FeatureMode mode, const HyperVector& templ)
      : cls_(cls), mode_(mode), templ_(templ) {}

  bool uses_gamma() const { return cls_ == ModelClass::SPK || (cls_ == ModelClass::P && templ_.gamma2); }

  Vec encode(const HyperVector& h) const {
    std::vector<double> c{std::log(h.sigma2)};
    if (has_kernel_part(cls_)) {
      c.push_back(std::log(*h.rho2));
      c.push_back(std::log(*h.tau));
    }
    if (uses_gamma()) c.push_back(std::log(*h.gamma2));
    if (mode_ == FeatureMode::DFSR) {
      c.push_back(std::log(h.delta(0)));
      c.push_back(std::log(h.delta(1)));
      c.push_back(logit(h.delta(2)));
      c.push_back(logit(h.delta(3)));
    } else if (mode_ == FeatureMode::DFW || mode_ == FeatureMode::DFR) {
      for (Index i = 0; i < h.delta.size(); ++i) c.push_back(h.delta(i));
    }
    return Eigen::Map<Vec>(c.data(), static_cast<Index>(c.size()));
  }

  /// nullopt when the point lies outside the admissible box.
  std::optional<HyperVector> decode(const Eigen::Ref<const Vec>& c) const {
    HyperVector h = templ_;
    Index i = 0;
    auto var = [&](double v) -> std::optional<double> {
      if (!(std::abs(v) <= kLogBound)) return std::nullopt;
      return std::exp(v);
    };
    auto s = var(c(i++));
    if (!s) return std::nullopt;
    h.sigma2 = *s;
    if (has_kernel_part(cls_)) {
      h.rho2 = var(c(i++));
      h.tau = var(c(i++));
      if (!h.rho2 || !h.tau) return std::nullopt;
    }
    if (uses_gamma()) {
      h.gamma2 = var(c(i++));
      if (!h.gamma2) return std::nullopt;
    }
    if (mode_ == FeatureMode::DFSR) {
      const double lb = logit(kPoleMin);
      if (!(std::abs(c(i + 2)) <= -lb && std::abs(c(i + 3)) <= -lb)) return std::nullopt;
      auto a1 = var(c(i)), a2 = var(c(i + 1));
      if (!a1 || !a2) return std::nullopt;
      h.delta.resize(4);
      h.delta << *a1, *a2, logistic(c(i + 2)), logistic(c(i + 3));
      i += 4;
    } else if (mode_ == FeatureMode::DFW || mode_ == FeatureMode::DFR) {
      h.delta = c.segment(i, templ_.delta.size());
      if (!h.delta.allFinite()) return std::nullopt;
      i += templ_.delta.size();
    }
    return h;
  }

  static constexpr double kLogBound = 40.0;
  static constexpr double kPoleMin = 1e-4;

 private:
  static double logit(double p) { return std::log(p / (1.0 - p)); }
  static double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

  ModelClass cls_;
  FeatureMode mode_;
  HyperVector templ_;
};

struct TraceEntry {
  std::size_t evaluation = 0;
  int restart = 0;
  double value = kInfNll;
};

struct MlOptions {
  int restarts = 5;
  std::size_t max_evaluations = 4000;  // shared by all restarts
  double initial_step = 0.5;
  double jitter = 0.5;
  double simplex_tol = 1e-4;
};

struct MlProblem {
  ModelSpec spec;
  Mat Z;  // fitting rows (raw samples)
  Mat Y;  // N x n_out targets
  HyperVector init;
  MlOptions options;
};

struct FitResult {
  HyperVector eta;
  double objective = kInfNll;
  double initial_objective = kInfNll;
  std::vector<TraceEntry> trace;
  bool budget_exhausted = false;
  std::string method;
};

namespace detail {

inline double mean_output_variance(const Eigen::Ref<const Mat>& Y) {
  double v = 0.0;
  for (Index k = 0; k < Y.cols(); ++k) {
    const double m = Y.col(k).mean();
    v += (Y.col(k).array() - m).square().mean();
  }
  v /= static_cast<double>(std::max<Index>(Y.cols(), 1));
  return v > 0 ? v : 1.0;
}

}  // namespace detail

/// Starting point: sigma^2 = 0.1 var(y), rho^2 = var(y), tau = input
/// dimension, gamma^2 from the scale of a least-squares pi, delta from the
/// ModelSpec's initial feature matrix.
inline HyperVector default_init(const ModelSpec& spec, const Eigen::Ref<const Mat>& Z,
                                const Eigen::Ref<const Mat>& Y) {
  const double vy = detail::mean_output_variance(Y);
  HyperVector h;
  h.sigma2 = 0.1 * vy;
  if (spec.features) h.delta = spec.features->delta();
  if (has_kernel_part(spec.cls)) {
    h.rho2 = vy;
    const Index m = spec.mode == FeatureMode::Standard
                        ? static_cast<Index>(3 * spec.n_dof)
                        : static_cast<Index>(spec.n_dof) * spec.features->features_per_joint();
    h.tau = static_cast<double>(m);
  }
  if (has_rbd_part(spec.cls)) {
    const Vec pi = preliminary_ls_pi(rbd_blocks(spec, h, Z), Y);
    if (spec.cls == ModelClass::SPK) h.gamma2 = std::max(pi.squaredNorm() / static_cast<double>(pi.size()), 1e-6);
    if (has_mean_offset(spec.cls)) h.pi = pi;
  }
  return h;
}

/// Minimizes evaluate_nll with Nelder-Mead (GSL nmsimplex2) from the initial
/// point and restarts-1 jittered copies of it.
inline FitResult optimize_ml(const MlProblem& problem, std::uint64_t seed) {
  const ModelSpec& spec = problem.spec;
  const MlOptions& opt = problem.options;
  detail::require(opt.restarts >= 1, "optimize_ml: need at least one restart");
  const HyperCodec codec(spec.cls, spec.mode, problem.init);
  const Vec c0 = codec.encode(problem.init);
  const Index dim = c0.size();

  FitResult res;
  res.method = "ML";
  std::size_t evals = 0;
  int current_restart = 0;
  Vec best_c = c0;
  constexpr double kPenalty = 1e30;

  std::function<double(const Vec&)> objective = [&](const Vec& c) {
    double v = kPenalty;
    if (auto h = codec.decode(c)) {
      const double nll = evaluate_nll(spec, *h, problem.Z, problem.Y);
      if (std::isfinite(nll)) v = nll;
    }
    res.trace.push_back({evals++, current_restart, v});
    if (v < res.objective) {
      res.objective = v;
      best_c = c;
    }
    return v;
  };

  res.initial_objective = objective(c0);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t per_restart = std::max<std::size_t>(opt.max_evaluations / static_cast<std::size_t>(opt.restarts), 2 * dim + 2);

  struct Ctx {
    std::function<double(const Vec&)>* f;
    Index n;
  } ctx{&objective, dim};
  gsl_multimin_function fn;
  fn.n = static_cast<std::size_t>(dim);
  fn.params = &ctx;
  fn.f = [](const gsl_vector* x, void* p) -> double {
    auto* c = static_cast<Ctx*>(p);
    Vec v(c->n);
    for (Index i = 0; i < c->n; ++i) v(i) = gsl_vector_get(x, static_cast<std::size_t>(i));
    return (*c->f)(v);
  };

  gsl_error_handler_t* old_handler = gsl_set_error_handler_off();
  for (int r = 0; r < opt.restarts; ++r) {
    current_restart = r;
    Vec start = c0;
    if (r > 0)
      for (Index i = 0; i < dim; ++i) start(i) += opt.jitter * normal(rng);
    gsl_vector* x = gsl_vector_alloc(fn.n);
    gsl_vector* step = gsl_vector_alloc(fn.n);
    for (Index i = 0; i < dim; ++i) {
      gsl_vector_set(x, static_cast<std::size_t>(i), start(i));
      gsl_vector_set(step, static_cast<std::size_t>(i), opt.initial_step);
    }
    gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, fn.n);
    const std::size_t begin = evals;
    bool converged = false;
    if (gsl_multimin_fminimizer_set(s, &fn, x, step) == GSL_SUCCESS) {
      while (evals - begin < per_restart) {
        if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
        if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), opt.simplex_tol) == GSL_SUCCESS) {
          converged = true;
          break;
        }
      }
    }
    if (!converged && evals - begin >= per_restart) res.budget_exhausted = true;
    gsl_multimin_fminimizer_free(s);
    gsl_vector_free(step);
    gsl_vector_free(x);
  }
  gsl_set_error_handler(old_handler);

  auto best = codec.decode(best_c);
  if (!best || !std::isfinite(res.objective))
    throw NumericalError("optimize_ml: no finite marginal-likelihood value found");
  res.eta = *best;
  if (spec.cls == ModelClass::SP) {
    Vec pi;
    evaluate_nll(spec, res.eta, problem.Z, problem.Y, &pi);
    res.eta.pi = pi;
  }
  if (spec.cls == ModelClass::SP2) res.eta.pi = problem.init.pi;
  return res;
}

// ---------------------------------------------------------------------------
// Cross validation

struct CvGrid {
  std::vector<double> sigma2;
  std::vector<double> rho2;  // ignored for P
  std::vector<double> tau;   // ignored for P
  double train_fraction = 0.7;

  void validate(ModelClass cls) const {
    detail::require(!sigma2.empty(), "CvGrid: empty sigma2 grid");
    if (has_kernel_part(cls)) detail::require(!rho2.empty() && !tau.empty(), "CvGrid: empty rho2/tau grid");
    detail::require(train_fraction > 0 && train_fraction < 1, "CvGrid: train_fraction must be in (0, 1)");
  }
};

struct CvPoint {
  HyperVector eta;
  double mse = kInfNll;
};

/// Validation MSE of one hyper point: batch fit on the train rows, error on
/// the validation rows. +inf when the fit fails.
inline double cv_score(const ModelSpec& spec, const HyperVector& eta, const Eigen::Ref<const Mat>& Ztr,
                       const Eigen::Ref<const Mat>& Ytr, const Eigen::Ref<const Mat>& Zva,
                       const Eigen::Ref<const Mat>& Yva) {
  try {
    const UnifiedLinearModel m = build_model(spec, eta, Ztr);
    const DesignBlocks dtr = m.design(Ztr);
    const Vec theta = batch_solve(m.stacked_design(dtr), m.stacked_targets(dtr, Ytr), m.prior_diag(), m.sigma2());
    const DesignBlocks dva = m.design(Zva);
    double sse = 0.0;
    for (Index t = 0; t < Zva.rows(); ++t) sse += (Yva.row(t).transpose() - m.predict_from(dva, t, theta)).squaredNorm();
    const double mse = sse / static_cast<double>(Yva.size());
    return std::isfinite(mse) ? mse : kInfNll;
  } catch (const std::exception&) {
    return kInfNll;
  }
}

/// Exhaustive grid search with a temporal hold-out (earlier rows train).
/// Ties go to the larger sigma^2.
inline FitResult cv_grid_search(const ModelSpec& spec, const CvGrid& grid, const Eigen::Ref<const Mat>& Z,
                                const Eigen::Ref<const Mat>& Y, std::vector<CvPoint>* all_points = nullptr) {
  if (spec.cls == ModelClass::SP || spec.cls == ModelClass::SPK)
    throw ConfigError("cross validation is only offered for P, NP and SP2");
  grid.validate(spec.cls);
  const Index n_tr = static_cast<Index>(std::floor(grid.train_fraction * static_cast<double>(Z.rows())));
  detail::require(n_tr >= 1 && n_tr < Z.rows(), "cv_grid_search: split leaves an empty side");
  const Mat Ztr = Z.topRows(n_tr), Ytr = Y.topRows(n_tr);
  const Mat Zva = Z.bottomRows(Z.rows() - n_tr), Yva = Y.bottomRows(Z.rows() - n_tr);

  HyperVector base;
  if (spec.features) base.delta = spec.features->delta();
  if (spec.cls == ModelClass::SP2) base.pi = preliminary_ls_pi(rbd_blocks(spec, base, Ztr), Ytr);

  const std::vector<double> one{1.0};
  const auto& rho_grid = has_kernel_part(spec.cls) ? grid.rho2 : one;
  const auto& tau_grid = has_kernel_part(spec.cls) ? grid.tau : one;

  FitResult res;
  res.method = "CV";
  bool have = false;
  std::size_t evals = 0;
  for (double s2 : grid.sigma2)
    for (double r2 : rho_grid)
      for (double t : tau_grid) {
        HyperVector h = base;
        h.sigma2 = s2;
        if (has_kernel_part(spec.cls)) {
          h.rho2 = r2;
          h.tau = t;
        }
        const double mse = cv_score(spec, h, Ztr, Ytr, Zva, Yva);
        res.trace.push_back({evals++, 0, mse});
        if (all_points) all_points->push_back({h, mse});
        const bool better = mse < res.objective || (mse == res.objective && have && s2 > res.eta.sigma2);
        if (!have || better) {
          res.eta = h;
          res.objective = mse;
          have = true;
        }
      }
  if (!std::isfinite(res.objective)) throw NumericalError("cv_grid_search: every grid point failed");
  if (spec.cls == ModelClass::SP2) res.eta.pi = preliminary_ls_pi(rbd_blocks(spec, base, Z), Y);
  return res;
}

}  // namespace dfinv
