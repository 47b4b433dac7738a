#pragma once

// JSON encodings of the configuration and model objects. Matrices are stored
// as arrays of rows.

#include "dfinv/hyper.hpp"
#include "dfinv/metrics.hpp"
#include "dfinv/rls.hpp"
#include "dfinv/trajectory.hpp"

#include <json.hpp>

namespace dfinv {

using json = nlohmann::json;

inline json vec_to_json(const Eigen::Ref<const Vec>& v) {
  json j = json::array();
  for (Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

inline Vec vec_from_json(const json& j) {
  if (!j.is_array()) throw ConfigError("expected a JSON array of numbers");
  Vec v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
  return v;
}

inline json mat_to_json(const Eigen::Ref<const Mat>& m) {
  json j = json::array();
  for (Index r = 0; r < m.rows(); ++r) j.push_back(vec_to_json(m.row(r).transpose()));
  return j;
}

inline Mat mat_from_json(const json& j) {
  if (!j.is_array()) throw ConfigError("expected a JSON array of rows");
  if (j.empty()) return Mat();
  const std::size_t cols = j[0].size();
  Mat m(static_cast<Index>(j.size()), static_cast<Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw ConfigError("ragged matrix in JSON");
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = j[r][c].get<double>();
  }
  return m;
}

namespace detail {

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

}  // namespace detail

inline json to_json(const ArmModel& a) {
  return {{"link_lengths", a.link_lengths},     {"link_masses", a.link_masses},
          {"link_inertias", a.link_inertias},   {"com_offsets", a.com_offsets},
          {"gravity", a.gravity},               {"friction_viscous", a.friction_viscous},
          {"friction_coulomb", a.friction_coulomb}};
}

inline ArmModel arm_from_json(const json& j) {
  ArmModel a = ArmModel::two_link_default();
  detail::read_opt(j, "link_lengths", a.link_lengths);
  detail::read_opt(j, "link_masses", a.link_masses);
  detail::read_opt(j, "link_inertias", a.link_inertias);
  detail::read_opt(j, "com_offsets", a.com_offsets);
  detail::read_opt(j, "gravity", a.gravity);
  detail::read_opt(j, "friction_viscous", a.friction_viscous);
  detail::read_opt(j, "friction_coulomb", a.friction_coulomb);
  try {
    a.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return a;
}

inline json to_json(const CircleTrajectory& t) {
  return {{"plane", to_string(t.plane)}, {"center_x", t.center_x},     {"center_y", t.center_y},
          {"radius", t.radius},          {"period", t.period},         {"duration", t.duration},
          {"sample_period", t.sample_period}, {"elbow_up", t.elbow_up}};
}

inline CircleTrajectory trajectory_from_json(const json& j, CircleTrajectory t) {
  std::string plane = to_string(t.plane);
  detail::read_opt(j, "plane", plane);
  t.plane = plane_from_string(plane);
  detail::read_opt(j, "center_x", t.center_x);
  detail::read_opt(j, "center_y", t.center_y);
  detail::read_opt(j, "radius", t.radius);
  detail::read_opt(j, "period", t.period);
  detail::read_opt(j, "duration", t.duration);
  detail::read_opt(j, "sample_period", t.sample_period);
  detail::read_opt(j, "elbow_up", t.elbow_up);
  return t;
}

inline json to_json(const RffBasis& b) { return {{"omega", mat_to_json(b.omega)}, {"width", b.width}}; }

inline RffBasis rff_from_json(const json& j) {
  RffBasis b;
  b.omega = mat_from_json(j.at("omega"));
  b.width = j.at("width").get<double>();
  return b;
}

inline json to_json(const FeatureMatrixR& f) {
  json j{{"variant", to_string(f.variant())}, {"R", mat_to_json(f.R())}};
  if (f.variant() == DfVariant::DFSR) {
    const auto& p = f.dfsr();
    j["dfsr"] = {{"alpha1", p.alpha1}, {"alpha2", p.alpha2}, {"beta1", p.beta1}, {"beta2", p.beta2}};
  }
  return j;
}

inline FeatureMatrixR feature_matrix_from_json(const json& j) {
  const DfVariant v = df_variant_from_string(j.at("variant").get<std::string>());
  const Mat R = mat_from_json(j.at("R"));
  if (v == DfVariant::DFSR) {
    const json& p = j.at("dfsr");
    DfsrParams d{p.at("alpha1").get<double>(), p.at("alpha2").get<double>(), p.at("beta1").get<double>(),
                 p.at("beta2").get<double>()};
    return FeatureMatrixR::from_matrix(v, R, &d);
  }
  return FeatureMatrixR::from_matrix(v, R);
}

inline json to_json(const HyperVector& h) {
  json j{{"sigma2", h.sigma2}};
  if (h.rho2) j["rho2"] = *h.rho2;
  if (h.tau) j["tau"] = *h.tau;
  if (h.gamma2) j["gamma2"] = *h.gamma2;
  if (h.pi.size() > 0) j["pi"] = vec_to_json(h.pi);
  if (h.delta.size() > 0) j["delta"] = vec_to_json(h.delta);
  return j;
}

inline HyperVector hyper_from_json(const json& j) {
  HyperVector h;
  h.sigma2 = j.at("sigma2").get<double>();
  if (j.contains("rho2")) h.rho2 = j["rho2"].get<double>();
  if (j.contains("tau")) h.tau = j["tau"].get<double>();
  if (j.contains("gamma2")) h.gamma2 = j["gamma2"].get<double>();
  if (j.contains("pi")) h.pi = vec_from_json(j["pi"]);
  if (j.contains("delta")) h.delta = vec_from_json(j["delta"]);
  return h;
}

inline json to_json(const Normalizer& n) { return {{"scale", vec_to_json(n.scale)}}; }

inline Normalizer normalizer_from_json(const json& j) { return {vec_from_json(j.at("scale"))}; }

/// Everything needed to rebuild a model's prediction function.
inline json model_to_json(const UnifiedLinearModel& m) {
  json j{{"class", to_string(m.model_class())},
         {"feature_mode", to_string(m.feature_mode())},
         {"n_dof", m.n_dof()},
         {"n_out", m.n_out()},
         {"hypers", to_json(m.hypers())},
         {"ridge", m.ridge()},
         {"adapt_mean", m.adapt_mean()}};
  const ModelBases& b = m.bases();
  if (b.rff) j["rff"] = to_json(*b.rff);
  if (b.features) j["features"] = to_json(*b.features);
  if (b.geometry) j["geometry"] = {{"n_dof", b.geometry->n_dof}, {"gravity", b.geometry->gravity}};
  if (b.normalizer.dim() > 0) j["normalizer"] = to_json(b.normalizer);
  return j;
}

inline UnifiedLinearModel model_from_json(const json& j) {
  ModelBases b;
  if (j.contains("rff")) b.rff = rff_from_json(j["rff"]);
  if (j.contains("features")) b.features = feature_matrix_from_json(j["features"]);
  if (j.contains("geometry"))
    b.geometry = RbdGeometry{j["geometry"].at("n_dof").get<std::size_t>(), j["geometry"].at("gravity").get<double>()};
  if (j.contains("normalizer")) b.normalizer = normalizer_from_json(j["normalizer"]);
  return UnifiedLinearModel(model_class_from_string(j.at("class").get<std::string>()),
                            feature_mode_from_string(j.at("feature_mode").get<std::string>()),
                            j.at("n_dof").get<std::size_t>(), j.at("n_out").get<std::size_t>(), std::move(b),
                            hyper_from_json(j.at("hypers")), j.at("ridge").get<double>(),
                            j.at("adapt_mean").get<bool>());
}

/// Checkpoint: factor, right-hand side and counters.
inline json to_json(const RlsState& s) {
  return {{"chol_L", mat_to_json(s.chol_L())},
          {"rhs", vec_to_json(s.rhs())},
          {"samples_seen", s.samples_seen()},
          {"sigma2", s.sigma2()},
          {"forgetting", s.forgetting()}};
}

inline RlsState rls_from_json(const json& j) {
  return RlsState::restore(mat_from_json(j.at("chol_L")), vec_from_json(j.at("rhs")),
                           j.at("samples_seen").get<std::size_t>(), j.at("sigma2").get<double>(),
                           j.value("forgetting", 1.0));
}

inline json to_json(const SummaryStats& s) {
  return {{"count", s.count}, {"median", s.median}, {"q1", s.q1}, {"q3", s.q3},
          {"whisker_low", s.whisker_low}, {"whisker_high", s.whisker_high}, {"min", s.min}, {"max", s.max}};
}

inline SummaryStats summary_from_json(const json& j) {
  SummaryStats s;
  s.count = j.at("count").get<std::size_t>();
  s.median = j.at("median").get<double>();
  s.q1 = j.at("q1").get<double>();
  s.q3 = j.at("q3").get<double>();
  s.whisker_low = j.at("whisker_low").get<double>();
  s.whisker_high = j.at("whisker_high").get<double>();
  s.min = j.at("min").get<double>();
  s.max = j.at("max").get<double>();
  return s;
}

inline json to_json(const MlOptions& o) {
  return {{"restarts", o.restarts}, {"max_evaluations", o.max_evaluations}, {"initial_step", o.initial_step},
          {"jitter", o.jitter}, {"simplex_tol", o.simplex_tol}};
}

inline MlOptions ml_options_from_json(const json& j) {
  MlOptions o;
  detail::read_opt(j, "restarts", o.restarts);
  detail::read_opt(j, "max_evaluations", o.max_evaluations);
  detail::read_opt(j, "initial_step", o.initial_step);
  detail::read_opt(j, "jitter", o.jitter);
  detail::read_opt(j, "simplex_tol", o.simplex_tol);
  if (o.restarts < 1) throw ConfigError("ml.restarts must be >= 1");
  return o;
}

}  // namespace dfinv
