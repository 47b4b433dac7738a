#pragma once

// Three-stage online protocol:
//   1. hyperparameters and an initial batch estimate from the first
//      init_count samples of dataset A;
//   2. recursive updates over the rest of A (checkpoint theta_F1);
//   3. for each of `stage2_subsets` consecutive slices of dataset B, restart
//      from the checkpoint, stream the slice, and score every snapshot on the
//      next T samples.

#include "dfinv/json_io.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace dfinv {

struct ModelEntry {
  std::string name;
  ModelClass cls = ModelClass::NP;
  std::string method = "ML";  // ML or CV
  FeatureMode mode = FeatureMode::Standard;
};

/// "CLASS-METHOD[-FEATURES]", e.g. "NP-ML", "SPK-ML-DFR", "SP2-CV".
inline ModelEntry parse_model_name(const std::string& name) {
  std::vector<std::string> parts;
  std::stringstream ss(name);
  std::string p;
  while (std::getline(ss, p, '-')) parts.push_back(p);
  if (parts.size() < 2 || parts.size() > 3) throw ConfigError("model name '" + name + "' is not CLASS-METHOD[-FEATURES]");
  ModelEntry e;
  e.name = name;
  e.cls = model_class_from_string(parts[0]);
  e.method = parts[1];
  if (e.method != "ML" && e.method != "CV") throw ConfigError("model '" + name + "': method must be ML or CV");
  if (parts.size() == 3) e.mode = feature_mode_from_string(parts[2]);
  if (e.method == "CV" && (e.cls == ModelClass::SP || e.cls == ModelClass::SPK || e.mode != FeatureMode::Standard))
    throw ConfigError("model '" + name + "': cross validation is only offered for P, NP and SP2 with standard inputs");
  return e;
}

/// Name of the numeric-derivative counterpart of a derivative-free model.
inline std::string standard_counterpart(const ModelEntry& e) {
  return to_string(e.cls) + "-" + e.method;
}

struct CvGridSpec {
  std::vector<double> sigma2_rel{1e-3, 3e-3, 1e-2, 3e-2, 1e-1};  // x var(y)
  std::vector<double> rho2_rel{0.1, 1.0, 10.0};                  // x var(y)
  std::vector<double> tau_rel{0.25, 1.0, 4.0};                   // x input dimension
  double train_fraction = 0.7;
};

struct ExperimentConfig {
  ArmModel arm = ArmModel::two_link_default();
  CircleTrajectory dataset_a{CirclePlane::XY, 0.35, 0.10, 0.10, 1.25, 500.0, 0.05, true};
  CircleTrajectory dataset_b{CirclePlane::XZ, 0.30, -0.10, 0.10, 1.25, 500.0, 0.05, true};
  double sigma_q = 2e-3;      // rad
  double sigma_y_rel = 0.02;  // x per-output torque RMS
  DifferentiatorConfig differentiator{};
  std::vector<std::string> models{"P-ML",      "NP-ML",      "NP-CV",      "SP-ML",       "SP2-ML",
                                  "SPK-ML",    "NP-ML-DF",   "NP-ML-DFW",  "NP-ML-DFR",   "NP-ML-DFSR"};
  Index rff_pairs = 200;  // d
  Index df_features = 3;  // k for DFR
  Index lags = 10;        // M
  std::size_t init_count = 1000;
  std::size_t stage2_subsets = 5;
  std::size_t subset_size = 2000;
  Index horizon = 25;
  double steady_state_cutoff = 30.0;  // s
  std::vector<OutputGroup> groups{{"joint1", {0}}, {"joint2", {1}}};
  MlOptions ml{};
  CvGridSpec cv{};
  std::uint64_t seed = 1;

  double sample_period() const { return dataset_a.sample_period; }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    try {
      arm.validate();
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
    if (arm.n_dof() != 2) fail("experiments use the two-link arm");
    if (dataset_a.sample_period != dataset_b.sample_period) fail("datasets must share the sample period");
    differentiator.validate();
    if (!(sigma_q >= 0 && sigma_y_rel >= 0)) fail("noise levels must be >= 0");
    if (rff_pairs < 1) fail("rff_pairs must be >= 1");
    if (lags < 2) fail("lags must be >= 2");
    if (df_features < 1 || df_features > lags + 1) fail("df_features must lie in [1, lags + 1]");
    if (horizon < 1) fail("horizon must be >= 1");
    const auto na = static_cast<std::size_t>(std::llround(dataset_a.duration / dataset_a.sample_period));
    const auto nb = static_cast<std::size_t>(std::llround(dataset_b.duration / dataset_b.sample_period));
    if (init_count <= static_cast<std::size_t>(lags) + 10 || init_count >= na)
      fail("init_count must exceed lags + 10 and leave stage-1 samples");
    if (stage2_subsets < 1 || stage2_subsets * subset_size > nb) fail("stage-2 subsets do not fit in dataset B");
    if (subset_size <= static_cast<std::size_t>(lags + horizon) + 1) fail("subset_size too small for lags and horizon");
    if (models.empty()) fail("no models configured");
    for (const auto& m : models) parse_model_name(m);
    for (const auto& g : groups) {
      if (g.outputs.empty()) fail("output group '" + g.name + "' is empty");
      for (Index k : g.outputs)
        if (k < 0 || k >= 2) fail("output group '" + g.name + "' references a missing output");
    }
  }
};

inline json to_json(const ExperimentConfig& c) {
  json groups = json::array();
  for (const auto& g : c.groups) groups.push_back({{"name", g.name}, {"outputs", g.outputs}});
  return {{"arm", to_json(c.arm)},
          {"dataset_a", to_json(c.dataset_a)},
          {"dataset_b", to_json(c.dataset_b)},
          {"noise", {{"sigma_q", c.sigma_q}, {"sigma_y_rel", c.sigma_y_rel}}},
          {"differentiator", {{"beta1", c.differentiator.beta1}, {"beta2", c.differentiator.beta2}}},
          {"models", c.models},
          {"rff_pairs", c.rff_pairs},
          {"df_features", c.df_features},
          {"lags", c.lags},
          {"init_count", c.init_count},
          {"stage2_subsets", c.stage2_subsets},
          {"subset_size", c.subset_size},
          {"horizon", c.horizon},
          {"steady_state_cutoff", c.steady_state_cutoff},
          {"groups", groups},
          {"ml", to_json(c.ml)},
          {"cv",
           {{"sigma2_rel", c.cv.sigma2_rel},
            {"rho2_rel", c.cv.rho2_rel},
            {"tau_rel", c.cv.tau_rel},
            {"train_fraction", c.cv.train_fraction}}},
          {"seed", c.seed}};
}

inline ExperimentConfig experiment_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  ExperimentConfig c;
  if (j.contains("arm")) c.arm = arm_from_json(j["arm"]);
  if (j.contains("dataset_a")) c.dataset_a = trajectory_from_json(j["dataset_a"], c.dataset_a);
  if (j.contains("dataset_b")) c.dataset_b = trajectory_from_json(j["dataset_b"], c.dataset_b);
  if (j.contains("noise")) {
    detail::read_opt(j["noise"], "sigma_q", c.sigma_q);
    detail::read_opt(j["noise"], "sigma_y_rel", c.sigma_y_rel);
  }
  if (j.contains("differentiator")) {
    detail::read_opt(j["differentiator"], "beta1", c.differentiator.beta1);
    detail::read_opt(j["differentiator"], "beta2", c.differentiator.beta2);
  }
  c.differentiator.sample_period = c.dataset_a.sample_period;
  detail::read_opt(j, "models", c.models);
  detail::read_opt(j, "rff_pairs", c.rff_pairs);
  detail::read_opt(j, "df_features", c.df_features);
  detail::read_opt(j, "lags", c.lags);
  detail::read_opt(j, "init_count", c.init_count);
  detail::read_opt(j, "stage2_subsets", c.stage2_subsets);
  detail::read_opt(j, "subset_size", c.subset_size);
  detail::read_opt(j, "horizon", c.horizon);
  detail::read_opt(j, "steady_state_cutoff", c.steady_state_cutoff);
  if (j.contains("groups")) {
    c.groups.clear();
    for (const auto& g : j["groups"]) {
      OutputGroup og;
      og.name = g.at("name").get<std::string>();
      og.outputs = g.at("outputs").get<std::vector<Index>>();
      c.groups.push_back(og);
    }
  }
  if (j.contains("ml")) c.ml = ml_options_from_json(j["ml"]);
  if (j.contains("cv")) {
    detail::read_opt(j["cv"], "sigma2_rel", c.cv.sigma2_rel);
    detail::read_opt(j["cv"], "rho2_rel", c.cv.rho2_rel);
    detail::read_opt(j["cv"], "tau_rel", c.cv.tau_rel);
    detail::read_opt(j["cv"], "train_fraction", c.cv.train_fraction);
  }
  detail::read_opt(j, "seed", c.seed);
  c.validate();
  return c;
}

/// Independent random streams derived from the base seed.
enum SeedStream : std::uint64_t {
  kSeedPhaseA = 1,
  kSeedPhaseB = 2,
  kSeedNoiseA = 3,
  kSeedNoiseB = 4,
  kSeedRff = 5,
  kSeedDfr = 6,
  kSeedMl = 100,  // + model index
};

struct ScenarioData {
  TrajectoryDataset a, b;  // noisy measurements
  Mat za_std, zb_std;      // [q qd qdd] with numeric derivatives
  Mat za_win, zb_win;      // stacked position windows
  Vec sigma_y;
};

inline ScenarioData prepare_data(const ExperimentConfig& cfg) {
  ScenarioData d;
  const TrajectoryDataset a = simulate_circles(cfg.arm, cfg.dataset_a, derive_seed(cfg.seed, kSeedPhaseA));
  const TrajectoryDataset b = simulate_circles(cfg.arm, cfg.dataset_b, derive_seed(cfg.seed, kSeedPhaseB));
  d.sigma_y = cfg.sigma_y_rel * torque_rms(a);
  d.a = add_noise(a, cfg.sigma_q, d.sigma_y, derive_seed(cfg.seed, kSeedNoiseA));
  d.b = add_noise(b, cfg.sigma_q, d.sigma_y, derive_seed(cfg.seed, kSeedNoiseB));
  DifferentiatorConfig dc = cfg.differentiator;
  dc.sample_period = cfg.sample_period();
  auto stack = [&](const TrajectoryDataset& ds) {
    const Derivatives der = numeric_differentiate(ds.positions, dc);
    Mat z(static_cast<Index>(ds.size()), 3 * static_cast<Index>(ds.n_dof()));
    z << ds.positions, der.qd, der.qdd;
    return z;
  };
  d.za_std = stack(d.a);
  d.zb_std = stack(d.b);
  d.za_win = window_rows(d.a.positions, cfg.lags);
  d.zb_win = window_rows(d.b.positions, cfg.lags);
  return d;
}

struct ProtocolCounts {
  std::size_t size_a = 0, size_b = 0;
  std::size_t init_count = 0, stage1_count = 0;
  std::size_t init_fit_rows = 0;
  std::size_t stage2_subsets = 0, subset_size = 0;
  Index horizon = 0, lags = 0;
  std::size_t eps_rows_per_subset = 0;
  Index cutoff_samples = 0;
};

inline ProtocolCounts protocol_counts(const ExperimentConfig& cfg, const ScenarioData& d) {
  ProtocolCounts p;
  p.size_a = d.a.size();
  p.size_b = d.b.size();
  p.init_count = cfg.init_count;
  p.stage1_count = p.size_a - cfg.init_count;
  p.init_fit_rows = cfg.init_count - static_cast<std::size_t>(cfg.lags);
  p.stage2_subsets = cfg.stage2_subsets;
  p.subset_size = cfg.subset_size;
  p.horizon = cfg.horizon;
  p.lags = cfg.lags;
  p.eps_rows_per_subset = cfg.subset_size - static_cast<std::size_t>(cfg.horizon + cfg.lags);
  p.cutoff_samples = cutoff_samples(cfg.steady_state_cutoff, cfg.sample_period());
  return p;
}

inline json to_json(const ProtocolCounts& p) {
  return {{"size_a", p.size_a},
          {"size_b", p.size_b},
          {"init_count", p.init_count},
          {"stage1_count", p.stage1_count},
          {"init_fit_rows", p.init_fit_rows},
          {"stage2_subsets", p.stage2_subsets},
          {"subset_size", p.subset_size},
          {"horizon", p.horizon},
          {"lags", p.lags},
          {"eps_rows_per_subset", p.eps_rows_per_subset},
          {"cutoff_samples", p.cutoff_samples}};
}

/// Output groups used for reporting: the configured ones plus "all".
inline std::vector<OutputGroup> report_groups(const ExperimentConfig& cfg, Index n_out) {
  std::vector<OutputGroup> g = cfg.groups;
  OutputGroup all{"all", {}};
  for (Index k = 0; k < n_out; ++k) all.outputs.push_back(k);
  g.push_back(all);
  return g;
}

inline ModelSpec make_spec(const ExperimentConfig& cfg, const ModelEntry& e, const ScenarioData& d) {
  ModelSpec s;
  s.cls = e.cls;
  s.mode = e.mode;
  s.n_dof = d.a.n_dof();
  s.n_out = d.a.n_out();
  const Index n = static_cast<Index>(s.n_dof);
  Index m_in = 3 * n;
  switch (e.mode) {
    case FeatureMode::Standard: break;
    case FeatureMode::DF: s.features = FeatureMatrixR::df(cfg.lags); break;
    case FeatureMode::DFW: s.features = FeatureMatrixR::dfw(Vec::Ones(cfg.lags + 1)); break;
    case FeatureMode::DFR:
      s.features = dfr_init(cfg.lags, cfg.df_features, derive_seed(cfg.seed, kSeedDfr), cfg.differentiator.beta1,
                            cfg.differentiator.beta2);
      break;
    case FeatureMode::DFSR:
      s.features = FeatureMatrixR::dfsr(
          DfsrParams::for_period(cfg.sample_period(), cfg.differentiator.beta1, cfg.differentiator.beta2), cfg.lags);
      break;
  }
  if (s.features) m_in = n * s.features->features_per_joint();
  if (has_kernel_part(e.cls)) s.rff = sample_rff(cfg.rff_pairs, m_in, derive_seed(cfg.seed, kSeedRff));
  if (has_rbd_part(e.cls)) s.geometry = RbdGeometry{s.n_dof, d.a.gravity};
  return s;
}

struct HyperFit {
  ModelSpec spec;
  FitResult fit;
};

/// Hyperparameters from the init rows [M, init_count) of dataset A.
inline HyperFit fit_model_hypers(const ExperimentConfig& cfg, const ScenarioData& d, const ModelEntry& e,
                                 std::size_t model_index) {
  HyperFit hf;
  hf.spec = make_spec(cfg, e, d);
  const Mat& ZA = e.mode == FeatureMode::Standard ? d.za_std : d.za_win;
  const Index first = cfg.lags, count = static_cast<Index>(cfg.init_count) - cfg.lags;
  const Mat Z = ZA.middleRows(first, count);
  const Mat Y = d.a.torques.middleRows(first, count);
  if (e.method == "ML") {
    MlProblem prob{hf.spec, Z, Y, default_init(hf.spec, Z, Y), cfg.ml};
    hf.fit = optimize_ml(prob, derive_seed(cfg.seed, kSeedMl + model_index));
  } else {
    const double vy = detail::mean_output_variance(Y);
    const double m_in = static_cast<double>(3 * hf.spec.n_dof);
    CvGrid g;
    for (double r : cfg.cv.sigma2_rel) g.sigma2.push_back(r * vy);
    for (double r : cfg.cv.rho2_rel) g.rho2.push_back(r * vy);
    for (double r : cfg.cv.tau_rel) g.tau.push_back(r * m_in);
    g.train_fraction = cfg.cv.train_fraction;
    hf.fit = cv_grid_search(hf.spec, g, Z, Y);
  }
  return hf;
}

struct SubsetCurves {
  std::vector<Index> times;  // sample index within the subset
  Mat groups;                // rows x groups
};

struct ModelResult {
  std::string name;
  bool ok = false;
  std::string error;
  FitResult fit;
  json model;  // serialized model (bases, hypers, ridge)
  std::vector<SubsetCurves> subsets;
  SubsetCurves average;
  std::vector<std::string> group_names;
  std::vector<SummaryStats> steady;  // one per group
};

struct ResultBundle {
  ExperimentConfig config;
  ProtocolCounts counts;
  std::vector<ModelResult> models;
};

inline Mat nanmean_curves(const std::vector<SubsetCurves>& subsets) {
  const Mat& f = subsets.front().groups;
  Mat out = Mat::Constant(f.rows(), f.cols(), std::numeric_limits<double>::quiet_NaN());
  for (Index i = 0; i < f.rows(); ++i)
    for (Index g = 0; g < f.cols(); ++g) {
      double s = 0.0;
      int c = 0;
      for (const auto& sc : subsets)
        if (!std::isnan(sc.groups(i, g))) {
          s += sc.groups(i, g);
          ++c;
        }
      if (c > 0) out(i, g) = s / c;
    }
  return out;
}

/// Runs the full protocol for one model. Throws on failure; run_scenario
/// isolates the exception.
inline ModelResult run_model(const ExperimentConfig& cfg, const ScenarioData& d, const ModelEntry& e,
                             std::size_t model_index) {
  ModelResult res;
  res.name = e.name;
  HyperFit hf = fit_model_hypers(cfg, d, e, model_index);
  res.fit = hf.fit;
  const bool std_mode = e.mode == FeatureMode::Standard;
  const Mat& ZA = std_mode ? d.za_std : d.za_win;
  const Mat& ZB = std_mode ? d.zb_std : d.zb_win;
  const Index M = cfg.lags, init = static_cast<Index>(cfg.init_count);
  const Mat Zinit = ZA.middleRows(M, init - M);
  const Mat Yinit = d.a.torques.middleRows(M, init - M);

  const UnifiedLinearModel model_a = build_model(hf.spec, hf.fit.eta, Zinit);
  res.model = model_to_json(model_a);

  // Stage 0/1: batch initialization, then stream the rest of A.
  const DesignBlocks dinit = model_a.design(Zinit);
  RlsState state = RlsState::from_batch(model_a.stacked_design(dinit), model_a.stacked_targets(dinit, Yinit),
                                        model_a.prior_diag(), model_a.sigma2());
  {
    const Index n_a = ZA.rows();
    const Mat Zs = ZA.middleRows(init, n_a - init);
    const Mat Ys = d.a.torques.middleRows(init, n_a - init);
    const DesignBlocks ds = model_a.design(Zs);
    const Mat Yres = Ys - ds.offset;
    for (Index t = 0; t < Zs.rows(); ++t)
      if (!state.update(model_a.regressor_from(ds, t), Yres.row(t).transpose()))
        throw NumericalError("non-finite regressor during stage 1 at sample " + std::to_string(init + t));
  }
  const json checkpoint = to_json(state);

  // Stage 2: the regressor sees dataset B's gravity.
  const UnifiedLinearModel model_b = model_a.with_geometry(RbdGeometry{d.b.n_dof(), d.b.gravity});
  const auto groups = report_groups(cfg, static_cast<Index>(d.b.n_out()));
  for (const auto& g : groups) res.group_names.push_back(g.name);
  const Index S = static_cast<Index>(cfg.subset_size), T = cfg.horizon;
  for (std::size_t i = 0; i < cfg.stage2_subsets; ++i) {
    RlsState st = rls_from_json(checkpoint);
    const Index off = static_cast<Index>(i) * S;
    const Mat Zs = ZB.middleRows(off, S);
    const Mat Ys = d.b.torques.middleRows(off, S);
    const DesignBlocks ds = model_b.design(Zs);
    const Mat Yres = Ys - ds.offset;
    std::vector<Vec> snaps;
    snaps.reserve(static_cast<std::size_t>(S - T - M));
    for (Index t = M; t < S; ++t) {
      if (!st.update(model_b.regressor_from(ds, t), Yres.row(t).transpose()))
        throw NumericalError("non-finite regressor during stage 2 at subset sample " + std::to_string(t));
      if (t <= S - T - 1) snaps.push_back(st.snapshot().theta);
    }
    const ErrorSeries es = prediction_error_series(model_b, ds, snaps, Ys, M, T, groups);
    res.subsets.push_back({es.times, es.groups});
  }
  res.average.times = res.subsets.front().times;
  res.average.groups = nanmean_curves(res.subsets);
  const Index cut = cutoff_samples(cfg.steady_state_cutoff, cfg.sample_period());
  for (Index g = 0; g < res.average.groups.cols(); ++g)
    res.steady.push_back(steady_state_stats(res.average.times, res.average.groups.col(g), cut));
  res.ok = true;
  return res;
}

inline ResultBundle run_scenario(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  ResultBundle b;
  b.config = cfg;
  const ScenarioData d = prepare_data(cfg);
  b.counts = protocol_counts(cfg, d);
  for (std::size_t i = 0; i < cfg.models.size(); ++i) {
    const ModelEntry e = parse_model_name(cfg.models[i]);
    if (log) *log << "[" << (i + 1) << "/" << cfg.models.size() << "] " << e.name << std::endl;
    try {
      b.models.push_back(run_model(cfg, d, e, i));
    } catch (const std::exception& ex) {
      ModelResult r;
      r.name = e.name;
      r.ok = false;
      r.error = ex.what();
      b.models.push_back(std::move(r));
      if (log) *log << "  failed: " << ex.what() << std::endl;
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// Reporting

struct MedianRatio {
  std::string model, counterpart, group;
  double ratio = 0.0;
};

inline const ModelResult* find_model(const ResultBundle& b, const std::string& name) {
  for (const auto& m : b.models)
    if (m.name == name) return &m;
  return nullptr;
}

/// Steady-state median of each derivative-free model over its numeric-
/// derivative counterpart, per group. Pairs with a missing or failed side
/// are reported with a NaN ratio.
inline std::vector<MedianRatio> median_ratios(const ResultBundle& b) {
  std::vector<MedianRatio> out;
  for (const auto& m : b.models) {
    const ModelEntry e = parse_model_name(m.name);
    if (e.mode == FeatureMode::Standard) continue;
    const std::string cp = standard_counterpart(e);
    const ModelResult* c = find_model(b, cp);
    const std::vector<std::string>& names = m.ok ? m.group_names : (c ? c->group_names : m.group_names);
    if (names.empty()) {
      out.push_back({m.name, cp, "all", std::numeric_limits<double>::quiet_NaN()});
      continue;
    }
    for (std::size_t g = 0; g < names.size(); ++g) {
      double r = std::numeric_limits<double>::quiet_NaN();
      if (m.ok && c && c->ok) r = m.steady[g].median / c->steady[g].median;
      out.push_back({m.name, cp, names[g], r});
    }
  }
  return out;
}

inline json manifest_json(const ResultBundle& b) {
  json models = json::array();
  for (const auto& m : b.models) {
    json jm{{"name", m.name}, {"ok", m.ok}};
    if (!m.ok) {
      jm["error"] = m.error;
    } else {
      jm["method"] = m.fit.method;
      jm["hypers"] = to_json(m.fit.eta);
      jm["objective"] = m.fit.objective;
      jm["initial_objective"] = m.fit.initial_objective;
      jm["evaluations"] = m.fit.trace.size();
      jm["budget_exhausted"] = m.fit.budget_exhausted;
      jm["model"] = m.model;
      json st = json::object();
      for (std::size_t g = 0; g < m.group_names.size(); ++g) st[m.group_names[g]] = to_json(m.steady[g]);
      jm["steady_state"] = st;
    }
    models.push_back(jm);
  }
  json ratios = json::array();
  for (const auto& r : median_ratios(b)) {
    json jr{{"model", r.model}, {"counterpart", r.counterpart}, {"group", r.group}};
    jr["ratio"] = std::isnan(r.ratio) ? json(nullptr) : json(r.ratio);
    ratios.push_back(jr);
  }
  const std::uint64_t s = b.config.seed;
  json seeds{{"base", s},
             {"phase_a", derive_seed(s, kSeedPhaseA)},
             {"phase_b", derive_seed(s, kSeedPhaseB)},
             {"noise_a", derive_seed(s, kSeedNoiseA)},
             {"noise_b", derive_seed(s, kSeedNoiseB)},
             {"rff", derive_seed(s, kSeedRff)},
             {"dfr", derive_seed(s, kSeedDfr)}};
  return {{"config", to_json(b.config)},
          {"seeds", seeds},
          {"protocol", to_json(b.counts)},
          {"models", models},
          {"median_ratios", ratios}};
}

inline json curves_to_json(const SubsetCurves& c) {
  return {{"times", c.times}, {"groups", mat_to_json(c.groups)}};
}

inline SubsetCurves curves_from_json(const json& j) {
  return {j.at("times").get<std::vector<Index>>(), mat_from_json(j.at("groups"))};
}

/// Full bundle: manifest plus every curve; `report` rebuilds all files from it.
inline json bundle_json(const ResultBundle& b) {
  json j = manifest_json(b);
  json curves = json::object();
  for (const auto& m : b.models) {
    if (!m.ok) continue;
    json subsets = json::array();
    for (const auto& s : m.subsets) subsets.push_back(curves_to_json(s));
    curves[m.name] = {{"groups", m.group_names}, {"average", curves_to_json(m.average)}, {"subsets", subsets}};
  }
  j["curves"] = curves;
  j["fit_traces"] = json::object();
  for (const auto& m : b.models) {
    if (!m.ok) continue;
    json tr = json::array();
    for (const auto& t : m.fit.trace) tr.push_back({t.evaluation, t.restart, std::isfinite(t.value) ? json(t.value) : json(nullptr)});
    j["fit_traces"][m.name] = tr;
  }
  return j;
}

inline ResultBundle bundle_from_json(const json& j) {
  ResultBundle b;
  b.config = experiment_from_json(j.at("config"));
  const json& p = j.at("protocol");
  b.counts.size_a = p.at("size_a").get<std::size_t>();
  b.counts.size_b = p.at("size_b").get<std::size_t>();
  b.counts.init_count = p.at("init_count").get<std::size_t>();
  b.counts.stage1_count = p.at("stage1_count").get<std::size_t>();
  b.counts.init_fit_rows = p.at("init_fit_rows").get<std::size_t>();
  b.counts.stage2_subsets = p.at("stage2_subsets").get<std::size_t>();
  b.counts.subset_size = p.at("subset_size").get<std::size_t>();
  b.counts.horizon = p.at("horizon").get<Index>();
  b.counts.lags = p.at("lags").get<Index>();
  b.counts.eps_rows_per_subset = p.at("eps_rows_per_subset").get<std::size_t>();
  b.counts.cutoff_samples = p.at("cutoff_samples").get<Index>();
  for (const auto& jm : j.at("models")) {
    ModelResult m;
    m.name = jm.at("name").get<std::string>();
    m.ok = jm.at("ok").get<bool>();
    if (!m.ok) {
      m.error = jm.value("error", "");
      b.models.push_back(std::move(m));
      continue;
    }
    m.fit.method = jm.at("method").get<std::string>();
    m.fit.eta = hyper_from_json(jm.at("hypers"));
    m.fit.objective = jm.at("objective").get<double>();
    m.fit.initial_objective = jm.at("initial_objective").get<double>();
    m.fit.budget_exhausted = jm.at("budget_exhausted").get<bool>();
    m.model = jm.at("model");
    const json& c = j.at("curves").at(m.name);
    m.group_names = c.at("groups").get<std::vector<std::string>>();
    m.average = curves_from_json(c.at("average"));
    for (const auto& s : c.at("subsets")) m.subsets.push_back(curves_from_json(s));
    for (const auto& g : m.group_names) m.steady.push_back(summary_from_json(jm.at("steady_state").at(g)));
    if (j.contains("fit_traces") && j["fit_traces"].contains(m.name))
      for (const auto& t : j["fit_traces"][m.name])
        m.fit.trace.push_back({t[0].get<std::size_t>(), t[1].get<int>(),
                               t[2].is_null() ? kInfNll : t[2].get<double>()});
    b.models.push_back(std::move(m));
  }
  return b;
}

inline std::string file_safe(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  return s;
}

/// curves_<model>.csv, boxplot.csv, manifest.json and bundle.json under `dir`.
inline void write_reports(const ResultBundle& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const double ts = b.config.sample_period();
  char buf[64];
  for (const auto& m : b.models) {
    if (!m.ok) continue;
    std::ofstream os(dir / ("curves_" + file_safe(m.name) + ".csv"));
    os << "t_index,time_s";
    for (const auto& g : m.group_names) os << ",eps_" << g;
    os << '\n';
    for (std::size_t i = 0; i < m.average.times.size(); ++i) {
      os << m.average.times[i];
      std::snprintf(buf, sizeof buf, ",%.4f", static_cast<double>(m.average.times[i]) * ts);
      os << buf;
      for (Index g = 0; g < m.average.groups.cols(); ++g) {
        std::snprintf(buf, sizeof buf, ",%.10e", m.average.groups(static_cast<Index>(i), g));
        os << buf;
      }
      os << '\n';
    }
  }
  {
    std::ofstream os(dir / "boxplot.csv");
    os << "model,group,count,whisker_low,q1,median,q3,whisker_high,min,max\n";
    for (const auto& m : b.models) {
      if (!m.ok) continue;
      for (std::size_t g = 0; g < m.group_names.size(); ++g) {
        const SummaryStats& s = m.steady[g];
        os << m.name << ',' << m.group_names[g] << ',' << s.count;
        for (double v : {s.whisker_low, s.q1, s.median, s.q3, s.whisker_high, s.min, s.max}) {
          std::snprintf(buf, sizeof buf, ",%.10e", v);
          os << buf;
        }
        os << '\n';
      }
    }
  }
  std::ofstream(dir / "manifest.json") << manifest_json(b).dump(2) << '\n';
  std::ofstream(dir / "bundle.json") << bundle_json(b).dump() << '\n';
}

}  // namespace dfinv
