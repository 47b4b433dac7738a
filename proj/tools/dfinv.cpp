// dfinv: simulate datasets, fit hyperparameters, run the online protocol and
// the numeric checks from the command line.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include "dfinv/experiment.hpp"
#include "dfinv/likelihood_analysis.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

using namespace dfinv;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "dfinv_out";
};

ExperimentConfig load_config(const Globals& g) {
  json j = json::object();
  if (!g.config.empty()) {
    std::ifstream is(g.config);
    if (!is) throw ConfigError("cannot open config file '" + g.config + "'");
    try {
      j = json::parse(is);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
  }
  if (g.seed) j["seed"] = *g.seed;
  return experiment_from_json(j);
}

void write_dataset(const fs::path& p, const TrajectoryDataset& ds) {
  std::ofstream os(p);
  if (!os) throw ConfigError("cannot write '" + p.string() + "'");
  write_csv(os, ds);
}

int cmd_simulate(const Globals& g) {
  const ExperimentConfig cfg = load_config(g);
  const ScenarioData d = prepare_data(cfg);
  fs::create_directories(g.out);
  write_dataset(fs::path(g.out) / "dataset_a.csv", d.a);
  write_dataset(fs::path(g.out) / "dataset_b.csv", d.b);
  json meta{{"config", to_json(cfg)},
            {"protocol", to_json(protocol_counts(cfg, d))},
            {"gravity_a", d.a.gravity},
            {"gravity_b", d.b.gravity},
            {"sigma_y", vec_to_json(d.sigma_y)},
            {"base_parameters", vec_to_json(base_parameters(cfg.arm))}};
  std::ofstream(fs::path(g.out) / "simulate.json") << meta.dump(2) << '\n';
  std::cout << "wrote " << d.a.size() << " + " << d.b.size() << " samples to " << g.out << '\n';
  return 0;
}

int cmd_fit_hypers(const Globals& g) {
  const ExperimentConfig cfg = load_config(g);
  const ScenarioData d = prepare_data(cfg);
  json out = json::array();
  int failures = 0;
  for (std::size_t i = 0; i < cfg.models.size(); ++i) {
    const ModelEntry e = parse_model_name(cfg.models[i]);
    json jm{{"model", e.name}, {"class", to_string(e.cls)}, {"feature_mode", to_string(e.mode)},
            {"method", e.method}, {"seed", derive_seed(cfg.seed, kSeedMl + i)}};
    try {
      const HyperFit hf = fit_model_hypers(cfg, d, e, i);
      jm["hypers"] = to_json(hf.fit.eta);
      jm["objective"] = hf.fit.objective;
      jm["initial_objective"] = hf.fit.initial_objective;
      jm["budget_exhausted"] = hf.fit.budget_exhausted;
      jm["bounds"] = {{"log_variance_abs_max", HyperCodec::kLogBound}, {"pole_min", HyperCodec::kPoleMin},
                      {"pole_max", 1.0 - HyperCodec::kPoleMin}};
      json tr = json::array();
      for (const auto& t : hf.fit.trace)
        tr.push_back({t.evaluation, t.restart, std::isfinite(t.value) ? json(t.value) : json(nullptr)});
      jm["trace"] = tr;
      std::cout << e.name << ": objective " << hf.fit.objective << (hf.fit.budget_exhausted ? " (budget exhausted)" : "")
                << '\n';
    } catch (const NumericalError& ex) {
      jm["error"] = ex.what();
      ++failures;
      std::cerr << e.name << ": " << ex.what() << '\n';
    }
    out.push_back(jm);
  }
  fs::create_directories(g.out);
  std::ofstream(fs::path(g.out) / "hypers.json") << out.dump(2) << '\n';
  return failures == static_cast<int>(cfg.models.size()) ? 3 : 0;
}

int cmd_run_online(const Globals& g) {
  const ExperimentConfig cfg = load_config(g);
  const ResultBundle b = run_scenario(cfg, &std::cerr);
  write_reports(b, g.out);
  int ok = 0;
  for (const auto& m : b.models) {
    if (m.ok) {
      ++ok;
      std::cout << m.name << ": steady-state median eps (all) " << m.steady.back().median << '\n';
    } else {
      std::cout << m.name << ": FAILED " << m.error << '\n';
    }
  }
  return ok == 0 ? 3 : 0;
}

int cmd_rff_check(const Globals& g, const std::vector<Index>& dims, Index input_dim, Index pairs_count,
                  double width) {
  const std::uint64_t seed = g.seed.value_or(1);
  Rng rng(derive_seed(seed, 1));
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat X(pairs_count, input_dim), Y(pairs_count, input_dim);
  for (Index i = 0; i < pairs_count; ++i)
    for (Index j = 0; j < input_dim; ++j) {
      X(i, j) = 0.5 * width * normal(rng);
      Y(i, j) = 0.5 * width * normal(rng);
    }
  fs::create_directories(g.out);
  std::ofstream os(fs::path(g.out) / "rff_check.csv");
  const std::string header = "d,mean_abs_error,max_abs_error";
  std::cout << header << '\n';
  os << header << '\n';
  for (Index d : dims) {
    const RffBasis b = sample_rff(d, input_dim, derive_seed(seed, 2 + static_cast<std::uint64_t>(d)), width);
    const Mat FX = rff_feature_rows(X, b), FY = rff_feature_rows(Y, b);
    double sum = 0.0, mx = 0.0;
    for (Index i = 0; i < pairs_count; ++i) {
      const double e = std::abs(FX.row(i).dot(FY.row(i)) - gaussian_kernel(X.row(i).transpose(), Y.row(i).transpose(), width));
      sum += e;
      mx = std::max(mx, e);
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, "%ld,%.8e,%.8e", static_cast<long>(d), sum / static_cast<double>(pairs_count), mx);
    std::cout << buf << '\n';
    os << buf << '\n';
  }
  return 0;
}

int cmd_prop_check(const Globals& g, Index N, Index p, bool analytic) {
  PropInstance inst;
  if (analytic) {
    inst.Psi = Mat::Ones(N, 1);
    inst.R = Mat::Identity(N, N);
    inst.y = Vec::LinSpaced(N, -1.0, 1.0);
  } else {
    inst = random_prop_instance(N, p, g.seed.value_or(1));
  }
  std::vector<double> schedule{1e2, 1e4, 1e6, 1e8};
  if (analytic) schedule.push_back(1e10);
  const auto rows = verify_proposition(inst, schedule);
  fs::create_directories(g.out);
  std::ofstream os(fs::path(g.out) / "prop_check.csv");
  const std::string header = "gamma2,L_SPK,L_SP,delta,residual";
  std::cout << header << '\n';
  os << header << '\n';
  for (const auto& r : rows) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%.6e,%.12e,%.12e,%.12e,%.6e", r.gamma2, r.l_spk, r.l_sp, r.delta, r.residual);
    std::cout << buf << '\n';
    os << buf << '\n';
  }
  return 0;
}

int cmd_report(const Globals& g, const std::string& bundle_path) {
  std::ifstream is(bundle_path);
  if (!is) throw ConfigError("cannot open bundle '" + bundle_path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("bundle is not valid JSON: ") + e.what());
  }
  const ResultBundle b = bundle_from_json(j);
  write_reports(b, g.out);
  std::cout << "re-aggregated " << b.models.size() << " models into " << g.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Derivative-free online learning of inverse dynamics"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "Experiment configuration (JSON)");
  auto* seed_opt = app.add_option("--seed", seed, "Base random seed (overrides the config)");
  app.add_option("--out", g.out, "Output directory");

  auto* sim = app.add_subcommand("simulate", "Write the two synthetic datasets as CSV");
  auto* fit = app.add_subcommand("fit-hypers", "Estimate hyperparameters on the init split");
  auto* run = app.add_subcommand("run-online", "Run the full online protocol and write reports");
  auto* rff = app.add_subcommand("rff-check", "Random-feature kernel approximation table");
  std::vector<Index> rff_dims{100, 1000, 5000, 20000};
  Index rff_m = 8, rff_pairs = 1000;
  double rff_width = 1.0;
  rff->add_option("--dims", rff_dims, "Numbers of frequency pairs d")->delimiter(',');
  rff->add_option("--input-dim", rff_m, "Input dimension m");
  rff->add_option("--pairs", rff_pairs, "Number of random input pairs");
  rff->add_option("--width", rff_width, "Kernel width");
  auto* prop = app.add_subcommand("prop-check", "SP/SPK likelihood convergence table");
  Index prop_n = 50, prop_p = 3;
  bool prop_analytic = false;
  prop->add_option("--n", prop_n, "Number of observations");
  prop->add_option("--p", prop_p, "Number of mean parameters");
  prop->add_flag("--analytic", prop_analytic, "Use Psi = 1, R = I (limit log N)");
  auto* rep = app.add_subcommand("report", "Rebuild report files from a bundle");
  std::string bundle = "bundle.json";
  rep->add_option("--bundle", bundle, "Bundle written by run-online");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*sim) return cmd_simulate(g);
    if (*fit) return cmd_fit_hypers(g);
    if (*run) return cmd_run_online(g);
    if (*rff) return cmd_rff_check(g, rff_dims, rff_m, rff_pairs, rff_width);
    if (*prop) return cmd_prop_check(g, prop_n, prop_p, prop_analytic);
    if (*rep) return cmd_report(g, bundle);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const WorkspaceError& e) {
    std::cerr << "configuration error: " << e.what() << " (sample " << e.sample() << ")\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  }
  return 2;
}
