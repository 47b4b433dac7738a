#pragma once

// Synthetic circle-tracking datasets for the two-link arm, noise injection and
// the dataset CSV format.

#include "dfinv/rigid_body.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace dfinv {

enum class CirclePlane { XY, XZ };

inline std::string to_string(CirclePlane p) { return p == CirclePlane::XY ? "XY" : "XZ"; }

inline CirclePlane plane_from_string(const std::string& s) {
  if (s == "XY") return CirclePlane::XY;
  if (s == "XZ") return CirclePlane::XZ;
  throw ConfigError("unknown circle plane '" + s + "' (expected XY or XZ)");
}

struct TrajectoryDataset {
  double sample_period = 0.05;
  Vec timestamps;
  Mat positions;  // N x n
  Mat torques;    // N x n_out
  // Kept for oracle checks only; empty when unknown.
  Mat true_velocities;
  Mat true_accelerations;
  // In-plane gravity the torques were generated with.
  double gravity = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(timestamps.size()); }
  std::size_t n_dof() const { return static_cast<std::size_t>(positions.cols()); }
  std::size_t n_out() const { return static_cast<std::size_t>(torques.cols()); }
  bool has_truth() const { return true_velocities.size() > 0; }

  void validate() const {
    const Index n = timestamps.size();
    detail::require(positions.rows() == n && torques.rows() == n,
                    "TrajectoryDataset: positions and torques must have one row per timestamp");
    detail::require(sample_period > 0, "TrajectoryDataset: sample_period must be > 0");
    for (Index i = 1; i < n; ++i) {
      const double dt = timestamps(i) - timestamps(i - 1);
      detail::require(dt > 0 && std::abs(dt - sample_period) <= 1e-9 * (1.0 + sample_period),
                      "TrajectoryDataset: timestamps must be uniformly spaced by sample_period");
    }
    if (has_truth())
      detail::require(true_velocities.rows() == n && true_accelerations.rows() == n &&
                          true_velocities.cols() == positions.cols() &&
                          true_accelerations.cols() == positions.cols(),
                      "TrajectoryDataset: truth columns do not match positions");
  }

  /// Rows [begin, begin + count).
  TrajectoryDataset slice(std::size_t begin, std::size_t count) const {
    detail::require(begin + count <= size(), "TrajectoryDataset::slice out of range");
    const Index b = static_cast<Index>(begin), c = static_cast<Index>(count);
    TrajectoryDataset out;
    out.sample_period = sample_period;
    out.gravity = gravity;
    out.timestamps = timestamps.segment(b, c);
    out.positions = positions.middleRows(b, c);
    out.torques = torques.middleRows(b, c);
    if (has_truth()) {
      out.true_velocities = true_velocities.middleRows(b, c);
      out.true_accelerations = true_accelerations.middleRows(b, c);
    }
    return out;
  }
};

struct CircleTrajectory {
  CirclePlane plane = CirclePlane::XY;
  double center_x = 0.35;  // m, in the arm plane
  double center_y = 0.10;
  double radius = 0.10;
  double period = 1.25;         // s per revolution
  double duration = 500.0;      // s
  double sample_period = 0.05;  // s
  bool elbow_up = true;
};

namespace detail {

struct TwoLinkState {
  Vec q, qd, qdd;
};

// Closed-form inverse kinematics of the end-effector path p(t) with analytic
// derivatives. Returns nullopt when p is not strictly inside the workspace.
inline std::optional<TwoLinkState> two_link_ik(double l1, double l2, bool elbow_up, double px,
                                                double py, double vx, double vy, double ax,
                                                double ay) {
  const double r2 = px * px + py * py;
  const double D = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
  if (!(D > -1.0 + 1e-9 && D < 1.0 - 1e-9)) return std::nullopt;
  const double q2 = (elbow_up ? 1.0 : -1.0) * std::acos(D);
  const double q1 = std::atan2(py, px) - std::atan2(l2 * std::sin(q2), l1 + l2 * std::cos(q2));
  const double s1 = std::sin(q1), c1 = std::cos(q1);
  const double s12 = std::sin(q1 + q2), c12 = std::cos(q1 + q2);
  Eigen::Matrix2d J;
  J << -l1 * s1 - l2 * s12, -l2 * s12, l1 * c1 + l2 * c12, l2 * c12;
  const Eigen::Vector2d qd = J.partialPivLu().solve(Eigen::Vector2d(vx, vy));
  const double w1 = qd(0), w12 = qd(0) + qd(1);
  const Eigen::Vector2d bias(-l1 * c1 * w1 * w1 - l2 * c12 * w12 * w12,
                             -l1 * s1 * w1 * w1 - l2 * s12 * w12 * w12);
  const Eigen::Vector2d qdd = J.partialPivLu().solve(Eigen::Vector2d(ax, ay) - bias);
  TwoLinkState s;
  s.q = Vec(2);
  s.q << q1, q2;
  s.qd = qd;
  s.qdd = qdd;
  return s;
}

}  // namespace detail

/// End effector of a two-link arm tracking a circle; torques from `inverse_dynamics`
/// on the analytic joint velocities and accelerations. XY puts the arm plane
/// horizontal (no in-plane gravity), XZ vertical (full gravity).
///
/// The seed picks the starting phase on the circle.
inline TrajectoryDataset simulate_circles(const ArmModel& arm, const CircleTrajectory& traj,
                                          std::uint64_t seed) {
  arm.validate();
  detail::require(arm.n_dof() == 2, "simulate_circles: requires a two-link arm");
  detail::require(traj.radius >= 0 && traj.sample_period > 0 && traj.duration > 0,
                  "simulate_circles: radius >= 0, positive sample period and duration required");
  detail::require(traj.period > 2.0 * traj.sample_period,
                  "simulate_circles: period must exceed two sample periods");

  const double g = traj.plane == CirclePlane::XY ? 0.0 : arm.gravity;
  const ArmModel plant = arm.with_gravity(g);
  const auto n_samples = static_cast<std::size_t>(std::llround(traj.duration / traj.sample_period));

  Rng rng(seed);
  const double phase0 = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
  const double w = 2.0 * std::numbers::pi / traj.period;
  const double l1 = arm.link_lengths[0], l2 = arm.link_lengths[1];

  TrajectoryDataset ds;
  ds.sample_period = traj.sample_period;
  ds.gravity = g;
  const Index N = static_cast<Index>(n_samples);
  ds.timestamps.resize(N);
  ds.positions.resize(N, 2);
  ds.torques.resize(N, 2);
  ds.true_velocities.resize(N, 2);
  ds.true_accelerations.resize(N, 2);

  double prev_q1 = 0.0;
  for (Index i = 0; i < N; ++i) {
    const double t = static_cast<double>(i) * traj.sample_period;
    const double a = w * t + phase0;
    const double r = traj.radius;
    const auto st = detail::two_link_ik(
        l1, l2, traj.elbow_up, traj.center_x + r * std::cos(a), traj.center_y + r * std::sin(a),
        -r * w * std::sin(a), r * w * std::cos(a), -r * w * w * std::cos(a),
        -r * w * w * std::sin(a));
    if (!st) {
      std::ostringstream msg;
      msg << "simulate_circles: end-effector path leaves the workspace at sample " << i
          << " (t = " << t << " s)";
      throw WorkspaceError(static_cast<std::size_t>(i), msg.str());
    }
    InputLocation x{st->q, st->qd, st->qdd};
    // Keep the shoulder angle continuous across the atan2 branch cut.
    if (i > 0) {
      while (x.q(0) - prev_q1 > std::numbers::pi) x.q(0) -= 2.0 * std::numbers::pi;
      while (x.q(0) - prev_q1 < -std::numbers::pi) x.q(0) += 2.0 * std::numbers::pi;
    }
    prev_q1 = x.q(0);
    ds.timestamps(i) = t;
    ds.positions.row(i) = x.q.transpose();
    ds.true_velocities.row(i) = x.qd.transpose();
    ds.true_accelerations.row(i) = x.qdd.transpose();
    ds.torques.row(i) = inverse_dynamics(x, plant).transpose();
  }
  return ds;
}

/// Adds iid zero-mean Gaussian noise to positions (sigma_q) and torques
/// (sigma_y, one entry per output). Truth columns are left untouched.
inline TrajectoryDataset add_noise(const TrajectoryDataset& ds, double sigma_q,
                                   const Vec& sigma_y, std::uint64_t seed) {
  detail::require(sigma_q >= 0 && (sigma_y.array() >= 0).all(), "add_noise: sigmas must be >= 0");
  detail::require(sigma_y.size() == static_cast<Index>(ds.n_out()),
                  "add_noise: one torque sigma per output required");
  TrajectoryDataset out = ds;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  if (sigma_q > 0) {
    for (Index i = 0; i < out.positions.rows(); ++i)
      for (Index j = 0; j < out.positions.cols(); ++j) out.positions(i, j) += sigma_q * normal(rng);
  }
  for (Index i = 0; i < out.torques.rows(); ++i)
    for (Index j = 0; j < out.torques.cols(); ++j)
      if (sigma_y(j) > 0) out.torques(i, j) += sigma_y(j) * normal(rng);
  return out;
}

inline TrajectoryDataset add_noise(const TrajectoryDataset& ds, double sigma_q, double sigma_y,
                                   std::uint64_t seed) {
  return add_noise(ds, sigma_q, Vec::Constant(static_cast<Index>(ds.n_out()), sigma_y), seed);
}

/// Root mean square of each torque column.
inline Vec torque_rms(const TrajectoryDataset& ds) {
  return (ds.torques.array().square().colwise().mean()).sqrt().transpose();
}

// ---------------------------------------------------------------------------
// CSV: header t,q1..qn,y1..yk[,qd1..qdn,qdd1..qddn]; %.17e; LF line endings.

inline void write_csv(std::ostream& os, const TrajectoryDataset& ds) {
  const std::size_t n = ds.n_dof(), k = ds.n_out();
  os << "t";
  for (std::size_t j = 1; j <= n; ++j) os << ",q" << j;
  for (std::size_t j = 1; j <= k; ++j) os << ",y" << j;
  if (ds.has_truth()) {
    for (std::size_t j = 1; j <= n; ++j) os << ",qd" << j;
    for (std::size_t j = 1; j <= n; ++j) os << ",qdd" << j;
  }
  os << '\n';
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17e", v);
    os << buf;
  };
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Index r = static_cast<Index>(i);
    put(ds.timestamps(r));
    for (Index j = 0; j < ds.positions.cols(); ++j) os << ',', put(ds.positions(r, j));
    for (Index j = 0; j < ds.torques.cols(); ++j) os << ',', put(ds.torques(r, j));
    if (ds.has_truth()) {
      for (Index j = 0; j < ds.true_velocities.cols(); ++j) os << ',', put(ds.true_velocities(r, j));
      for (Index j = 0; j < ds.true_accelerations.cols(); ++j)
        os << ',', put(ds.true_accelerations(r, j));
    }
    os << '\n';
  }
}

/// Parses the dataset CSV. Gravity is not part of the CSV; pass it explicitly.
inline TrajectoryDataset read_csv(std::istream& is, double gravity = 0.0) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("dataset CSV: empty input");
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  std::size_t n = 0, k = 0, nd = 0, ndd = 0;
  if (cols.empty() || cols[0] != "t") throw ConfigError("dataset CSV: first column must be 't'");
  for (std::size_t i = 1; i < cols.size(); ++i) {
    const auto& c = cols[i];
    if (c.rfind("qdd", 0) == 0) ++ndd;
    else if (c.rfind("qd", 0) == 0) ++nd;
    else if (c.rfind("q", 0) == 0) ++n;
    else if (c.rfind("y", 0) == 0) ++k;
    else throw ConfigError("dataset CSV: unexpected column '" + c + "'");
  }
  if (n == 0 || k == 0) throw ConfigError("dataset CSV: need at least one q and one y column");
  if (!((nd == 0 && ndd == 0) || (nd == n && ndd == n)))
    throw ConfigError("dataset CSV: qd/qdd columns must both be present for every joint");

  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> r;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) {
      try {
        r.push_back(std::stod(c));
      } catch (const std::exception&) {
        throw ConfigError("dataset CSV: bad number on line " + std::to_string(lineno));
      }
    }
    if (r.size() != cols.size())
      throw ConfigError("dataset CSV: wrong field count on line " + std::to_string(lineno));
    rows.push_back(std::move(r));
  }
  const Index N = static_cast<Index>(rows.size());
  TrajectoryDataset ds;
  ds.gravity = gravity;
  ds.timestamps.resize(N);
  ds.positions.resize(N, static_cast<Index>(n));
  ds.torques.resize(N, static_cast<Index>(k));
  if (nd > 0) {
    ds.true_velocities.resize(N, static_cast<Index>(n));
    ds.true_accelerations.resize(N, static_cast<Index>(n));
  }
  for (Index i = 0; i < N; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    std::size_t c = 0;
    ds.timestamps(i) = r[c++];
    for (std::size_t j = 0; j < n; ++j) ds.positions(i, static_cast<Index>(j)) = r[c++];
    for (std::size_t j = 0; j < k; ++j) ds.torques(i, static_cast<Index>(j)) = r[c++];
    for (std::size_t j = 0; j < nd; ++j) ds.true_velocities(i, static_cast<Index>(j)) = r[c++];
    for (std::size_t j = 0; j < ndd; ++j) ds.true_accelerations(i, static_cast<Index>(j)) = r[c++];
  }
  ds.sample_period = N > 1 ? ds.timestamps(1) - ds.timestamps(0) : 1.0;
  ds.validate();
  return ds;
}

}  // namespace dfinv
