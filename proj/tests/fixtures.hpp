#pragma once

// Shared data builders for the tests.

#include "dfinv/model.hpp"
#include "dfinv/trajectory.hpp"

namespace fixture {

using dfinv::Index;
using dfinv::Mat;
using dfinv::Vec;

struct ArmData {
  Mat Z;  // N x 6: q, qd, qdd
  Mat Y;  // N x 2
};

inline ArmData arm_data(std::size_t n, bool friction, dfinv::CirclePlane plane = dfinv::CirclePlane::XZ) {
  dfinv::ArmModel arm = dfinv::ArmModel::two_link_default();
  if (!friction) arm = arm.frictionless();
  dfinv::CircleTrajectory tr;
  tr.plane = plane;
  tr.center_x = 0.3;
  tr.center_y = -0.1;
  tr.duration = static_cast<double>(n) * tr.sample_period;
  const dfinv::TrajectoryDataset ds = dfinv::simulate_circles(arm, tr, 4);
  ArmData d;
  d.Z.resize(static_cast<Index>(ds.size()), 6);
  d.Z << ds.positions, ds.true_velocities, ds.true_accelerations;
  d.Y = ds.torques;
  return d;
}

inline Mat random_mat(Index r, Index c, dfinv::Rng& rng) {
  std::normal_distribution<double> n01;
  Mat m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = n01(rng);
  return m;
}

inline dfinv::HyperVector hv(double s2, std::optional<double> r2 = std::nullopt,
                             std::optional<double> tau = std::nullopt, std::optional<double> g2 = std::nullopt) {
  dfinv::HyperVector h;
  h.sigma2 = s2;
  h.rho2 = r2;
  h.tau = tau;
  h.gamma2 = g2;
  return h;
}

}  // namespace fixture
