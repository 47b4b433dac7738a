#include "catch2/catch_amalgamated.hpp"
#include "oracles.hpp"

#include "dfinv/input_locations.hpp"
#include "dfinv/trajectory.hpp"

#include <sstream>

using namespace dfinv;
using Catch::Approx;

TEST_CASE("regressor matches the energy-method Lagrangian torques", "[rigid_body]") {
  const ArmModel arm = ArmModel::two_link_default().frictionless();
  const Vec pi = base_parameters(arm);
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const InputLocation x = oracle::random_state(2, rng);
    const Vec tau_ref = oracle::lagrangian_torques(arm, x);
    const Vec tau_psi = rbd_regressor(x.stacked(), RbdGeometry::of(arm)).transpose() * pi;
    const Vec tau_rnea = inverse_dynamics(x, arm);
    CHECK((tau_psi - tau_ref).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((tau_rnea - tau_psi).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("one-link arm", "[rigid_body]") {
  ArmModel arm;
  arm.link_lengths = {0.4};
  arm.link_masses = {2.0};
  arm.link_inertias = {0.03};
  arm.com_offsets = {0.2};
  arm.friction_viscous = {0.0};
  arm.friction_coulomb = {0.0};
  arm.gravity = 9.81;
  SECTION("static gravity torque") {
    InputLocation x{Vec::Constant(1, 0.7), Vec::Zero(1), Vec::Zero(1)};
    const double expected = 2.0 * 0.2 * 9.81 * std::cos(0.7);
    CHECK(inverse_dynamics(x, arm)(0) == Approx(expected).epsilon(1e-12));
    const Vec pi = base_parameters(arm);
    CHECK((rbd_regressor(x.stacked(), RbdGeometry::of(arm)).transpose() * pi)(0) == Approx(expected).epsilon(1e-12));
  }
  SECTION("random states against the energy oracle") {
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
      const InputLocation x = oracle::random_state(1, rng);
      CHECK(std::abs(inverse_dynamics(x, arm)(0) - oracle::lagrangian_torques(arm, x)(0)) < 1e-6);
    }
  }
}

TEST_CASE("regressor without gravity and at rest gives zero torque", "[rigid_body]") {
  Rng rng(3);
  const InputLocation x{Vec::Random(2), Vec::Zero(2), Vec::Zero(2)};
  const Mat psi = rbd_regressor(x.stacked(), RbdGeometry{2, 0.0});
  std::normal_distribution<double> n01;
  Vec pi(5);
  for (Index i = 0; i < 5; ++i) pi(i) = n01(rng);
  CHECK((psi.transpose() * pi).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("regressor linearity in the parameters", "[rigid_body]") {
  Rng rng(7);
  const InputLocation x = oracle::random_state(2, rng);
  const Mat psi = rbd_regressor(x.stacked(), RbdGeometry{2, 9.81});
  const Vec p1 = Vec::Random(5), p2 = Vec::Random(5);
  const double a = 1.7, b = -0.3;
  const Vec lhs = psi.transpose() * (a * p1 + b * p2);
  const Vec rhs = a * psi.transpose() * p1 + b * psi.transpose() * p2;
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("inverse dynamics edge cases", "[rigid_body]") {
  ArmModel arm = ArmModel::two_link_default().frictionless().with_gravity(0.0);
  const InputLocation rest{Vec::Random(2), Vec::Zero(2), Vec::Zero(2)};
  CHECK(inverse_dynamics(rest, arm).cwiseAbs().maxCoeff() == 0.0);

  ArmModel coul = ArmModel::two_link_default().with_gravity(0.0);
  coul.friction_viscous = {0.0, 0.0};
  // Constant positive joint rates produce Coriolis terms, so test the
  // friction contribution through the difference with the frictionless arm.
  const InputLocation moving{Vec::Random(2), Vec::Constant(2, 0.5), Vec::Zero(2)};
  const Vec diff = inverse_dynamics(moving, coul) - inverse_dynamics(moving, coul.frictionless());
  CHECK(diff(0) == Approx(0.10).epsilon(1e-12));
  CHECK(diff(1) == Approx(0.08).epsilon(1e-12));

  const InputLocation still{Vec::Random(2), Vec::Zero(2), Vec::Zero(2)};
  CHECK((inverse_dynamics(still, coul) - inverse_dynamics(still, coul.frictionless())).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(rbd_regressor(Vec::Zero(5), RbdGeometry{2, 9.81}), std::invalid_argument);
}

TEST_CASE("closed-cycle work of a conservative arm vanishes", "[rigid_body]") {
  const ArmModel arm = ArmModel::two_link_default().frictionless();
  CircleTrajectory tr;
  tr.plane = CirclePlane::XZ;
  tr.center_x = 0.3;
  tr.center_y = -0.1;
  tr.duration = 1.25;
  tr.sample_period = 1.25 / 2000.0;
  tr.period = 1.25;
  const TrajectoryDataset ds = simulate_circles(arm, tr, 3);
  double work = 0.0, peak = 0.0;
  for (Index t = 0; t < static_cast<Index>(ds.size()); ++t) {
    const double pw = ds.torques.row(t).dot(ds.true_velocities.row(t));
    work += pw * tr.sample_period;
    peak = std::max(peak, std::abs(pw));
  }
  CHECK(std::abs(work) < 1e-3 * peak);
}

TEST_CASE("simulated circles", "[trajectory]") {
  const ArmModel arm = ArmModel::two_link_default();
  CircleTrajectory tr;
  SECTION("sample counts") {
    const TrajectoryDataset ds = simulate_circles(arm, tr, 1);
    CHECK(ds.size() == 10000);
    CHECK(tr.period / tr.sample_period == Approx(25.0));
    // one revolution later the positions repeat
    CHECK((ds.positions.row(100) - ds.positions.row(125)).cwiseAbs().maxCoeff() < 1e-9);
  }
  SECTION("forward kinematics reproduces the circle") {
    tr.duration = 5.0;
    const TrajectoryDataset ds = simulate_circles(arm, tr, 2);
    for (Index t = 0; t < static_cast<Index>(ds.size()); ++t) {
      const double q1 = ds.positions(t, 0), q2 = ds.positions(t, 1);
      const double px = 0.30 * std::cos(q1) + 0.25 * std::cos(q1 + q2);
      const double py = 0.30 * std::sin(q1) + 0.25 * std::sin(q1 + q2);
      CHECK(std::hypot(px - tr.center_x, py - tr.center_y) == Approx(tr.radius).margin(1e-12));
    }
  }
  SECTION("torques come from inverse dynamics on the true derivatives") {
    tr.duration = 2.0;
    tr.plane = CirclePlane::XZ;
    const TrajectoryDataset ds = simulate_circles(arm, tr, 2);
    CHECK(ds.gravity == 9.81);
    for (Index t = 0; t < static_cast<Index>(ds.size()); t += 7) {
      InputLocation x{ds.positions.row(t).transpose(), ds.true_velocities.row(t).transpose(),
                      ds.true_accelerations.row(t).transpose()};
      CHECK((inverse_dynamics(x, arm) - ds.torques.row(t).transpose()).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SECTION("zero radius holds the arm still") {
    tr.radius = 0.0;
    tr.duration = 1.0;
    tr.plane = CirclePlane::XZ;
    const TrajectoryDataset ds = simulate_circles(arm, tr, 4);
    for (Index t = 1; t < static_cast<Index>(ds.size()); ++t) {
      CHECK((ds.positions.row(t) - ds.positions.row(0)).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((ds.torques.row(t) - ds.torques.row(0)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SECTION("determinism") {
    tr.duration = 3.0;
    const TrajectoryDataset a = simulate_circles(arm, tr, 9), b = simulate_circles(arm, tr, 9);
    CHECK(a.positions == b.positions);
    CHECK(a.torques == b.torques);
  }
  SECTION("unreachable circles name the first bad sample") {
    tr.center_x = 0.5;
    tr.radius = 0.1;
    tr.duration = 2.0;
    try {
      simulate_circles(arm, tr, 1);
      FAIL("expected a workspace error");
    } catch (const WorkspaceError& e) {
      CHECK(e.sample() < 25);
    }
  }
}

TEST_CASE("measurement noise", "[trajectory]") {
  CircleTrajectory tr;
  const TrajectoryDataset clean = simulate_circles(ArmModel::two_link_default(), tr, 1);
  SECTION("zero noise is bit-identical") {
    const TrajectoryDataset n = add_noise(clean, 0.0, 0.0, 5);
    CHECK(n.positions == clean.positions);
    CHECK(n.torques == clean.torques);
  }
  SECTION("position noise level") {
    const TrajectoryDataset n = add_noise(clean, 1e-3, 0.0, 5);
    const Mat d = n.positions - clean.positions;
    const double sd = std::sqrt(d.col(0).array().square().mean());
    CHECK(sd == Approx(1e-3).epsilon(0.05));
    CHECK(n.true_velocities == clean.true_velocities);
  }
  SECTION("same seed, same noise") {
    CHECK(add_noise(clean, 1e-3, 0.1, 8).torques == add_noise(clean, 1e-3, 0.1, 8).torques);
  }
}

TEST_CASE("dataset CSV round trip", "[trajectory]") {
  CircleTrajectory tr;
  tr.duration = 1.0;
  const TrajectoryDataset ds = simulate_circles(ArmModel::two_link_default(), tr, 1);
  std::stringstream ss;
  write_csv(ss, ds);
  const TrajectoryDataset back = read_csv(ss, ds.gravity);
  CHECK(back.positions == ds.positions);
  CHECK(back.torques == ds.torques);
  CHECK(back.true_accelerations == ds.true_accelerations);
  std::stringstream bad("t,q1,y1\n0,1\n");
  CHECK_THROWS_AS(read_csv(bad), ConfigError);
}

TEST_CASE("input locations and normalization", "[input_locations]") {
  CircleTrajectory tr;
  const TrajectoryDataset ds = simulate_circles(ArmModel::two_link_default(), tr, 1);
  const InputLocationSet s = build_input_locations(ds, DerivativeSource::True, {}, 1000);
  CHECK(s.x.cols() == 6);
  const Mat nx = s.normalizer.apply_rows(s.x.topRows(1000));
  for (Index j = 0; j < 6; ++j) {
    const double m = nx.col(j).mean();
    CHECK(std::sqrt((nx.col(j).array() - m).square().mean()) == Approx(1.0).epsilon(1e-12));
  }
  TrajectoryDataset flat = ds.slice(0, 50);
  flat.positions.setConstant(0.3);
  flat.true_velocities.setZero();
  flat.true_accelerations.setZero();
  const InputLocationSet f = build_input_locations(flat, DerivativeSource::True, {}, 50);
  CHECK(f.normalizer.scale == Vec::Ones(6));
  CHECK(f.warnings.size() == 6);
}
