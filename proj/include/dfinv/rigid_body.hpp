#pragma once

// Planar serial manipulator: closed-form inverse dynamics and the rigid-body
// regressor that is linear in the base inertial parameters.
//
// Conventions: joint angles are relative, the first one measured from the
// in-plane x axis; in-plane gravity `g` pulls along -y. A horizontal arm
// plane therefore has g = 0.

#include "dfinv/core.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace dfinv {

struct ArmModel {
  std::vector<double> link_lengths;    // m
  std::vector<double> link_masses;     // kg
  std::vector<double> link_inertias;   // kg m^2, about the link centre of mass
  std::vector<double> com_offsets;     // m, joint axis to centre of mass along the link
  double gravity = 9.81;               // m/s^2, in-plane component
  std::vector<double> friction_viscous;  // N m s/rad
  std::vector<double> friction_coulomb;  // N m

  std::size_t n_dof() const { return link_lengths.size(); }

  void validate() const {
    const std::size_t n = n_dof();
    detail::require(n >= 1, "ArmModel: n_dof must be >= 1");
    auto same = [n](const std::vector<double>& v) { return v.size() == n; };
    detail::require(same(link_masses) && same(link_inertias) && same(com_offsets) &&
                        same(friction_viscous) && same(friction_coulomb),
                    "ArmModel: per-link arrays must all have n_dof entries");
    for (std::size_t i = 0; i < n; ++i) {
      detail::require(link_lengths[i] > 0 && link_masses[i] > 0 && link_inertias[i] > 0 &&
                          com_offsets[i] > 0,
                      "ArmModel: lengths, masses, inertias and com offsets must be > 0");
      detail::require(friction_viscous[i] >= 0 && friction_coulomb[i] >= 0,
                      "ArmModel: friction coefficients must be >= 0");
    }
    detail::require(std::isfinite(gravity), "ArmModel: gravity must be finite");
  }

  ArmModel frictionless() const {
    ArmModel a = *this;
    std::fill(a.friction_viscous.begin(), a.friction_viscous.end(), 0.0);
    std::fill(a.friction_coulomb.begin(), a.friction_coulomb.end(), 0.0);
    return a;
  }

  ArmModel with_gravity(double g) const {
    ArmModel a = *this;
    a.gravity = g;
    return a;
  }

  /// Reference two-link arm used by the default experiments.
  static ArmModel two_link_default() {
    ArmModel a;
    a.link_lengths = {0.30, 0.25};
    a.link_masses = {1.5, 1.0};
    a.link_inertias = {0.0113, 0.0052};
    a.com_offsets = {0.15, 0.12};
    a.gravity = 9.81;
    a.friction_viscous = {0.05, 0.04};
    a.friction_coulomb = {0.10, 0.08};
    return a;
  }
};

/// x = [q; qd; qdd], m = 3 n.
struct InputLocation {
  Vec q, qd, qdd;

  std::size_t n_dof() const { return static_cast<std::size_t>(q.size()); }

  Vec stacked() const {
    Vec x(3 * q.size());
    x << q, qd, qdd;
    return x;
  }

  static InputLocation from_stacked(const Eigen::Ref<const Vec>& x, std::size_t n) {
    detail::require(x.size() == static_cast<Index>(3 * n),
                    "InputLocation: stacked vector must have 3*n_dof entries");
    const Index ni = static_cast<Index>(n);
    return {x.segment(0, ni), x.segment(ni, ni), x.segment(2 * ni, ni)};
  }
};

/// Geometry the regressor needs: number of links and in-plane gravity.
struct RbdGeometry {
  std::size_t n_dof = 2;
  double gravity = 9.81;

  /// p: 2 for one link, 5 for two links.
  std::size_t parameter_count() const {
    if (n_dof == 1) return 2;
    if (n_dof == 2) return 5;
    throw std::invalid_argument("RbdGeometry: regressor available for 1 and 2 links only");
  }

  static RbdGeometry of(const ArmModel& arm) { return {arm.n_dof(), arm.gravity}; }
};

/// Base parameters pi matching `rbd_regressor`.
///
/// One link:  [J1, m1 c1]
/// Two links: [J1 + m2 l1^2, J2, m2 l1 c2, m1 c1 + m2 l1, m2 c2]
/// with Ji = Ii + mi ci^2 the inertia about joint i and ci the com offset.
/// Entries 0-1 are the inertia groups, 2 the inertial coupling group,
/// 3-4 the gravity (first-moment) groups.
inline Vec base_parameters(const ArmModel& arm) {
  arm.validate();
  const auto& l = arm.link_lengths;
  const auto& m = arm.link_masses;
  const auto& I = arm.link_inertias;
  const auto& c = arm.com_offsets;
  if (arm.n_dof() == 1) {
    Vec pi(2);
    pi << I[0] + m[0] * c[0] * c[0], m[0] * c[0];
    return pi;
  }
  if (arm.n_dof() == 2) {
    Vec pi(5);
    pi << I[0] + m[0] * c[0] * c[0] + m[1] * l[0] * l[0], I[1] + m[1] * c[1] * c[1],
        m[1] * l[0] * c[1], m[0] * c[0] + m[1] * l[0], m[1] * c[1];
    return pi;
  }
  throw std::invalid_argument("base_parameters: available for 1 and 2 links only");
}

/// psi(x) in R^{p x n}; torques = psi^T pi. Column k is the regressor of joint k.
inline Mat rbd_regressor(const Eigen::Ref<const Vec>& x, const RbdGeometry& geom) {
  const std::size_t n = geom.n_dof;
  if (x.size() != static_cast<Index>(3 * n))
    throw std::invalid_argument("rbd_regressor: input location has wrong dimension");
  const double g = geom.gravity;
  if (n == 1) {
    Mat psi(2, 1);
    psi << x(2), g * std::cos(x(0));
    return psi;
  }
  if (n == 2) {
    const double q1 = x(0), q2 = x(1), qd1 = x(2), qd2 = x(3), qdd1 = x(4), qdd2 = x(5);
    const double c1 = std::cos(q1), c2 = std::cos(q2), s2 = std::sin(q2);
    const double c12 = std::cos(q1 + q2);
    Mat psi(5, 2);
    psi(0, 0) = qdd1;
    psi(1, 0) = qdd1 + qdd2;
    psi(2, 0) = (2.0 * qdd1 + qdd2) * c2 - s2 * (2.0 * qd1 * qd2 + qd2 * qd2);
    psi(3, 0) = g * c1;
    psi(4, 0) = g * c12;
    psi(0, 1) = 0.0;
    psi(1, 1) = qdd1 + qdd2;
    psi(2, 1) = c2 * qdd1 + s2 * qd1 * qd1;
    psi(3, 1) = 0.0;
    psi(4, 1) = g * c12;
    return psi;
  }
  throw std::invalid_argument("rbd_regressor: available for 1 and 2 links only");
}

namespace detail {

inline double cross2(double ax, double ay, double bx, double by) { return ax * by - ay * bx; }

inline double sign0(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

}  // namespace detail

/// Rigid-body torques M(q) qdd + C(q, qd) qd + G(q) for any number of planar links
/// (recursive Newton-Euler), plus viscous and Coulomb friction (sign(0) = 0).
inline Vec inverse_dynamics(const InputLocation& x, const ArmModel& arm) {
  const std::size_t n = arm.n_dof();
  if (x.q.size() != static_cast<Index>(n) || x.qd.size() != static_cast<Index>(n) ||
      x.qdd.size() != static_cast<Index>(n))
    throw std::invalid_argument("inverse_dynamics: input location does not match arm");

  std::vector<double> rx(n), ry(n), cx(n), cy(n), dw(n), acx(n), acy(n);
  double phi = 0, omega = 0, alpha = 0;
  // Gravity enters as an upward acceleration of the base.
  double aox = 0, aoy = arm.gravity;
  for (std::size_t i = 0; i < n; ++i) {
    phi += x.q(static_cast<Index>(i));
    omega += x.qd(static_cast<Index>(i));
    alpha += x.qdd(static_cast<Index>(i));
    const double ux = std::cos(phi), uy = std::sin(phi);
    rx[i] = arm.link_lengths[i] * ux;
    ry[i] = arm.link_lengths[i] * uy;
    cx[i] = arm.com_offsets[i] * ux;
    cy[i] = arm.com_offsets[i] * uy;
    dw[i] = alpha;
    acx[i] = aox - alpha * cy[i] - omega * omega * cx[i];
    acy[i] = aoy + alpha * cx[i] - omega * omega * cy[i];
    aox += -alpha * ry[i] - omega * omega * rx[i];
    aoy += alpha * rx[i] - omega * omega * ry[i];
  }

  Vec tau(static_cast<Index>(n));
  double fx = 0, fy = 0, moment = 0;
  for (std::size_t k = n; k-- > 0;) {
    const double m = arm.link_masses[k];
    const double fnx = fx, fny = fy;
    moment = moment + detail::cross2(rx[k], ry[k], fnx, fny) +
             detail::cross2(cx[k], cy[k], m * acx[k], m * acy[k]) + arm.link_inertias[k] * dw[k];
    fx = fnx + m * acx[k];
    fy = fny + m * acy[k];
    const Index ki = static_cast<Index>(k);
    tau(ki) = moment + arm.friction_viscous[k] * x.qd(ki) +
              arm.friction_coulomb[k] * detail::sign0(x.qd(ki));
  }
  return tau;
}

}  // namespace dfinv
