#pragma once

#include "nrho/orbits.hpp"

namespace nrho {

class DegenerateFrameError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Target LVLH frame. Angular rates are in LVLH components (rad/s, rad/s^2);
/// positions in metres.
struct LvlhFrame {
  Mat3 dcm = Mat3::Identity();  // synodic -> LVLH, rows are i_L, j_L, k_L
  Vec3 omega_ls = Vec3::Zero();
  Vec3 omega_dot_ls = Vec3::Zero();
  Vec3 omega_li = Vec3::Zero();
  Vec3 omega_dot_li = Vec3::Zero();
  Vec3 r_target = Vec3::Zero();  // synodic axes, origin at the barycentre
  Vec3 r1t = Vec3::Zero();       // target relative to primary 1, LVLH axes
  Vec3 r2t = Vec3::Zero();       // target relative to primary 2, LVLH axes
};

/// Relative chaser state in LVLH axes (m, m/s).
struct RelativeState {
  Vec3 rho = Vec3::Zero();
  Vec3 rho_dot = Vec3::Zero();

  [[nodiscard]] Vec6 vector() const {
    Vec6 x;
    x << rho, rho_dot;
    return x;
  }
  static RelativeState from_vector(const Vec6& x) { return {x.head<3>(), x.tail<3>()}; }
};

/// Frame built from an uncontrolled target state (normalized synodic units).
LvlhFrame lvlh_from_state(const Vec6& target, const SystemConstants& c);

/// Frame at time t (seconds from the orbit's t = 0) along the orbit, dimensionalized with c.
LvlhFrame lvlh_at(const PeriodicOrbit& orbit, double t, const SystemConstants& c);

/// Exact relative acceleration of the chaser in the target LVLH frame. u in m/s^2.
Vec6 relative_derivative_nonlinear(const Vec6& x, const LvlhFrame& f, const SystemConstants& c,
                                   const Vec3& u = Vec3::Zero());

/// A(t) of the linearized relative model, x' = A x + B u.
Mat6 linear_system_matrix(const LvlhFrame& f, const SystemConstants& c);

/// Relative state (LVLH, metric) of a chaser given both absolute synodic states (normalized).
Vec6 relative_from_absolute(const Vec6& chaser, const Vec6& target, const SystemConstants& c);

/// Inverse of relative_from_absolute.
Vec6 absolute_from_relative(const Vec6& rel, const Vec6& target, const SystemConstants& c);

}  // namespace nrho
