#pragma once

#include <functional>

#include "nrho/integrator.hpp"
#include "nrho/types.hpp"

namespace nrho {

inline constexpr double kEarthMoonMinDistanceKm = 363104.0;
inline constexpr double kEarthMoonSemimajorAxisKm = 384400.0;

/// Physical constants of a circular restricted three-body system.
struct SystemConstants {
  double mu1 = 398600.4;        // km^3/s^2
  double mu2 = 4904.869;        // km^3/s^2
  double distance_km = 363104;  // primary separation
  double moon_radius_km = 1737.4;

  [[nodiscard]] double mass_ratio() const { return mu2 / (mu1 + mu2); }
  /// rad/s
  [[nodiscard]] double mean_motion() const;
  [[nodiscard]] double length_unit_m() const { return distance_km * 1e3; }
  [[nodiscard]] double time_unit_s() const { return 1.0 / mean_motion(); }
  [[nodiscard]] double velocity_unit_mps() const { return length_unit_m() * mean_motion(); }

  /// Throws std::invalid_argument when the invariants do not hold.
  void validate() const;

  /// Earth-Moon system at the given separation (minimum distance by default).
  static SystemConstants earth_moon(double distance_km = 363104.0);
};

/// Position and velocity in the rotating synodic frame, normalized units.
struct SynodicState {
  Vec3 r = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  double t = 0.0;

  [[nodiscard]] Vec6 vector() const {
    Vec6 x;
    x << r, v;
    return x;
  }
  static SynodicState from_vector(const Vec6& x, double t = 0.0) {
    return {x.head<3>(), x.tail<3>(), t};
  }
};

/// Positions of the primaries in the synodic frame: (-mu, 0, 0) and (1 - mu, 0, 0).
Vec3 primary1_position(const SystemConstants& c);
Vec3 primary2_position(const SystemConstants& c);

/// Time derivative of (r, v) in the synodic frame. `control` is a normalized acceleration.
Vec6 cr3bp_derivative(const Vec6& x, const SystemConstants& c, const Vec3& control = Vec3::Zero());

/// Analytic Jacobian of cr3bp_derivative with respect to the state.
Mat6 cr3bp_jacobian(const Vec6& x, const SystemConstants& c);

/// Third time derivative of position along an uncontrolled trajectory (jerk).
Vec3 cr3bp_jerk(const Vec6& x, const SystemConstants& c);

/// C = x^2 + y^2 + 2(1-mu)/r1 + 2 mu/r2 - |v|^2
double jacobi_constant(const Vec6& x, const SystemConstants& c);

/// Equilibrium point L1..L5 (zero velocity).
SynodicState lagrange_point(int index, const SystemConstants& c);

/// Derivative of the 42-vector state (+) row-major Phi, with Phi' = A_syn Phi.
VecX variational_derivative(const VecX& augmented, const SystemConstants& c);

using ControlLaw = std::function<Vec3(double)>;

/// Integrates the controlled equations of motion; the returned trajectory holds 6-vectors.
Trajectory propagate(const SynodicState& start, double t_end, const SystemConstants& c,
                     const IntegratorSettings& settings, const ControlLaw& control = {});

/// Integrates state and STM together from Phi = I. Returns the 42-vector trajectory.
Trajectory propagate_with_stm(const SynodicState& start, double t_end, const SystemConstants& c,
                              const IntegratorSettings& settings);

/// Unpacks the row-major STM stored in a 42-vector.
Mat6 stm_from_augmented(const VecX& augmented);

}  // namespace nrho
