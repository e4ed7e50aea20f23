#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nrho/dynamics.hpp"

namespace nrho {

struct CorrectorSettings {
  int max_iterations = 30;
  double residual_tol = 1e-12;
  /// true: Newton Jacobian from the variational equations; false: central finite differences.
  bool variational = true;
  IntegratorSettings integrator{1e-13, 1e-13};
};

/// Starting point for the symmetric corrector: a state on the xz plane with vx = vz = 0.
struct HaloGuess {
  SynodicState state;
  double period = 0.0;  // normalized; 0 if unknown
};

class CorrectorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Converged periodic orbit. Time zero is the perilune crossing of the xz plane.
struct PeriodicOrbit {
  SystemConstants constants;
  SynodicState initial_state;
  double period = 0.0;  // normalized
  Mat6 monodromy = Mat6::Identity();
  double stability_index = 1.0;
  double perilune_radius_km = 0.0;
  double periodicity_residual = 0.0;
  int iterations = 0;
  Trajectory samples;  // one period of 6-vectors, dense

  [[nodiscard]] double period_days() const { return period * constants.time_unit_s() / 86400.0; }
  [[nodiscard]] double perilune_altitude_km() const {
    return perilune_radius_km - constants.moon_radius_km;
  }
  /// Interpolated state, t wrapped into [0, period).
  [[nodiscard]] SynodicState state_at(double t) const;
};

/// Newton iteration on the half-period perpendicular crossing conditions.
/// With `perilune_radius` (normalized) the distance of the crossing point to the Moon is held
/// at that value and x0, z0, vy0 are free; otherwise z0 is held and x0, vy0 are free.
PeriodicOrbit correct_halo(const HaloGuess& guess, const SystemConstants& c,
                           const CorrectorSettings& settings = {},
                           std::optional<double> perilune_radius = std::nullopt);

/// nu = (lambda_max + 1/lambda_max) / 2 with lambda_max the largest-magnitude real eigenvalue.
/// Falls back to the largest modulus overall when no real eigenvalue exceeds one.
double stability_index(const Mat6& monodromy);

/// Natural-parameter continuation in perilune radius. Returns the seed followed by every member
/// that converged; stops early (partial family) if the corrector stalls.
std::vector<PeriodicOrbit> continue_family(const PeriodicOrbit& seed, int steps,
                                           double step_km, const SystemConstants& c,
                                           const CorrectorSettings& settings = {});

/// Approximate perilune states of Southern L2 NRHOs in the Earth-Moon system.
std::vector<HaloGuess> nrho_seed_table();

/// Target orbit with the requested perilune altitude above the lunar surface: picks the nearest
/// seed, continues toward the requested radius and corrects onto it.
PeriodicOrbit southern_nrho(double perilune_altitude_km, const SystemConstants& c,
                            const CorrectorSettings& settings = {});

/// Ephemeris lookup (period-wrapped).
SynodicState target_ephemeris(const PeriodicOrbit& orbit, double t);

/// Eigenvalues of the monodromy matrix.
Eigen::Matrix<std::complex<double>, 6, 1> monodromy_eigenvalues(const Mat6& monodromy);

/// JSON serialization (schema "nrho.orbit", version 1).
std::string serialize_orbit(const PeriodicOrbit& orbit);
PeriodicOrbit deserialize_orbit(const std::string& text);
void save_orbit(const PeriodicOrbit& orbit, const std::string& path);
PeriodicOrbit load_orbit(const std::string& path);

/// Checks periodicity, det(M), reciprocal pairing and the unit pair. Empty when all hold.
std::vector<std::string> orbit_invariant_violations(const PeriodicOrbit& orbit);

}  // namespace nrho
