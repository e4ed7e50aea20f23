#pragma once

#include <memory>
#include <random>

#include "nrho/scenario.hpp"

namespace nrho::test {

/// Target orbit as used by the scenarios: selected at 15674 km, dimensionalized with D.
inline std::shared_ptr<const PeriodicOrbit> target_orbit() {
  static const auto orbit = std::make_shared<const PeriodicOrbit>(select_orbit(impulsive_scenario()));
  return orbit;
}

inline const SystemConstants& system() {
  static const SystemConstants c = SystemConstants::earth_moon(kEarthMoonMinDistanceKm);
  return c;
}

/// Seconds from perilune to apolune.
inline double half_period_s() {
  return 0.5 * target_orbit()->period * system().time_unit_s();
}

inline MatX random_matrix(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  MatX m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

inline double max_abs(const MatX& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace nrho::test
