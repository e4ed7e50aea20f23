#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nrho/sim.hpp"

namespace nrho {

/// Raised when a scenario file does not parse or validate; holds every offending field.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors);
  [[nodiscard]] const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

struct OrbitSelection {
  double perilune_surface_km = 15674.0;
  /// Primary separation used to dimensionalize the family when selecting by altitude.
  double reference_distance_km = kEarthMoonSemimajorAxisKm;
  std::string file;  // serialized orbit; overrides the altitude selection when set
};

struct CampaignSettings {
  int runs = 100;
  std::uint64_t base_seed = 1;
  std::vector<ControllerMode> modes{ControllerMode::robust, ControllerMode::nominal};
  int parallelism = 1;
};

struct ScenarioConfig {
  std::string name = "impulsive";
  SystemConstants system = SystemConstants::earth_moon(kEarthMoonMinDistanceKm);
  OrbitSelection orbit;
  double t0_s = 112150.0;  // 1d 7h 9m 10s
  double tf_s = 155350.0;  // 1d 19h 9m 10s
  double perilune_epoch_s = 112150.0;
  RelativeState initial;
  LosGeometry los;
  ControllerConfig controller;
  ThrusterErrorModel errors;
  TruthModel truth = TruthModel::nonlinear;
  int los_samples_per_interval = 20;
  double thrust_cost_dt_s = 108.0;
  double los_tolerance_m = 1e-6;
  IntegratorSettings integrator{1e-12, 1e-12};
  CampaignSettings campaign;

  /// Every violated invariant, prefixed with its key path. Empty when valid.
  [[nodiscard]] std::vector<std::string> validation_errors() const;
  [[nodiscard]] MissionSetup mission() const;
};

/// Global conditions plus the impulsive-thruster scenario.
ScenarioConfig impulsive_scenario();
/// Global conditions plus the low-thrust scenario.
ScenarioConfig continuous_scenario();

/// JSON (schema "nrho.scenario", version 1). Missing keys keep the impulsive defaults, except
/// timing.perilune_epoch_s which defaults to timing.t0_s. Throws ConfigError.
ScenarioConfig parse_scenario(const std::string& text);
std::string serialize_scenario(const ScenarioConfig& config);
ScenarioConfig load_scenario(const std::string& path);
void save_scenario(const ScenarioConfig& config, const std::string& path);

/// Orbit from the selection: loaded from file or continued to the requested altitude, then
/// re-dimensionalized with the system constants.
PeriodicOrbit select_orbit(const ScenarioConfig& config);

Simulation build_simulation(const ScenarioConfig& config, std::shared_ptr<const PeriodicOrbit> orbit = nullptr);

}  // namespace nrho
