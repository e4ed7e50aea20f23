#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <json.hpp>

#include "support.hpp"

using namespace nrho;
using namespace nrho::test;
using nlohmann::json;

namespace {

constexpr double kDegRad = M_PI / 180.0;

void check_global(const ScenarioConfig& s) {
  CHECK(s.t0_s == 86400.0 + 7 * 3600.0 + 9 * 60.0 + 10.0);
  CHECK(s.tf_s == 86400.0 + 19 * 3600.0 + 9 * 60.0 + 10.0);
  CHECK(s.perilune_epoch_s == s.t0_s);
  CHECK(s.controller.dt_s == doctest::Approx((s.tf_s - s.t0_s) / 40.0));
  CHECK(s.los.c_y == doctest::Approx(1.0 / std::tan(M_PI / 6.0)).epsilon(1e-15));
  CHECK(s.los.c_z == doctest::Approx(std::sqrt(3.0)).epsilon(1e-15));
  CHECK(s.los.y0 == 5.0);
  CHECK(s.los.z0 == 5.0);
  CHECK((s.errors.misalign_mean - Vec3::Constant(2.5 * kDegRad)).norm() <= 1e-15);
  CHECK(max_abs(s.errors.misalign_cov - Mat3::Identity() * (2.5 * kDegRad) * (2.5 * kDegRad)) <= 1e-17);
  CHECK(s.controller.horizon == 40);
  CHECK(s.controller.arrival_node == 40);
  CHECK(s.controller.gamma == 1e6);
  CHECK(s.controller.probability == 0.95);
  CHECK(s.controller.lambda == 0.25);
  CHECK(s.controller.n_u == 400);
  CHECK(s.controller.spline_order == 4);
  CHECK(s.controller.control_points == 44);
  CHECK(s.campaign.runs == 100);
  CHECK(s.system.mu1 == 398600.4);
  CHECK(s.system.mu2 == 4904.869);
  CHECK(s.system.distance_km == 363104.0);
  CHECK(s.orbit.perilune_surface_km == 15674.0);
  CHECK(s.orbit.reference_distance_km == 384400.0);
}

void check_impulsive(const ScenarioConfig& s) {
  check_global(s);
  CHECK(s.initial.rho == Vec3(400.0, 200.0, -200.0));
  CHECK(s.initial.rho_dot == Vec3(0.1, -0.1, 0.1));
  CHECK(s.controller.dv_max == Vec3::Constant(0.1));
  CHECK(s.controller.u_max == Vec3::Zero());
  CHECK(s.errors.impulse_bias_max == Vec3::Constant(5e-4));
  CHECK(max_abs(s.errors.impulse_cov - Mat3::Identity() * 5e-4 * 5e-4) <= 1e-20);
  CHECK(s.errors.thrust_bias_max == Vec3::Zero());
  CHECK(s.errors.thrust_cov == Mat3::Zero());
}

void check_continuous(const ScenarioConfig& s) {
  check_global(s);
  CHECK(s.initial.rho == Vec3(600.0, 300.0, -200.0));
  CHECK(s.initial.rho_dot == Vec3(0.1, -0.1, 0.0));
  CHECK(s.controller.dv_max == Vec3::Zero());
  CHECK(s.controller.u_max == Vec3::Constant(1e-4));
  CHECK(s.errors.thrust_bias_max == Vec3::Constant(5e-7));
  CHECK(max_abs(s.errors.thrust_cov - Mat3::Identity() * 5e-7 * 5e-7) <= 1e-26);
  CHECK(s.errors.impulse_bias_max == Vec3::Zero());
  CHECK(s.errors.impulse_cov == Mat3::Zero());
}

std::string bundled(const std::string& name) { return std::string(NRHO_SOURCE_DIR) + "/configs/" + name; }

std::vector<std::string> parse_errors(const std::string& text) {
  try {
    (void)parse_scenario(text);
  } catch (const ConfigError& e) {
    return e.errors();
  }
  return {};
}

bool mentions(const std::vector<std::string>& errors, const std::string& key) {
  for (const auto& e : errors)
    if (e.find(key) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_SUITE("scenario") {

TEST_CASE("impulsive defaults match the mission conditions") {
  const auto s = impulsive_scenario();
  check_impulsive(s);
  CHECK(s.name == "impulsive");
  CHECK(s.validation_errors().empty());
}

TEST_CASE("continuous defaults match the mission conditions") {
  const auto s = continuous_scenario();
  check_continuous(s);
  CHECK(s.name == "continuous");
  CHECK(s.validation_errors().empty());
}

TEST_CASE("bundled configuration files") {
  const auto imp = load_scenario(bundled("impulsive.json"));
  check_impulsive(imp);
  CHECK(serialize_scenario(imp) == serialize_scenario(impulsive_scenario()));
  const auto con = load_scenario(bundled("continuous.json"));
  check_continuous(con);
  CHECK(serialize_scenario(con) == serialize_scenario(continuous_scenario()));
}

TEST_CASE("serialize and parse round trip") {
  for (auto s : {impulsive_scenario(), continuous_scenario()}) {
    s.campaign.modes = {ControllerMode::nominal};
    s.campaign.base_seed = 0xfedcba9876543210ULL;
    s.perilune_epoch_s = 100000.0;
    s.truth = TruthModel::linear;
    s.controller.mode = ControllerMode::nominal;
    s.orbit.file = "orbit.json";
    const std::string text = serialize_scenario(s);
    const auto back = parse_scenario(text);
    CHECK(serialize_scenario(back) == text);
    CHECK(back.campaign.base_seed == s.campaign.base_seed);
    CHECK(back.perilune_epoch_s == 100000.0);
    CHECK(back.truth == TruthModel::linear);
    CHECK(back.errors.misalign_mean == s.errors.misalign_mean);
  }
}

TEST_CASE("schema and missing keys") {
  const auto j = json::parse(serialize_scenario(impulsive_scenario()));
  CHECK(j["schema"] == "nrho.scenario");
  CHECK(j["version"] == 1);
  const auto s = parse_scenario(R"({"name": "short", "campaign": {"runs": 7}})");
  CHECK(s.name == "short");
  CHECK(s.campaign.runs == 7);
  CHECK(serialize_scenario(s).find("\"runs\": 7") != std::string::npos);
  check_impulsive(parse_scenario("{}"));
}

TEST_CASE("perilune epoch defaults to the start time") {
  const auto s = parse_scenario(R"({"timing": {"t0_s": 1000.0, "tf_s": 44200.0}})");
  CHECK(s.perilune_epoch_s == 1000.0);
  const auto u = parse_scenario(R"({"timing": {"t0_s": 1000.0, "tf_s": 44200.0, "perilune_epoch_s": 0.0}})");
  CHECK(u.perilune_epoch_s == 0.0);
  CHECK(u.mission().orbit_epoch_s == 0.0);
  CHECK(u.mission().t0_s == 1000.0);
}

TEST_CASE("parse errors list every offending field") {
  const auto e = parse_errors(R"({
    "controller": {"horizon": "forty", "mode": "cautious", "dv_max_mps": [1, 2]},
    "los": {"c_y": true},
    "thruster_errors": {"impulse_cov_m2_s2": [[1, 0], [0, 1]]},
    "campaign": {"modes": ["robust", 3]}
  })");
  CHECK(e.size() >= 6);
  CHECK(mentions(e, "controller.horizon"));
  CHECK(mentions(e, "controller.mode"));
  CHECK(mentions(e, "controller.dv_max_mps"));
  CHECK(mentions(e, "los.c_y"));
  CHECK(mentions(e, "thruster_errors.impulse_cov_m2_s2"));
  CHECK(mentions(e, "campaign.modes"));
  CHECK_FALSE(parse_errors("{not json").empty());
  CHECK_FALSE(parse_errors("[1, 2]").empty());
}

TEST_CASE("validation errors list every invariant") {
  auto s = impulsive_scenario();
  s.tf_s = s.t0_s - 1.0;
  s.controller.probability = 1.5;
  s.los.y0 = -1.0;
  s.errors.impulse_cov(0, 1) = 1.0;
  s.campaign.runs = 0;
  s.los_samples_per_interval = 3;
  const auto e = s.validation_errors();
  CHECK(e.size() >= 6);
  CHECK(mentions(e, "timing"));
  CHECK(mentions(e, "controller."));
  CHECK(mentions(e, "los."));
  CHECK(mentions(e, "thruster_errors."));
  CHECK(mentions(e, "campaign.runs"));
  CHECK(mentions(e, "los_samples_per_interval"));

  auto h = impulsive_scenario();
  h.controller.dt_s = 1000.0;
  CHECK(mentions(h.validation_errors(), "controller.horizon"));
  CHECK_THROWS_AS((void)parse_scenario(R"({"campaign": {"runs": -3}})"), ConfigError);
  CHECK_THROWS_AS((void)build_simulation(h), ConfigError);
  CHECK_THROWS_AS((void)load_scenario("/nonexistent/scenario.json"), ConfigError);
}

TEST_CASE("mission setup carries the scenario") {
  const auto s = continuous_scenario();
  const auto m = s.mission();
  CHECK(m.t0_s == s.t0_s);
  CHECK(m.tf_s == s.tf_s);
  CHECK(m.initial.rho == s.initial.rho);
  CHECK(m.errors.thrust_bias_max == s.errors.thrust_bias_max);
  CHECK(m.los_samples_per_interval == 20);
  CHECK(m.los_tolerance_m == s.los_tolerance_m);
}

TEST_CASE("orbit selection from a file") {
  const auto dir = std::filesystem::temp_directory_path() / "nrho_scenario_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "orbit.json").string();
  save_orbit(southern_nrho(15674.0, SystemConstants::earth_moon(kEarthMoonSemimajorAxisKm)), path);
  auto s = impulsive_scenario();
  s.orbit.file = path;
  const auto o = select_orbit(s);
  const auto& ref = *target_orbit();
  CHECK(o.constants.distance_km == 363104.0);
  CHECK(o.period == doctest::Approx(ref.period).epsilon(1e-10));
  CHECK(o.perilune_radius_km == doctest::Approx(ref.perilune_radius_km).epsilon(1e-10));
  CHECK((o.initial_state.r - ref.initial_state.r).norm() <= 1e-10);

  auto bad = s;
  bad.system.mu2 = 5000.0;
  CHECK_THROWS_AS((void)select_orbit(bad), std::invalid_argument);
  std::filesystem::remove_all(dir);
}

}
