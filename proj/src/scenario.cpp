#include "nrho/scenario.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace nrho {

using nlohmann::json;

namespace {

constexpr double kDeg = M_PI / 180.0;

std::string join(const std::vector<std::string>& e) {
  std::string s = "invalid scenario:";
  for (const auto& x : e) s += "\n  " + x;
  return s;
}

// Reads optional keys into existing values, recording every type error with its path.
class Reader {
 public:
  std::vector<std::string> errors;

  const json* child(const json& parent, const std::string& key, const std::string& path) {
    if (!parent.is_object()) return nullptr;
    const auto it = parent.find(key);
    if (it == parent.end()) return nullptr;
    if (!it->is_object()) {
      errors.push_back(path + key + ": expected an object");
      return nullptr;
    }
    return &*it;
  }

  void number(const json* obj, const std::string& key, const std::string& path, double& out) {
    if (!obj) return;
    const auto it = obj->find(key);
    if (it == obj->end()) return;
    if (!it->is_number()) {
      errors.push_back(path + key + ": expected a number");
      return;
    }
    out = it->get<double>();
  }

  void integer(const json* obj, const std::string& key, const std::string& path, int& out) {
    if (!obj) return;
    const auto it = obj->find(key);
    if (it == obj->end()) return;
    if (!it->is_number_integer()) {
      errors.push_back(path + key + ": expected an integer");
      return;
    }
    out = it->get<int>();
  }

  void seed(const json* obj, const std::string& key, const std::string& path, std::uint64_t& out) {
    if (!obj) return;
    const auto it = obj->find(key);
    if (it == obj->end()) return;
    if (!it->is_number_unsigned()) {
      errors.push_back(path + key + ": expected a nonnegative integer");
      return;
    }
    out = it->get<std::uint64_t>();
  }

  void text(const json* obj, const std::string& key, const std::string& path, std::string& out) {
    if (!obj) return;
    const auto it = obj->find(key);
    if (it == obj->end() || it->is_null()) return;
    if (!it->is_string()) {
      errors.push_back(path + key + ": expected a string");
      return;
    }
    out = it->get<std::string>();
  }

  void vec3(const json* obj, const std::string& key, const std::string& path, Vec3& out) {
    if (!obj) return;
    const auto it = obj->find(key);
    if (it == obj->end()) return;
    if (!it->is_array() || it->size() != 3) {
      errors.push_back(path + key + ": expected an array of 3 numbers");
      return;
    }
    for (int i = 0; i < 3; ++i) {
      if (!(*it)[i].is_number()) {
        errors.push_back(path + key + ": expected an array of 3 numbers");
        return;
      }
      out(i) = (*it)[i].get<double>();
    }
  }

  void mat3(const json* obj, const std::string& key, const std::string& path, Mat3& out) {
    if (!obj) return;
    const auto it = obj->find(key);
    if (it == obj->end()) return;
    const auto bad = [&] { errors.push_back(path + key + ": expected a 3x3 array of numbers"); };
    if (!it->is_array() || it->size() != 3) return bad();
    Mat3 m;
    for (int i = 0; i < 3; ++i) {
      const auto& row = (*it)[i];
      if (!row.is_array() || row.size() != 3) return bad();
      for (int j = 0; j < 3; ++j) {
        if (!row[j].is_number()) return bad();
        m(i, j) = row[j].get<double>();
      }
    }
    out = m;
  }
};

json to_json(const Vec3& v) { return json::array({v(0), v(1), v(2)}); }

json to_json(const Mat3& m) {
  json a = json::array();
  for (int i = 0; i < 3; ++i) a.push_back(json::array({m(i, 0), m(i, 1), m(i, 2)}));
  return a;
}

ScenarioConfig global_conditions() {
  ScenarioConfig s;
  s.controller.horizon = 40;
  s.controller.dt_s = 1080.0;
  s.controller.arrival_node = 40;
  s.controller.gamma = 1e6;
  s.controller.probability = 0.95;
  s.controller.lambda = 0.25;
  s.controller.n_u = 400;
  s.controller.spline_order = 4;
  s.controller.control_points = 44;
  s.los.c_y = 1.0 / std::tan(M_PI / 6.0);
  s.los.c_z = 1.0 / std::tan(M_PI / 6.0);
  s.los.y0 = 5.0;
  s.los.z0 = 5.0;
  s.errors.misalign_mean = Vec3::Constant(2.5 * kDeg);
  s.errors.misalign_cov = Mat3::Identity() * std::pow(2.5 * kDeg, 2);
  return s;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> errors) : std::runtime_error(join(errors)), errors_(std::move(errors)) {}

ScenarioConfig impulsive_scenario() {
  ScenarioConfig s = global_conditions();
  s.name = "impulsive";
  s.initial.rho = Vec3(400.0, 200.0, -200.0);
  s.initial.rho_dot = Vec3(0.1, -0.1, 0.1);
  s.controller.dv_max = Vec3::Constant(0.1);
  s.controller.u_max = Vec3::Zero();
  s.errors.impulse_bias_max = Vec3::Constant(5e-4);
  s.errors.impulse_cov = Mat3::Identity() * 25e-8;
  return s;
}

ScenarioConfig continuous_scenario() {
  ScenarioConfig s = global_conditions();
  s.name = "continuous";
  s.initial.rho = Vec3(600.0, 300.0, -200.0);
  s.initial.rho_dot = Vec3(0.1, -0.1, 0.0);
  s.controller.dv_max = Vec3::Zero();
  s.controller.u_max = Vec3::Constant(1e-4);
  s.errors.thrust_bias_max = Vec3::Constant(5e-7);
  s.errors.thrust_cov = Mat3::Identity() * 25e-14;
  return s;
}

std::vector<std::string> ScenarioConfig::validation_errors() const {
  std::vector<std::string> e;
  const auto add = [&e](const std::string& prefix, const std::vector<std::string>& v) {
    for (const auto& s : v) e.push_back(prefix + s);
  };
  try {
    system.validate();
  } catch (const std::exception& ex) {
    e.push_back(std::string("system: ") + ex.what());
  }
  if (orbit.file.empty() && !(orbit.perilune_surface_km > 0.0))
    e.push_back("orbit.perilune_surface_km must be positive");
  if (!(orbit.reference_distance_km > 0.0)) e.push_back("orbit.reference_distance_km must be positive");
  if (!std::isfinite(t0_s) || !std::isfinite(tf_s) || !(tf_s > t0_s)) e.push_back("timing: tf_s must exceed t0_s");
  if (!std::isfinite(perilune_epoch_s)) e.push_back("timing.perilune_epoch_s must be finite");
  if (controller.dt_s > 0.0 && tf_s > t0_s) {
    const double steps = (tf_s - t0_s) / controller.dt_s;
    if (std::abs(steps - controller.horizon) > 1e-9 * std::max(1, controller.horizon))
      e.push_back("timing: (tf_s - t0_s) / controller.dt_s must equal controller.horizon");
  }
  if (!initial.rho.allFinite() || !initial.rho_dot.allFinite()) e.push_back("initial_state must be finite");
  add("los.", los.validation_errors());
  add("controller.", controller.validation_errors());
  add("thruster_errors.", errors.validation_errors());
  if (los_samples_per_interval < 10) e.push_back("simulation.los_samples_per_interval must be >= 10");
  if (!(thrust_cost_dt_s > 0.0)) e.push_back("simulation.thrust_cost_dt_s must be positive");
  if (!(los_tolerance_m >= 0.0)) e.push_back("simulation.los_tolerance_m must be >= 0");
  if (!(integrator.rel_tol > 0.0) || !(integrator.abs_tol > 0.0)) e.push_back("simulation tolerances must be positive");
  if (campaign.runs < 1) e.push_back("campaign.runs must be >= 1");
  if (campaign.parallelism < 1) e.push_back("campaign.parallelism must be >= 1");
  if (campaign.modes.empty()) e.push_back("campaign.modes must not be empty");
  return e;
}

MissionSetup ScenarioConfig::mission() const {
  MissionSetup m;
  m.t0_s = t0_s;
  m.tf_s = tf_s;
  m.orbit_epoch_s = perilune_epoch_s;
  m.initial = initial;
  m.errors = errors;
  m.truth = truth;
  m.los_samples_per_interval = los_samples_per_interval;
  m.thrust_cost_dt_s = thrust_cost_dt_s;
  m.los_tolerance_m = los_tolerance_m;
  m.integrator = integrator;
  return m;
}

ScenarioConfig parse_scenario(const std::string& input) {
  json j;
  try {
    j = json::parse(input);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("parse error: ") + e.what()});
  }
  if (!j.is_object()) throw ConfigError({"top level: expected an object"});
  Reader r;
  std::string schema = "nrho.scenario";
  r.text(&j, "schema", "", schema);
  if (schema != "nrho.scenario") r.errors.push_back("schema: expected \"nrho.scenario\"");
  int version = 1;
  r.integer(&j, "version", "", version);
  if (version != 1) r.errors.push_back("version: unsupported version " + std::to_string(version));

  ScenarioConfig s = impulsive_scenario();
  r.text(&j, "name", "", s.name);

  const json* sys = r.child(j, "system", "");
  r.number(sys, "mu_earth_km3_s2", "system.", s.system.mu1);
  r.number(sys, "mu_moon_km3_s2", "system.", s.system.mu2);
  r.number(sys, "distance_km", "system.", s.system.distance_km);
  r.number(sys, "moon_radius_km", "system.", s.system.moon_radius_km);

  const json* orb = r.child(j, "orbit", "");
  r.number(orb, "perilune_surface_km", "orbit.", s.orbit.perilune_surface_km);
  r.number(orb, "reference_distance_km", "orbit.", s.orbit.reference_distance_km);
  r.text(orb, "file", "orbit.", s.orbit.file);

  const json* tim = r.child(j, "timing", "");
  r.number(tim, "t0_s", "timing.", s.t0_s);
  r.number(tim, "tf_s", "timing.", s.tf_s);
  s.perilune_epoch_s = s.t0_s;
  r.number(tim, "perilune_epoch_s", "timing.", s.perilune_epoch_s);
  r.number(tim, "dt_s", "timing.", s.controller.dt_s);

  const json* ini = r.child(j, "initial_state", "");
  r.vec3(ini, "position_m", "initial_state.", s.initial.rho);
  r.vec3(ini, "velocity_mps", "initial_state.", s.initial.rho_dot);

  const json* los = r.child(j, "los", "");
  r.number(los, "c_y", "los.", s.los.c_y);
  r.number(los, "c_z", "los.", s.los.c_z);
  r.number(los, "y0_m", "los.", s.los.y0);
  r.number(los, "z0_m", "los.", s.los.z0);

  const json* ctl = r.child(j, "controller", "");
  auto& c = s.controller;
  r.integer(ctl, "horizon", "controller.", c.horizon);
  r.number(ctl, "beta", "controller.", c.beta);
  r.number(ctl, "gamma", "controller.", c.gamma);
  r.integer(ctl, "arrival_node", "controller.", c.arrival_node);
  r.number(ctl, "probability", "controller.", c.probability);
  r.number(ctl, "lambda", "controller.", c.lambda);
  r.vec3(ctl, "dv_max_mps", "controller.", c.dv_max);
  r.vec3(ctl, "u_max_mps2", "controller.", c.u_max);
  r.integer(ctl, "n_u", "controller.", c.n_u);
  r.integer(ctl, "spline_degree", "controller.", c.spline_order);
  r.integer(ctl, "control_points", "controller.", c.control_points);
  r.number(ctl, "cost_time_unit_s", "controller.", c.cost_time_unit_s);
  r.integer(ctl, "qp_max_iterations", "controller.", c.qp.max_iterations);
  if (ctl && ctl->contains("mode")) {
    std::string m;
    r.text(ctl, "mode", "controller.", m);
    try {
      c.mode = controller_mode_from_string(m);
    } catch (const std::exception&) {
      r.errors.push_back("controller.mode: expected \"robust\" or \"nominal\"");
    }
  }

  const json* err = r.child(j, "thruster_errors", "");
  Vec3 mis_deg = s.errors.misalign_mean / kDeg;
  Mat3 mis_cov_deg2 = s.errors.misalign_cov / (kDeg * kDeg);
  r.vec3(err, "misalign_mean_deg", "thruster_errors.", mis_deg);
  r.mat3(err, "misalign_cov_deg2", "thruster_errors.", mis_cov_deg2);
  s.errors.misalign_mean = mis_deg * kDeg;
  s.errors.misalign_cov = mis_cov_deg2 * (kDeg * kDeg);
  r.vec3(err, "impulse_bias_max_mps", "thruster_errors.", s.errors.impulse_bias_max);
  r.mat3(err, "impulse_cov_m2_s2", "thruster_errors.", s.errors.impulse_cov);
  r.vec3(err, "thrust_bias_max_mps2", "thruster_errors.", s.errors.thrust_bias_max);
  r.mat3(err, "thrust_cov_m2_s4", "thruster_errors.", s.errors.thrust_cov);

  const json* sim = r.child(j, "simulation", "");
  if (sim && sim->contains("truth_model")) {
    std::string m;
    r.text(sim, "truth_model", "simulation.", m);
    try {
      s.truth = truth_model_from_string(m);
    } catch (const std::exception&) {
      r.errors.push_back("simulation.truth_model: expected \"nonlinear\" or \"linear\"");
    }
  }
  r.integer(sim, "los_samples_per_interval", "simulation.", s.los_samples_per_interval);
  r.number(sim, "thrust_cost_dt_s", "simulation.", s.thrust_cost_dt_s);
  r.number(sim, "los_tolerance_m", "simulation.", s.los_tolerance_m);
  r.number(sim, "rel_tol", "simulation.", s.integrator.rel_tol);
  r.number(sim, "abs_tol", "simulation.", s.integrator.abs_tol);

  const json* cam = r.child(j, "campaign", "");
  r.integer(cam, "runs", "campaign.", s.campaign.runs);
  r.seed(cam, "base_seed", "campaign.", s.campaign.base_seed);
  r.integer(cam, "parallelism", "campaign.", s.campaign.parallelism);
  if (cam && cam->contains("modes")) {
    const auto& m = cam->at("modes");
    s.campaign.modes.clear();
    if (!m.is_array()) {
      r.errors.push_back("campaign.modes: expected an array of strings");
    } else {
      for (const auto& v : m) {
        try {
          s.campaign.modes.push_back(controller_mode_from_string(v.is_string() ? v.get<std::string>() : ""));
        } catch (const std::exception&) {
          r.errors.push_back("campaign.modes: entries must be \"robust\" or \"nominal\"");
        }
      }
    }
  }

  if (r.errors.empty()) {
    auto more = s.validation_errors();
    r.errors.insert(r.errors.end(), more.begin(), more.end());
  }
  if (!r.errors.empty()) throw ConfigError(r.errors);
  return s;
}

std::string serialize_scenario(const ScenarioConfig& s) {
  const auto& c = s.controller;
  json modes = json::array();
  for (auto m : s.campaign.modes) modes.push_back(to_string(m));
  json j = {
      {"schema", "nrho.scenario"},
      {"version", 1},
      {"name", s.name},
      {"system",
       {{"mu_earth_km3_s2", s.system.mu1},
        {"mu_moon_km3_s2", s.system.mu2},
        {"distance_km", s.system.distance_km},
        {"moon_radius_km", s.system.moon_radius_km}}},
      {"orbit",
       {{"perilune_surface_km", s.orbit.perilune_surface_km},
        {"reference_distance_km", s.orbit.reference_distance_km},
        {"file", s.orbit.file}}},
      {"timing",
       {{"t0_s", s.t0_s}, {"tf_s", s.tf_s}, {"dt_s", c.dt_s}, {"perilune_epoch_s", s.perilune_epoch_s}}},
      {"initial_state", {{"position_m", to_json(s.initial.rho)}, {"velocity_mps", to_json(s.initial.rho_dot)}}},
      {"los", {{"c_y", s.los.c_y}, {"c_z", s.los.c_z}, {"y0_m", s.los.y0}, {"z0_m", s.los.z0}}},
      {"controller",
       {{"horizon", c.horizon},
        {"beta", c.beta},
        {"gamma", c.gamma},
        {"arrival_node", c.arrival_node},
        {"probability", c.probability},
        {"lambda", c.lambda},
        {"dv_max_mps", to_json(c.dv_max)},
        {"u_max_mps2", to_json(c.u_max)},
        {"n_u", c.n_u},
        {"spline_degree", c.spline_order},
        {"control_points", c.control_points},
        {"cost_time_unit_s", c.cost_time_unit_s},
        {"qp_max_iterations", c.qp.max_iterations},
        {"mode", to_string(c.mode)}}},
      {"thruster_errors",
       {{"misalign_mean_deg", to_json(Vec3(s.errors.misalign_mean / kDeg))},
        {"misalign_cov_deg2", to_json(Mat3(s.errors.misalign_cov / (kDeg * kDeg)))},
        {"impulse_bias_max_mps", to_json(s.errors.impulse_bias_max)},
        {"impulse_cov_m2_s2", to_json(s.errors.impulse_cov)},
        {"thrust_bias_max_mps2", to_json(s.errors.thrust_bias_max)},
        {"thrust_cov_m2_s4", to_json(s.errors.thrust_cov)}}},
      {"simulation",
       {{"truth_model", to_string(s.truth)},
        {"los_samples_per_interval", s.los_samples_per_interval},
        {"thrust_cost_dt_s", s.thrust_cost_dt_s},
        {"los_tolerance_m", s.los_tolerance_m},
        {"rel_tol", s.integrator.rel_tol},
        {"abs_tol", s.integrator.abs_tol}}},
      {"campaign",
       {{"runs", s.campaign.runs},
        {"base_seed", s.campaign.base_seed},
        {"modes", modes},
        {"parallelism", s.campaign.parallelism}}},
  };
  return j.dump(2) + "\n";
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open " + path});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

void save_scenario(const ScenarioConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << serialize_scenario(config);
}

PeriodicOrbit select_orbit(const ScenarioConfig& config) {
  PeriodicOrbit o;
  if (!config.orbit.file.empty()) {
    o = load_orbit(config.orbit.file);
  } else {
    SystemConstants ref = config.system;
    ref.distance_km = config.orbit.reference_distance_km;
    o = southern_nrho(config.orbit.perilune_surface_km, ref);
  }
  if (std::abs(o.constants.mass_ratio() - config.system.mass_ratio()) > 1e-12)
    throw std::invalid_argument("orbit mass ratio differs from the scenario system");
  const double rp = o.perilune_radius_km / o.constants.distance_km;
  o.constants = config.system;
  o.perilune_radius_km = rp * config.system.distance_km;
  return o;
}

Simulation build_simulation(const ScenarioConfig& config, std::shared_ptr<const PeriodicOrbit> orbit) {
  const auto e = config.validation_errors();
  if (!e.empty()) throw ConfigError(e);
  if (!orbit) orbit = std::make_shared<PeriodicOrbit>(select_orbit(config));
  return make_simulation(std::move(orbit), config.system, config.mission(), config.controller, config.los);
}

}  // namespace nrho
