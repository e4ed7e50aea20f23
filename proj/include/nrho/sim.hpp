#pragma once

#include <cstdint>
#include <functional>
#include <random>

#include "nrho/mpc.hpp"

namespace nrho {

/// Actuation errors: realized = R(dtheta) (commanded + additive), R = exp(skew(dtheta)).
struct ThrusterErrorModel {
  Vec3 misalign_mean = Vec3::Zero();  // rad
  Mat3 misalign_cov = Mat3::Zero();   // rad^2
  Vec3 impulse_bias_max = Vec3::Zero();  // m/s
  Mat3 impulse_cov = Mat3::Zero();       // (m/s)^2
  Vec3 thrust_bias_max = Vec3::Zero();   // m/s^2
  Mat3 thrust_cov = Mat3::Zero();        // (m/s^2)^2

  [[nodiscard]] std::vector<std::string> validation_errors() const;
};

/// Per-run constant biases, uniform in [-max, max] per axis.
struct ThrusterBias {
  Vec3 impulse = Vec3::Zero();
  Vec3 thrust = Vec3::Zero();
};

ThrusterBias draw_bias(const ThrusterErrorModel& model, std::mt19937_64& rng);

/// Sample of N3(mean, cov); cov may be singular.
Vec3 sample_normal(const Vec3& mean, const Mat3& cov, std::mt19937_64& rng);

Mat3 rotation_exp(const Vec3& dtheta);

Vec3 apply_thruster_errors(const Vec3& commanded, const Vec3& dtheta, const Vec3& additive);

enum class TruthModel { nonlinear, linear };

std::string to_string(TruthModel m);
TruthModel truth_model_from_string(const std::string& s);

/// Truth state: [target synodic state (normalized); chaser relative state (LVLH, m, m/s)].
/// Time t is in seconds; `u` gives the chaser acceleration (LVLH, m/s^2).
Trajectory propagate_truth(const SystemConstants& c, TruthModel model, const VecX& y0, double t0, double t1,
                           const std::function<Vec3(double)>& u, const IntegratorSettings& settings);

/// Mission geometry and error model shared by every run of a campaign.
struct MissionSetup {
  double t0_s = 0.0;            // mission elapsed time of node 0
  double tf_s = 0.0;
  double orbit_epoch_s = 0.0;   // mission elapsed time of the orbit's t = 0 (perilune)
  RelativeState initial;
  ThrusterErrorModel errors;
  TruthModel truth = TruthModel::nonlinear;
  int los_samples_per_interval = 20;
  double thrust_cost_dt_s = 108.0;
  double los_tolerance_m = 1e-6;
  IntegratorSettings integrator{1e-12, 1e-12};
};

/// Orbit, constants and one controller context per mode, built once per campaign.
struct Simulation {
  std::shared_ptr<const PeriodicOrbit> orbit;
  SystemConstants constants;
  MissionSetup mission;
  std::shared_ptr<const StmGrid> grid;
  std::shared_ptr<const ControllerContext> robust;
  std::shared_ptr<const ControllerContext> nominal;

  [[nodiscard]] const ControllerContext& context(ControllerMode m) const {
    return m == ControllerMode::robust ? *robust : *nominal;
  }
};

/// Builds the STM grid over [t0, tf + N dT] and both controller contexts. Throws on invalid input.
Simulation make_simulation(std::shared_ptr<const PeriodicOrbit> orbit, const SystemConstants& c,
                           const MissionSetup& mission, const ControllerConfig& controller,
                           const LosGeometry& los);

struct NodeLog {
  int k = 0;
  double t = 0.0;
  Vec6 state = Vec6::Zero();  // before the impulse
  Vec3 dv_cmd = Vec3::Zero();
  Vec3 dv_applied = Vec3::Zero();
  QpStatus status = QpStatus::optimal;
  bool fallback = false;
  double objective = 0.0;
  double b_delta_norm = 0.0;
  int qp_iterations = 0;
  double solve_time_s = 0.0;
  double kkt = 0.0;
  Vec6 delta_hat = Vec6::Zero();
  double sigma_trace = 0.0;
};

struct TrajectorySample {
  double t = 0.0;
  Vec6 x = Vec6::Zero();
  Vec3 u_cmd = Vec3::Zero();
  Vec3 u_applied = Vec3::Zero();
  int node = -1;  // node index when the sample is a node (post-impulse), else -1
};

struct RunRecord {
  int run_index = 0;
  std::uint64_t base_seed = 0;
  ControllerMode mode = ControllerMode::robust;
  ThrusterBias bias;
  std::vector<TrajectorySample> trajectory;
  std::vector<NodeLog> nodes;
  bool los_violated = false;
  double first_violation_t = -1.0;
  double max_violation_m = 0.0;
  double max_distance_m = 0.0;
  double mission_cost = 0.0;
  double terminal_miss_m = 0.0;
  double terminal_miss_mps = 0.0;
  int fallback_steps = 0;
  bool failed = false;
  std::string error;
};

/// Seed for (base, run, stream); runs are independent of execution order.
std::mt19937_64 make_rng(std::uint64_t base_seed, int run_index, int stream);

RunRecord run_closed_loop(const Simulation& sim, ControllerMode mode, std::uint64_t base_seed, int run_index);

struct CampaignSummary {
  ControllerMode mode = ControllerMode::robust;
  int run_count = 0;
  int satisfied = 0;
  int failed = 0;
  double los_rate = 0.0;
  double cost_mean = 0.0;
  double cost_min = 0.0;
  double cost_max = 0.0;
  std::vector<RunRecord> runs;  // by run index
};

CampaignSummary summarize(ControllerMode mode, std::vector<RunRecord> runs);

/// Runs are distributed over `parallelism` worker threads; a failing run is recorded
/// (failed = true, counted as violating) and the campaign continues.
CampaignSummary run_campaign(const Simulation& sim, ControllerMode mode, int run_count, std::uint64_t base_seed,
                             int parallelism, const std::function<void(int, const RunRecord&)>& on_done = {});

}  // namespace nrho
