#include "nrho/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace nrho {

namespace {

bool psd(const Mat3& m) {
  if (!m.allFinite() || (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff()))
    return false;
  return Eigen::SelfAdjointEigenSolver<Mat3>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff() >=
         -1e-12 * std::max(1e-300, m.cwiseAbs().maxCoeff());
}

}  // namespace

std::vector<std::string> ThrusterErrorModel::validation_errors() const {
  std::vector<std::string> e;
  if (!misalign_mean.allFinite()) e.push_back("misalign_mean must be finite");
  if (!psd(misalign_cov)) e.push_back("misalign_cov must be symmetric PSD");
  if (!impulse_bias_max.allFinite() || impulse_bias_max.minCoeff() < 0.0) e.push_back("impulse_bias_max must be >= 0");
  if (!psd(impulse_cov)) e.push_back("impulse_cov must be symmetric PSD");
  if (!thrust_bias_max.allFinite() || thrust_bias_max.minCoeff() < 0.0) e.push_back("thrust_bias_max must be >= 0");
  if (!psd(thrust_cov)) e.push_back("thrust_cov must be symmetric PSD");
  return e;
}

ThrusterBias draw_bias(const ThrusterErrorModel& m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ThrusterBias b;
  for (int i = 0; i < 3; ++i) b.impulse(i) = m.impulse_bias_max(i) * u(rng);
  for (int i = 0; i < 3; ++i) b.thrust(i) = m.thrust_bias_max(i) * u(rng);
  return b;
}

Vec3 sample_normal(const Vec3& mean, const Mat3& cov, std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  Vec3 z;
  for (int i = 0; i < 3; ++i) z(i) = n01(rng);
  if (cov.isZero(0.0)) return mean;
  const Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const Vec3 s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return mean + es.eigenvectors() * s.asDiagonal() * z;
}

Mat3 rotation_exp(const Vec3& w) {
  const double th = w.norm();
  const Mat3 k = skew(w);
  if (th < 1e-8) return Mat3::Identity() + k + 0.5 * k * k;
  return Mat3::Identity() + std::sin(th) / th * k + (1.0 - std::cos(th)) / (th * th) * k * k;
}

Vec3 apply_thruster_errors(const Vec3& commanded, const Vec3& dtheta, const Vec3& additive) {
  return rotation_exp(dtheta) * (commanded + additive);
}

std::string to_string(TruthModel m) { return m == TruthModel::nonlinear ? "nonlinear" : "linear"; }

TruthModel truth_model_from_string(const std::string& s) {
  if (s == "nonlinear") return TruthModel::nonlinear;
  if (s == "linear") return TruthModel::linear;
  throw std::invalid_argument("unknown truth model '" + s + "'");
}

Trajectory propagate_truth(const SystemConstants& c, TruthModel model, const VecX& y0, double t0, double t1,
                           const std::function<Vec3(double)>& u, const IntegratorSettings& settings) {
  if (y0.size() != 12) throw DimensionError("truth state has 12 components");
  const double n = c.mean_motion();
  const OdeRhs rhs = [&](double t, const VecX& y, VecX& dy) {
    const Vec6 target = y.head<6>();
    const Vec6 rel = y.tail<6>();
    const Vec3 a = u ? u(t) : Vec3::Zero();
    dy.resize(12);
    dy.head<6>() = n * cr3bp_derivative(target, c);
    const LvlhFrame f = lvlh_from_state(target, c);
    if (model == TruthModel::nonlinear) {
      dy.tail<6>() = relative_derivative_nonlinear(rel, f, c, a);
    } else {
      dy.tail<6>() = linear_system_matrix(f, c) * rel + velocity_injection() * a;
    }
  };
  return integrate(rhs, t0, y0, t1, settings);
}

Simulation make_simulation(std::shared_ptr<const PeriodicOrbit> orbit, const SystemConstants& c,
                           const MissionSetup& mission, const ControllerConfig& controller, const LosGeometry& los) {
  if (!orbit) throw std::invalid_argument("simulation needs an orbit");
  c.validate();
  controller.validate();
  const auto te = mission.errors.validation_errors();
  if (!te.empty()) throw std::invalid_argument("invalid thruster error model: " + te.front());
  if (!(mission.tf_s > mission.t0_s)) throw std::invalid_argument("tf must exceed t0");
  const double steps = (mission.tf_s - mission.t0_s) / controller.dt_s;
  if (std::abs(steps - controller.horizon) > 1e-9 * controller.horizon)
    throw std::invalid_argument("(tf - t0) / dt must equal the horizon");
  if (mission.los_samples_per_interval < 10) throw std::invalid_argument("at least 10 LOS samples per interval");

  Simulation s;
  s.orbit = std::move(orbit);
  s.constants = c;
  s.mission = mission;
  auto grid = std::make_shared<StmGrid>(build_stm_grid(*s.orbit, c, mission.t0_s - mission.orbit_epoch_s,
                                                       controller.dt_s, 2 * controller.horizon,
                                                       std::max(controller.spline_order, 1)));
  s.grid = grid;
  ControllerConfig rc = controller, nc = controller;
  rc.mode = ControllerMode::robust;
  nc.mode = ControllerMode::nominal;
  s.robust = std::make_shared<ControllerContext>(ControllerContext::create(rc, los, grid));
  s.nominal = std::make_shared<ControllerContext>(ControllerContext::create(nc, los, grid));
  return s;
}

std::mt19937_64 make_rng(std::uint64_t base_seed, int run_index, int stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(base_seed & 0xffffffffu), static_cast<std::uint32_t>(base_seed >> 32),
                    static_cast<std::uint32_t>(run_index), static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

RunRecord run_closed_loop(const Simulation& sim, ControllerMode mode, std::uint64_t base_seed, int run_index) {
  const auto ctx = mode == ControllerMode::robust ? sim.robust : sim.nominal;
  const auto& cfg = ctx->config;
  const auto& m = sim.mission;
  const auto& c = sim.constants;
  const int N = cfg.horizon;
  const double dt = cfg.dt_s;

  RunRecord rec;
  rec.run_index = run_index;
  rec.base_seed = base_seed;
  rec.mode = mode;
  auto bias_rng = make_rng(base_seed, run_index, 0);
  auto act_rng = make_rng(base_seed, run_index, 1);
  rec.bias = draw_bias(m.errors, bias_rng);

  const double orbit_t0 = m.t0_s - m.orbit_epoch_s;
  VecX y(12);
  y.head<6>() = sim.orbit->state_at(orbit_t0 * c.mean_motion()).vector();
  y.tail<6>() = m.initial.vector();

  Controller controller(ctx);
  std::vector<Vec3> impulses, thrust_samples;
  const int cost_samples = std::max(1, static_cast<int>(std::lround(dt / m.thrust_cost_dt_s)));
  const int M = m.los_samples_per_interval;

  auto check = [&](double t, const Vec6& x) {
    const double v = ctx->geometry.violation(x.head<3>());
    rec.max_violation_m = std::max(rec.max_violation_m, v);
    if (v > m.los_tolerance_m && !rec.los_violated) {
      rec.los_violated = true;
      rec.first_violation_t = t;
    }
    rec.max_distance_m = std::max(rec.max_distance_m, x.head<3>().norm());
  };

  for (int k = 0; k <= N; ++k) {
    const double tk = m.t0_s + k * dt;
    const Vec6 xk = y.tail<6>();
    const MpcStepResult r = controller.step(k, xk);

    NodeLog log;
    log.k = k;
    log.t = tk;
    log.state = xk;
    log.dv_cmd = r.dv.head<3>();
    log.status = r.status;
    log.fallback = r.fallback;
    log.objective = r.objective;
    log.b_delta_norm = r.b_delta_norm;
    log.qp_iterations = r.qp_iterations;
    log.solve_time_s = r.solve_time_s;
    log.kkt = r.kkt.max();
    log.delta_hat = controller.estimator().delta_hat;
    log.sigma_trace = controller.estimator().sigma_hat.trace();
    if (r.fallback) ++rec.fallback_steps;

    if (cfg.impulsive_enabled()) {
      const Vec3 dth = sample_normal(m.errors.misalign_mean, m.errors.misalign_cov, act_rng);
      const Vec3 dv_noise = sample_normal(rec.bias.impulse, m.errors.impulse_cov, act_rng);
      log.dv_applied = apply_thruster_errors(log.dv_cmd, dth, dv_noise);
      y.segment<3>(9) += log.dv_applied;
      impulses.push_back(log.dv_cmd);
    }
    rec.nodes.push_back(log);

    std::function<Vec3(double)> u_cmd, u_app;
    if (k < N && cfg.continuous_enabled()) {
      const Vec3 dth = sample_normal(m.errors.misalign_mean, m.errors.misalign_cov, act_rng);
      const Vec3 du = sample_normal(rec.bias.thrust, m.errors.thrust_cov, act_rng);
      const Mat3 R = rotation_exp(dth);
      const VecX xi = r.xi;
      const auto spline = ctx->spline;
      u_cmd = [spline, xi, tk](double t) { return spline->control(xi, t - tk); };
      u_app = [u_cmd, R, du](double t) -> Vec3 { return R * (u_cmd(t) + du); };
      for (int j = 0; j < cost_samples; ++j) thrust_samples.push_back(u_cmd(tk + j * m.thrust_cost_dt_s));
    }

    TrajectorySample node{tk, y.tail<6>(), Vec3::Zero(), Vec3::Zero(), k};
    if (u_cmd) {
      node.u_cmd = u_cmd(tk);
      node.u_applied = u_app(tk);
    }
    rec.trajectory.push_back(node);
    if (k > 0) check(tk, node.x);
    if (k == N) break;

    const Trajectory tr = propagate_truth(c, m.truth, y, tk, tk + dt, u_app, m.integrator);
    for (int j = 1; j < M; ++j) {
      const double t = tk + dt * j / M;
      TrajectorySample s{t, tr(t).tail<6>(), Vec3::Zero(), Vec3::Zero(), -1};
      if (u_cmd) {
        s.u_cmd = u_cmd(t);
        s.u_applied = u_app(t);
      }
      rec.trajectory.push_back(s);
      check(t, s.x);
    }
    y = tr.back();
  }

  rec.mission_cost = mission_cost(impulses, thrust_samples, m.thrust_cost_dt_s);
  rec.terminal_miss_m = y.segment<3>(6).norm();
  rec.terminal_miss_mps = y.segment<3>(9).norm();
  return rec;
}

CampaignSummary summarize(ControllerMode mode, std::vector<RunRecord> runs) {
  CampaignSummary s;
  s.mode = mode;
  s.run_count = static_cast<int>(runs.size());
  double sum = 0.0;
  int costed = 0;
  s.cost_min = std::numeric_limits<double>::infinity();
  s.cost_max = -std::numeric_limits<double>::infinity();
  for (const auto& r : runs) {
    if (r.failed) {
      ++s.failed;
      continue;
    }
    if (!r.los_violated) ++s.satisfied;
    sum += r.mission_cost;
    ++costed;
    s.cost_min = std::min(s.cost_min, r.mission_cost);
    s.cost_max = std::max(s.cost_max, r.mission_cost);
  }
  s.los_rate = s.run_count > 0 ? static_cast<double>(s.satisfied) / s.run_count : 0.0;
  s.cost_mean = costed > 0 ? sum / costed : 0.0;
  if (costed == 0) s.cost_min = s.cost_max = 0.0;
  s.runs = std::move(runs);
  return s;
}

CampaignSummary run_campaign(const Simulation& sim, ControllerMode mode, int run_count, std::uint64_t base_seed,
                             int parallelism, const std::function<void(int, const RunRecord&)>& on_done) {
  if (run_count < 1) throw std::invalid_argument("run_count must be >= 1");
  std::vector<RunRecord> runs(run_count);
  std::atomic<int> next{0};
  std::mutex done_mutex;
  auto worker = [&] {
    for (int i = next++; i < run_count; i = next++) {
      try {
        runs[i] = run_closed_loop(sim, mode, base_seed, i);
      } catch (const std::exception& e) {
        RunRecord r;
        r.run_index = i;
        r.base_seed = base_seed;
        r.mode = mode;
        r.failed = true;
        r.los_violated = true;
        r.error = e.what();
        runs[i] = std::move(r);
      }
      if (on_done) {
        std::lock_guard<std::mutex> lock(done_mutex);
        on_done(i, runs[i]);
      }
    }
  };
  const int workers = std::clamp(parallelism, 1, run_count);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return summarize(mode, std::move(runs));
}

}  // namespace nrho
