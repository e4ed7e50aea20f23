#include <doctest.h>

#include <cmath>
#include <random>

#include "support.hpp"

using namespace nrho;
using namespace nrho::test;

namespace {

constexpr double kDt = 1080.0;

struct Window {
  std::shared_ptr<const ControllerContext> ctx;
  PredictionBundle bundle;
};

// Controller on a small grid starting at the scenario epoch (orbit time t0 - perilune epoch = 0).
Window make_window(ControllerConfig cfg, int k, double t0 = 0.0) {
  const auto grid = std::make_shared<const StmGrid>(
      build_stm_grid(*target_orbit(), system(), t0, kDt, 2 * cfg.horizon, cfg.continuous_enabled() ? cfg.spline_order : 0));
  auto ctx = std::make_shared<const ControllerContext>(ControllerContext::create(cfg, LosGeometry{}, grid));
  return {ctx, build_bundle(*grid, k, cfg.horizon, ctx->spline.get())};
}

ControllerConfig small_impulsive(int N = 8) {
  ControllerConfig c;
  c.horizon = N;
  c.arrival_node = N;
  c.control_points = N + 4;
  return c;
}

ControllerConfig small_continuous(int N = 8) {
  ControllerConfig c = small_impulsive(N);
  c.dv_max = Vec3::Zero();
  c.u_max = Vec3::Constant(1e-4);
  c.n_u = 80;
  return c;
}

// J written out node by node from the stacked prediction.
double direct_cost(const PredictionBundle& b, const Vec6& x, const ControllerConfig& cfg, const VecX& dv,
                   const VecX& xi) {
  const VecX zero = VecX::Zero(6 * (b.horizon + 1));
  const VecX pred = predict_state(b, x, dv, xi, zero);
  const double tau = cfg.cost_time_unit_s;
  double j = 0.0;
  for (int n = 0; n <= b.horizon; ++n) {
    if (b.k + n >= cfg.arrival_node) j += cfg.gamma * pred.segment<3>(6 * n).squaredNorm();
    j += cfg.beta * tau * tau * dv.segment<3>(3 * n).squaredNorm();
  }
  return j + (1.0 - cfg.beta) * tau * tau * tau * tau * xi.squaredNorm();
}

Vec6 table_state() {
  Vec6 x;
  x << 600.0, 300.0, -200.0, 0.1, -0.1, 0.0;
  return x;
}

ScenarioConfig quiet(ScenarioConfig cfg) {
  cfg.errors = ThrusterErrorModel{};
  return cfg;
}

}  // namespace

TEST_SUITE("mpc") {

TEST_CASE("LOS polytope rows") {
  const LosGeometry g;
  const int N = 3;
  const LosStack s = los_stack(g, N);
  CHECK(s.A.rows() == 5 * N);
  CHECK(s.A.cols() == 6 * (N + 1));
  CHECK(max_abs(s.A.leftCols(6)) == 0.0);
  VecX x = VecX::Zero(6 * (N + 1));
  for (int j = 0; j <= N; ++j) x(6 * j) = 10.0;
  CHECK((s.A * x - s.b).maxCoeff() <= 0.0);

  const Vec3 behind(-1.0, 0.0, 0.0);
  Vec6 xb = Vec6::Zero();
  xb.head<3>() = behind;
  const auto r = (g.A_L() * xb - g.b_L()).eval();
  CHECK(r(4) == doctest::Approx(1.0));
  CHECK(g.violation(behind) > 0.0);

  const double y = 11.0;
  Vec6 edge = Vec6::Zero();
  edge(0) = g.c_y * (y - g.y0);
  edge(1) = y;
  CHECK(std::abs((g.A_L() * edge - g.b_L())(0)) <= 1e-12);
  CHECK(g.c_y == doctest::Approx(std::sqrt(3.0)).epsilon(1e-14));

  LosGeometry bad;
  bad.c_y = -1.0;
  CHECK_FALSE(bad.validation_errors().empty());
}

TEST_CASE("effort-only objective") {
  ControllerConfig cfg = small_continuous();
  cfg.dv_max = Vec3::Constant(0.1);
  cfg.cost_time_unit_s = 1.0;
  cfg.arrival_node = 1000;
  const Window w = make_window(cfg, 0);
  const int ndv = 3 * (cfg.horizon + 1), nxi = 3 * cfg.control_points;
  const Objective o = build_objective(w.bundle, table_state(), cfg, VecX::Zero(6 * (cfg.horizon + 1)));
  MatX expected = MatX::Zero(ndv + nxi, ndv + nxi);
  expected.topLeftCorner(ndv, ndv).diagonal().setConstant(cfg.beta);
  expected.bottomRightCorner(nxi, nxi).diagonal().setConstant(1.0 - cfg.beta);
  CHECK(max_abs(o.P - expected) == 0.0);
  CHECK(o.q.norm() == 0.0);
}

TEST_CASE("zero state gives a zero linear term") {
  const ControllerConfig cfg = small_impulsive();
  const Window w = make_window(cfg, 2);
  const Objective o = build_objective(w.bundle, Vec6::Zero(), cfg, VecX::Zero(6 * (cfg.horizon + 1)));
  CHECK(o.q.norm() == 0.0);
  CHECK(o.constant == 0.0);
}

TEST_CASE("quadratic form equals the direct cost") {
  ControllerConfig cfg = small_continuous();
  cfg.dv_max = Vec3::Constant(0.1);
  const Window w = make_window(cfg, 3);
  const Vec6 x = table_state();
  const Objective o = build_objective(w.bundle, x, cfg, VecX::Zero(6 * (cfg.horizon + 1)));
  std::mt19937_64 rng(12);
  const int ndv = 3 * (cfg.horizon + 1), nxi = 3 * cfg.control_points;
  for (int t = 0; t < 100; ++t) {
    const VecX dv = random_matrix(ndv, 1, rng, 0.05), xi = random_matrix(nxi, 1, rng, 5e-5);
    VecX z(ndv + nxi);
    z << dv, xi;
    const double quad = z.dot(o.P * z) + 2.0 * o.q.dot(z) + o.constant;
    const double direct = direct_cost(w.bundle, x, cfg, dv, xi);
    CHECK(std::abs(quad - direct) <= 1e-9 * direct);
    CHECK(std::abs(evaluate_cost(w.bundle, x, cfg, VecX::Zero(6 * (cfg.horizon + 1)), dv, xi) - direct) <=
          1e-12 * direct);
  }
}

TEST_CASE("origin with no disturbance needs no control") {
  for (const auto& cfg : {small_impulsive(), small_continuous()}) {
    const Window w = make_window(cfg, 0);
    const MpcStepResult r = solve_step(Vec6::Zero(), w.bundle, *w.ctx, DisturbanceModel{});
    REQUIRE(r.status == QpStatus::optimal);
    CHECK(r.dv.norm() == 0.0);
    CHECK(r.xi.norm() == 0.0);
    CHECK(std::abs(r.objective) <= 1e-20);
    CHECK_FALSE(r.fallback);
  }
}

TEST_CASE("robust tightening shrinks the feasible set") {
  ControllerConfig cfg = small_impulsive();
  ControllerConfig nom = cfg;
  nom.mode = ControllerMode::nominal;
  const Window wr = make_window(cfg, 0), wn = make_window(nom, 0);
  DisturbanceModel m;
  m.mean << 0.0, 0.02, -0.02, 0.0, 1e-5, 0.0;
  m.covariance.diagonal() << 0.04, 0.04, 0.04, 1e-8, 1e-8, 1e-8;
  const MpcStepResult r = solve_step(table_state(), wr.bundle, *wr.ctx, m);
  const MpcStepResult n = solve_step(table_state(), wn.bundle, *wn.ctx, m);
  REQUIRE(r.status == QpStatus::optimal);
  REQUIRE(n.status == QpStatus::optimal);
  CHECK(r.b_delta.maxCoeff() <= 0.0);
  CHECK(n.b_delta.norm() == 0.0);
  CHECK((r.los_rhs - n.los_rhs).maxCoeff() <= 0.0);
  // robust optimum evaluated without the disturbance mean is nominal-feasible
  CHECK((wn.ctx->los.A * wn.bundle.G_dv * r.dv - n.los_rhs).maxCoeff() <= 1e-7);
  const double r_nominal_cost = evaluate_cost(wn.bundle, table_state(), nom, VecX::Zero(6 * 9), r.dv, r.xi);
  CHECK(r_nominal_cost >= n.objective * (1.0 - 1e-9));
}

TEST_CASE("impulsive step 0 from the scenario state is feasible") {
  const ScenarioConfig sc = impulsive_scenario();
  const Simulation sim = build_simulation(sc, target_orbit());
  const ControllerContext& ctx = sim.context(ControllerMode::robust);
  const PredictionBundle b = build_bundle(*ctx.grid, 0, ctx.config.horizon, nullptr);
  const MpcStepResult r = solve_step(sc.initial.vector(), b, ctx, DisturbanceModel{});
  REQUIRE(r.status == QpStatus::optimal);
  CHECK(r.kkt.max() <= 1e-8);
  CHECK(r.dv.cwiseAbs().maxCoeff() <= 0.1);
  const VecX slack = ctx.los.A * r.predicted - ctx.los.b - r.b_delta;
  CHECK(slack.maxCoeff() <= 1e-6);
}

TEST_CASE("continuous step 0 respects the sampled thrust bound") {
  const ScenarioConfig sc = continuous_scenario();
  const Simulation sim = build_simulation(sc, target_orbit());
  const ControllerContext& ctx = sim.context(ControllerMode::robust);
  const PredictionBundle b = build_bundle(*ctx.grid, 0, ctx.config.horizon, ctx.spline.get());
  const MpcStepResult r = solve_step(sc.initial.vector(), b, ctx, DisturbanceModel{});
  REQUIRE(r.status == QpStatus::optimal);
  CHECK(r.kkt.max() <= 1e-8);
  CHECK(r.dv.norm() == 0.0);
  const VecX u = ctx.sampled_basis * r.xi;
  CHECK(u.cwiseAbs().maxCoeff() <= 1e-4 * (1.0 + 1e-9));
  CHECK((ctx.los.A * r.predicted - ctx.los.b).maxCoeff() <= 1e-6);
}

TEST_CASE("infeasible window falls back to the shifted previous plan") {
  ControllerConfig cfg = small_impulsive();
  cfg.dv_max = Vec3::Constant(1e-6);
  const Window w = make_window(cfg, 0);
  MpcStepResult prev;
  prev.dv = VecX::LinSpaced(3 * (cfg.horizon + 1), 1.0, 27.0) * 1e-7;
  prev.dv(5) = 0.3;  // clamped on reuse
  Vec6 behind = Vec6::Zero();
  behind(0) = -500.0;
  const MpcStepResult r = solve_step(behind, w.bundle, *w.ctx, DisturbanceModel{}, &prev);
  CHECK(r.status != QpStatus::optimal);
  CHECK(r.fallback);
  for (int i = 0; i + 3 < r.dv.size(); ++i)
    CHECK(r.dv(i) == doctest::Approx(std::clamp(prev.dv(i + 3), -1e-6, 1e-6)));
  CHECK(r.dv.tail<3>().norm() == 0.0);
  const MpcStepResult first = solve_step(behind, w.bundle, *w.ctx, DisturbanceModel{});
  CHECK(first.fallback);
  CHECK(first.dv.norm() == 0.0);
}

TEST_CASE("controller configuration checks") {
  ControllerConfig c;
  CHECK(c.validation_errors().empty());
  c.control_points = 43;
  CHECK_FALSE(c.validation_errors().empty());
  c = ControllerConfig{};
  c.dv_max = Vec3::Zero();
  c.beta = 2.0;
  CHECK(c.validation_errors().size() == 2);
  CHECK_THROWS(c.validate());
  CHECK(controller_mode_from_string("nominal") == ControllerMode::nominal);
  CHECK_THROWS(controller_mode_from_string("other"));
}

TEST_CASE("linear truth without noise closes on the target") {
  ScenarioConfig sc = quiet(impulsive_scenario());
  sc.truth = TruthModel::linear;
  const Simulation sim = build_simulation(sc, target_orbit());
  const RunRecord r = run_closed_loop(sim, ControllerMode::nominal, 1, 0);
  REQUIRE_FALSE(r.failed);
  MESSAGE("terminal miss with gamma 1e6: " << r.terminal_miss_m << " m");
  CHECK(r.terminal_miss_m <= 1e-3);
  CHECK(r.fallback_steps == 0);
}

TEST_CASE("terminal miss scales as 1/gamma") {
  ScenarioConfig sc = quiet(impulsive_scenario());
  sc.truth = TruthModel::linear;
  auto miss = [&](double gamma) {
    ScenarioConfig s = sc;
    s.controller.gamma = gamma;
    const RunRecord r = run_closed_loop(build_simulation(s, target_orbit()), ControllerMode::nominal, 1, 0);
    REQUIRE_FALSE(r.failed);
    return r.trajectory.back().x.head<3>().norm();
  };
  const double m4 = miss(1e4), m6 = miss(1e6);
  MESSAGE("final position: gamma 1e4 " << m4 << " m, gamma 1e6 " << m6 << " m");
  const double ratio = m4 / m6;
  CHECK(ratio >= 100.0 / 3.0);
  CHECK(ratio <= 300.0);
}

TEST_CASE("robust and nominal share the first step on a fixed seed") {
  const Simulation sim = build_simulation(impulsive_scenario(), target_orbit());
  const RunRecord r = run_closed_loop(sim, ControllerMode::robust, 7, 3);
  const RunRecord n = run_closed_loop(sim, ControllerMode::nominal, 7, 3);
  REQUIRE(r.nodes.size() == 41u);
  REQUIRE(n.nodes.size() == 41u);
  CHECK((r.nodes[0].dv_cmd - n.nodes[0].dv_cmd).norm() == 0.0);
  CHECK((r.nodes[0].dv_applied - n.nodes[0].dv_applied).norm() == 0.0);
  CHECK((r.nodes[1].state - n.nodes[1].state).norm() == 0.0);
  CHECK((r.nodes[2].dv_cmd - n.nodes[2].dv_cmd).norm() > 0.0);

  int applied = 0;
  for (const auto& node : r.nodes) {
    CHECK(node.dv_cmd.cwiseAbs().maxCoeff() <= 0.1);
    if (node.dv_applied.norm() > 0.0) ++applied;
  }
  CHECK(applied == 41);
}

TEST_CASE("mission cost") {
  const std::vector<Vec3> imp{Vec3(3, 4, 0), Vec3(0, 0, 1)};
  const std::vector<Vec3> thr{Vec3(1e-4, 0, 0), Vec3(0, 2e-4, 0)};
  CHECK(mission_cost(imp, thr, 108.0) == doctest::Approx(6.0 + 3e-4 * 108.0));
  CHECK(mission_cost({}, {}, 108.0) == 0.0);
}

}
