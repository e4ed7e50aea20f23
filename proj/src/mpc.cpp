#include "nrho/mpc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace nrho {

std::string to_string(ControllerMode m) { return m == ControllerMode::robust ? "robust" : "nominal"; }

ControllerMode controller_mode_from_string(const std::string& s) {
  if (s == "robust") return ControllerMode::robust;
  if (s == "nominal") return ControllerMode::nominal;
  throw std::invalid_argument("unknown controller mode '" + s + "'");
}

std::vector<std::string> ControllerConfig::validation_errors() const {
  std::vector<std::string> e;
  if (horizon < 1) e.push_back("horizon must be >= 1");
  if (!(dt_s > 0.0)) e.push_back("dt_s must be positive");
  if (!(beta >= 0.0 && beta <= 1.0)) e.push_back("beta must lie in [0, 1]");
  if (!(gamma > 0.0)) e.push_back("gamma must be positive");
  if (arrival_node < 0) e.push_back("arrival_node must be >= 0");
  if (!(probability > 0.0 && probability < 1.0)) e.push_back("probability must lie in (0, 1)");
  if (!(lambda > 0.0)) e.push_back("lambda must be positive");
  if (!dv_max.allFinite() || dv_max.minCoeff() < 0.0) e.push_back("dv_max must be finite and nonnegative");
  if (!u_max.allFinite() || u_max.minCoeff() < 0.0) e.push_back("u_max must be finite and nonnegative");
  if (n_u < 1) e.push_back("n_u must be >= 1");
  if (spline_order < 1) e.push_back("spline_order must be >= 1");
  if (control_points < spline_order + 1) e.push_back("control_points must exceed spline_order");
  else if (horizon >= 1 && (control_points - spline_order) >= 1 && horizon % (control_points - spline_order) != 0)
    e.push_back("horizon must be a multiple of the spline span count (control_points - spline_order)");
  if (!(cost_time_unit_s > 0.0)) e.push_back("cost_time_unit_s must be positive");
  if (!impulsive_enabled() && !continuous_enabled()) e.push_back("at least one of dv_max, u_max must be nonzero");
  return e;
}

void ControllerConfig::validate() const {
  const auto e = validation_errors();
  if (e.empty()) return;
  std::string msg = "invalid controller config:";
  for (const auto& s : e) msg += " " + s + ";";
  throw std::invalid_argument(msg);
}

Eigen::Matrix<double, 5, 6> LosGeometry::A_L() const {
  Eigen::Matrix<double, 5, 6> a = Eigen::Matrix<double, 5, 6>::Zero();
  a.col(0).setConstant(-1.0);
  a(0, 1) = c_y;
  a(1, 1) = -c_y;
  a(2, 2) = c_z;
  a(3, 2) = -c_z;
  return a;
}

Eigen::Matrix<double, 5, 1> LosGeometry::b_L() const {
  Eigen::Matrix<double, 5, 1> b;
  b << c_y * y0, c_y * y0, c_z * z0, c_z * z0, 0.0;
  return b;
}

double LosGeometry::violation(const Vec3& rho) const {
  Vec6 x = Vec6::Zero();
  x.head<3>() = rho;
  return (A_L() * x - b_L()).maxCoeff();
}

std::vector<std::string> LosGeometry::validation_errors() const {
  std::vector<std::string> e;
  if (!(c_y > 0.0) || !std::isfinite(c_y)) e.push_back("c_y must be positive");
  if (!(c_z > 0.0) || !std::isfinite(c_z)) e.push_back("c_z must be positive");
  if (!(y0 >= 0.0) || !std::isfinite(y0)) e.push_back("y0 must be nonnegative");
  if (!(z0 >= 0.0) || !std::isfinite(z0)) e.push_back("z0 must be nonnegative");
  return e;
}

LosStack los_stack(const LosGeometry& geom, int horizon) {
  if (horizon < 1) throw std::invalid_argument("horizon must be positive");
  LosStack s{MatX::Zero(5 * horizon, 6 * (horizon + 1)), VecX::Zero(5 * horizon)};
  const auto a = geom.A_L();
  const auto b = geom.b_L();
  for (int j = 1; j <= horizon; ++j) {
    s.A.block<5, 6>(5 * (j - 1), 6 * j) = a;
    s.b.segment<5>(5 * (j - 1)) = b;
  }
  return s;
}

namespace {

void check_bundle(const PredictionBundle& b, const ControllerConfig& cfg, const VecX& delta_mean) {
  if (b.horizon != cfg.horizon) throw DimensionError("bundle horizon does not match the controller");
  const int n1 = b.horizon + 1;
  if (b.F.rows() != 6 * n1 || b.G_dv.cols() != 3 * n1 || b.G_delta.cols() != 6 * n1)
    throw DimensionError("bundle matrices have inconsistent sizes");
  if (delta_mean.size() != 6 * n1) throw DimensionError("stacked disturbance mean has the wrong size");
}

// Global indices >= k_a carry the terminal weight.
std::vector<int> weighted_nodes(const PredictionBundle& b, int arrival_node) {
  std::vector<int> w;
  for (int j = 0; j <= b.horizon; ++j)
    if (b.k + j >= arrival_node) w.push_back(j);
  return w;
}

}  // namespace

Objective build_objective(const PredictionBundle& b, const Vec6& x_k, const ControllerConfig& cfg,
                          const VecX& delta_mean) {
  check_bundle(b, cfg, delta_mean);
  const int ndv = static_cast<int>(b.G_dv.cols());
  const int nxi = b.xi_size();
  const int n = ndv + nxi;
  const double tau = cfg.cost_time_unit_s;

  Objective o;
  o.P = MatX::Zero(n, n);
  o.q = VecX::Zero(n);
  o.P.topLeftCorner(ndv, ndv).diagonal().setConstant(cfg.beta * tau * tau);
  if (nxi > 0) o.P.bottomRightCorner(nxi, nxi).diagonal().setConstant((1.0 - cfg.beta) * tau * tau * tau * tau);

  const VecX e0 = b.F * x_k + b.G_delta * delta_mean;
  const auto w = weighted_nodes(b, cfg.arrival_node);
  if (!w.empty()) {
    const int m = 3 * static_cast<int>(w.size());
    MatX E(m, n);
    VecX r(m);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const int row = 6 * w[i];
      E.block(3 * i, 0, 3, ndv) = b.G_dv.middleRows(row, 3);
      if (nxi > 0) E.block(3 * i, ndv, 3, nxi) = b.G_xi.middleRows(row, 3);
      r.segment<3>(3 * i) = e0.segment<3>(row);
    }
    o.P.selfadjointView<Eigen::Lower>().rankUpdate(E.transpose(), cfg.gamma);
    o.P = o.P.selfadjointView<Eigen::Lower>();
    o.q = cfg.gamma * E.transpose() * r;
    o.constant = cfg.gamma * r.squaredNorm();
  }
  return o;
}

double evaluate_cost(const PredictionBundle& b, const Vec6& x_k, const ControllerConfig& cfg,
                     const VecX& delta_mean, const VecX& dv, const VecX& xi) {
  check_bundle(b, cfg, delta_mean);
  if (dv.size() != b.G_dv.cols() || xi.size() != b.xi_size()) throw DimensionError("decision vector sizes");
  VecX x = b.F * x_k + b.G_dv * dv + b.G_delta * delta_mean;
  if (xi.size() > 0) x += b.G_xi * xi;
  const double tau = cfg.cost_time_unit_s;
  double j = 0.0;
  for (int n = 0; n <= b.horizon; ++n) {
    if (b.k + n >= cfg.arrival_node) j += cfg.gamma * x.segment<3>(6 * n).squaredNorm();
    j += cfg.beta * tau * tau * dv.segment<3>(3 * n).squaredNorm();
  }
  if (xi.size() > 0) j += (1.0 - cfg.beta) * std::pow(tau, 4) * xi.squaredNorm();
  return j;
}

ControllerContext ControllerContext::create(const ControllerConfig& config, const LosGeometry& geometry,
                                            std::shared_ptr<const StmGrid> grid) {
  config.validate();
  const auto ge = geometry.validation_errors();
  if (!ge.empty()) throw std::invalid_argument("invalid LOS geometry: " + ge.front());
  if (!grid) throw std::invalid_argument("controller needs an STM grid");
  if (std::abs(grid->dt - config.dt_s) > 1e-9 * config.dt_s) throw DimensionError("grid spacing differs from dt_s");
  ControllerContext ctx;
  ctx.config = config;
  ctx.geometry = geometry;
  ctx.grid = std::move(grid);
  if (config.continuous_enabled()) {
    auto basis = BsplineBasis::clamped_uniform(config.spline_order, config.control_points, 0.0,
                                               config.horizon * config.dt_s);
    ctx.spline = std::make_shared<WindowSpline>(std::move(basis), config.horizon, config.dt_s);
    ctx.sampled_basis = ctx.spline->sampled_matrix(config.n_u);
  }
  ctx.los = los_stack(geometry, config.horizon);
  ctx.alpha = chi_square_quantile(config.probability, 6);
  return ctx;
}

namespace {

// Decision variables actually handed to the QP: components with a zero bound are fixed at zero,
// the rest are scaled by their bound so the box becomes [-1, 1].
struct VariableMap {
  std::vector<int> index;  // position in z = [dV_S; xi_S]
  VecX scale;
  int ndv_free = 0;
};

VariableMap free_variables(const ControllerConfig& cfg, int ndv, int nxi) {
  VariableMap m;
  std::vector<double> s;
  for (int i = 0; i < ndv; ++i)
    if (cfg.dv_max(i % 3) > 0.0) {
      m.index.push_back(i);
      s.push_back(cfg.dv_max(i % 3));
    }
  m.ndv_free = static_cast<int>(m.index.size());
  for (int i = 0; i < nxi; ++i)
    if (cfg.u_max(i % 3) > 0.0) {
      m.index.push_back(ndv + i);
      s.push_back(cfg.u_max(i % 3));
    }
  m.scale = Eigen::Map<VecX>(s.data(), static_cast<Eigen::Index>(s.size()));
  return m;
}

MpcStepResult fallback_result(const PredictionBundle& b, const ControllerContext& ctx, const MpcStepResult* prev) {
  const auto& cfg = ctx.config;
  MpcStepResult r;
  r.dv = VecX::Zero(b.G_dv.cols());
  r.xi = VecX::Zero(b.xi_size());
  if (prev && prev->dv.size() == r.dv.size()) r.dv.head(r.dv.size() - 3) = prev->dv.tail(r.dv.size() - 3);
  if (prev && prev->xi.size() == r.xi.size() && r.xi.size() > 0)
    r.xi.head(r.xi.size() - 3) = prev->xi.tail(r.xi.size() - 3);
  for (Eigen::Index i = 0; i < r.dv.size(); ++i) r.dv(i) = std::clamp(r.dv(i), -cfg.dv_max(i % 3), cfg.dv_max(i % 3));
  // Nonnegative basis with unit sum: clamping the control points bounds u(t) everywhere.
  for (Eigen::Index i = 0; i < r.xi.size(); ++i) r.xi(i) = std::clamp(r.xi(i), -cfg.u_max(i % 3), cfg.u_max(i % 3));
  r.fallback = true;
  return r;
}

}  // namespace

MpcStepResult solve_step(const Vec6& x_k, const PredictionBundle& b, const ControllerContext& ctx,
                         const DisturbanceModel& model, const MpcStepResult* previous) {
  const auto start = std::chrono::steady_clock::now();
  const auto& cfg = ctx.config;
  const int N = cfg.horizon, n1 = N + 1;
  if (cfg.continuous_enabled() != (b.xi_size() > 0)) throw DimensionError("bundle and controller disagree on the spline");
  const int ndv = 3 * n1;
  const int nxi = b.xi_size();

  const bool robust = cfg.mode == ControllerMode::robust;
  VecX delta_mean = VecX::Zero(6 * n1);
  VecX b_delta = VecX::Zero(5 * N);
  if (robust) {
    for (int j = 0; j < n1; ++j) delta_mean.segment<6>(6 * j) = model.mean;
    b_delta = bounding_vector(ctx.los.A, b.G_delta, model, ctx.alpha);
  }

  const Objective obj = build_objective(b, x_k, cfg, delta_mean);
  const VariableMap vm = free_variables(cfg, ndv, nxi);
  const int n = static_cast<int>(vm.index.size());

  MatX E(6 * n1, n);
  for (int i = 0; i < n; ++i) {
    const int c = vm.index[i];
    E.col(i) = (c < ndv ? b.G_dv.col(c) : b.G_xi.col(c - ndv)) * vm.scale(i);
  }

  QpProblem qp;
  qp.P.resize(n, n);
  qp.q.resize(n);
  for (int i = 0; i < n; ++i) {
    qp.q(i) = obj.q(vm.index[i]) * vm.scale(i);
    for (int j = 0; j < n; ++j) qp.P(i, j) = obj.P(vm.index[i], vm.index[j]) * vm.scale(i) * vm.scale(j);
  }
  const double pscale = std::max(qp.P.diagonal().maxCoeff(), 1e-300);
  qp.P /= pscale;
  qp.q /= pscale;

  const VecX los_rhs = ctx.los.b - ctx.los.A * (b.F * x_k) + b_delta;
  const MatX los_rows = ctx.los.A * E;
  int spline_rows = 0;
  std::vector<std::pair<int, int>> rows;  // (sample row of B_S, axis)
  if (nxi > 0) {
    for (Eigen::Index r = 0; r < ctx.sampled_basis.rows(); ++r)
      if (cfg.u_max(r % 3) > 0.0) rows.emplace_back(static_cast<int>(r), static_cast<int>(r % 3));
    spline_rows = 2 * static_cast<int>(rows.size());
  }
  qp.G = MatX::Zero(los_rows.rows() + spline_rows, n);
  qp.h = VecX::Zero(qp.G.rows());
  qp.G.topRows(los_rows.rows()) = los_rows;
  qp.h.head(los_rows.rows()) = los_rhs;
  if (nxi > 0) {
    std::vector<int> xi_col(nxi, -1);
    for (int i = vm.ndv_free; i < n; ++i) xi_col[vm.index[i] - ndv] = i;
    Eigen::Index r0 = los_rows.rows();
    for (const auto& [r, axis] : rows) {
      for (int c = axis; c < nxi; c += 3) {
        const double v = ctx.sampled_basis(r, c);
        if (v == 0.0 || xi_col[c] < 0) continue;
        qp.G(r0, xi_col[c]) = v;
        qp.G(r0 + 1, xi_col[c]) = -v;
      }
      qp.h(r0) = 1.0;
      qp.h(r0 + 1) = 1.0;
      r0 += 2;
    }
  }
  qp.lb = VecX::Constant(n, -std::numeric_limits<double>::infinity());
  qp.ub = VecX::Constant(n, std::numeric_limits<double>::infinity());
  qp.lb.head(vm.ndv_free).setConstant(-1.0);
  qp.ub.head(vm.ndv_free).setConstant(1.0);

  const QpSolution sol = solve_qp(qp, cfg.qp);

  MpcStepResult r;
  if (sol.status == QpStatus::optimal) {
    r.dv = VecX::Zero(ndv);
    r.xi = VecX::Zero(nxi);
    for (int i = 0; i < n; ++i) {
      const double v = sol.x(i) * vm.scale(i);
      const int c = vm.index[i];
      if (c < ndv) {
        r.dv(c) = std::clamp(v, -cfg.dv_max(c % 3), cfg.dv_max(c % 3));
      } else {
        r.xi(c - ndv) = v;
      }
    }
  } else {
    r = fallback_result(b, ctx, previous);
  }
  r.status = sol.status;
  r.kkt = sol.kkt;
  r.qp_iterations = sol.iterations;

  VecX z(ndv + nxi);
  z << r.dv, r.xi;
  r.objective = z.dot(obj.P * z) + 2.0 * obj.q.dot(z) + obj.constant;
  r.predicted = b.F * x_k + b.G_dv * r.dv + b.G_delta * delta_mean;
  if (nxi > 0) r.predicted += b.G_xi * r.xi;
  r.b_delta = b_delta;
  r.b_delta_norm = b_delta.norm();
  r.los_rhs = los_rhs;
  r.solve_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

Controller::Controller(std::shared_ptr<const ControllerContext> ctx) : ctx_(std::move(ctx)) {
  if (!ctx_) throw std::invalid_argument("controller needs a context");
  estimator_.lambda = ctx_->config.lambda;
}

MpcStepResult Controller::step(int k, const Vec6& x_k) {
  if (last_ && last_bundle_) {
    const Vec6 d = residual_disturbance(x_k, last_state_, *last_bundle_, last_->dv.head<3>(), last_->xi);
    residuals_.push_back(d);
    estimator_ = estimator_update(estimator_, d);
  }
  PredictionBundle bundle = build_bundle(*ctx_->grid, k, ctx_->config.horizon, ctx_->spline.get());
  MpcStepResult r = solve_step(x_k, bundle, *ctx_, estimator_.model(), last_ ? &*last_ : nullptr);
  last_ = r;
  last_bundle_ = std::move(bundle);
  last_state_ = x_k;
  return r;
}

double mission_cost(const std::vector<Vec3>& impulses, const std::vector<Vec3>& thrust_samples, double sample_dt) {
  double c = 0.0;
  for (const auto& v : impulses) c += v.norm();
  for (const auto& u : thrust_samples) c += u.norm() * sample_dt;
  return c;
}

}  // namespace nrho
