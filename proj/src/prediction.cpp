#include "nrho/prediction.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nrho {

namespace {

OdeRhs stm_rhs(const PeriodicOrbit& orbit, const SystemConstants& c) {
  return [&orbit, &c](double t, const VecX& y, VecX& dy) {
    const Mat6 a = linear_system_matrix(lvlh_at(orbit, t, c), c);
    dy.resize(36);
    Eigen::Map<Mat6>(dy.data()) = a * Eigen::Map<const Mat6>(y.data());
  };
}

Mat6 advance(const OdeRhs& rhs, const Mat6& phi, double t0, double t1, const IntegratorSettings& s) {
  if (t1 == t0) return phi;
  VecX y = Eigen::Map<const VecX>(phi.data(), 36);
  const Trajectory tr = integrate(rhs, t0, y, t1, s);
  return Eigen::Map<const Mat6>(tr.back().data());
}

}  // namespace

Mat6 stm_between(const PeriodicOrbit& orbit, const SystemConstants& c, double t0, double t1,
                 const IntegratorSettings& settings) {
  if (t1 < t0) throw std::invalid_argument("stm_between requires t0 <= t1");
  IntegratorSettings s = settings;
  s.dense_output = false;
  return advance(stm_rhs(orbit, c), Mat6::Identity(), t0, t1, s);
}

Mat6 StmGrid::transition(int i, int j) const {
  if (i < 0 || j > intervals() || i > j) throw std::out_of_range("grid transition indices");
  Mat6 phi = Mat6::Identity();
  for (int g = i; g < j; ++g) phi = step[g] * phi;
  return phi;
}

StmGrid build_stm_grid(const PeriodicOrbit& orbit, const SystemConstants& c, double t0, double dt,
                       int intervals, int degree, const IntegratorSettings& settings,
                       const QuadratureSettings& quad) {
  if (!(dt > 0.0) || intervals < 1) throw std::invalid_argument("grid needs dt > 0 and intervals >= 1");
  if (degree < 0) throw std::invalid_argument("moment degree must be nonnegative");
  if (quad.initial_subintervals < 1) throw std::invalid_argument("need at least one subinterval");
  IntegratorSettings s = settings;
  s.dense_output = false;
  const OdeRhs rhs = stm_rhs(orbit, c);
  const int np = degree + 1;

  StmGrid grid;
  grid.t0 = t0;
  grid.dt = dt;
  grid.degree = degree;
  grid.step.resize(intervals);
  grid.moment.assign(intervals, std::vector<Mat63>(np, Mat63::Zero()));
  grid.quadrature_points.assign(intervals, 0);

  for (int g = 0; g < intervals; ++g) {
    const double ta = t0 + g * dt;
    // phi(tau_m, t_g) on the current subgrid
    int n = quad.initial_subintervals;
    std::vector<Mat6> phi(n + 1);
    phi[0] = Mat6::Identity();
    for (int m = 1; m <= n; ++m) phi[m] = advance(rhs, phi[m - 1], ta + (m - 1) * dt / n, ta + m * dt / n, s);
    const Mat6 step = phi[n];
    grid.step[g] = step;

    auto trapezoid = [&](const std::vector<Mat6>& nodes) {
      const int nn = static_cast<int>(nodes.size()) - 1;
      MatX sum = MatX::Zero(6, 3 * np);
      for (int m = 0; m <= nn; ++m) {
        const double w = (m == 0 || m == nn) ? 0.5 : 1.0;
        const Mat63 kern = (step * nodes[m].inverse()).rightCols<3>();
        const double sigma = static_cast<double>(m) / nn;
        double pw = 1.0;
        for (int p = 0; p < np; ++p, pw *= sigma) sum.middleCols(3 * p, 3) += w * pw * kern;
      }
      return MatX(sum * (dt / nn));
    };

    std::vector<std::vector<MatX>> table;
    table.push_back({trapezoid(phi)});
    MatX best = table[0][0];
    for (int level = 1; level <= quad.max_halvings; ++level) {
      std::vector<Mat6> finer(2 * n + 1);
      for (int m = 0; m < n; ++m) {
        finer[2 * m] = phi[m];
        finer[2 * m + 1] = advance(rhs, phi[m], ta + m * dt / n, ta + (m + 0.5) * dt / n, s);
      }
      finer[2 * n] = phi[n];
      phi.swap(finer);
      n *= 2;
      std::vector<MatX> row{trapezoid(phi)};
      double factor = 4.0;
      for (int j = 1; j <= level; ++j, factor *= 4.0)
        row.push_back(row[j - 1] + (row[j - 1] - table[level - 1][j - 1]) / (factor - 1.0));
      const double change = (row.back() - table[level - 1].back()).cwiseAbs().maxCoeff();
      const double scale = row.back().cwiseAbs().maxCoeff();
      table.push_back(std::move(row));
      best = table.back().back();
      if (change <= quad.rel_tol * std::max(scale, 1e-300)) break;
    }
    grid.quadrature_points[g] = n;
    for (int p = 0; p < np; ++p) grid.moment[g][p] = best.middleCols(3 * p, 3);
  }
  return grid;
}

WindowSpline::WindowSpline(BsplineBasis basis, int horizon, double dt)
    : basis_(std::move(basis)), horizon_(horizon), dt_(dt) {
  if (horizon < 1 || !(dt > 0.0)) throw std::invalid_argument("window needs horizon >= 1 and dt > 0");
  const double span = horizon * dt;
  if (std::abs(basis_.t_start()) > 1e-9 * span || std::abs(basis_.t_end() - span) > 1e-9 * span)
    throw std::invalid_argument("spline basis must span the window [0, N dt]");
  for (double k : basis_.knots()) {
    const double r = k / dt;
    if (std::abs(r - std::round(r)) > 1e-9) throw std::invalid_argument("knots must fall on the node grid");
  }
  const int q = basis_.order();
  // polynomial fit through q+1 Chebyshev points is exact for a degree-q piece
  VecX sig(q + 1);
  for (int i = 0; i <= q; ++i) sig(i) = 0.5 - 0.5 * std::cos(std::numbers::pi * (i + 0.5) / (q + 1));
  MatX vander(q + 1, q + 1);
  for (int i = 0; i <= q; ++i)
    for (int p = 0; p <= q; ++p) vander(i, p) = std::pow(sig(i), p);
  const Eigen::PartialPivLU<MatX> lu(vander);
  pieces_.resize(horizon);
  for (int i = 0; i < horizon; ++i) {
    MatX vals(q + 1, basis_.count());
    for (int m = 0; m <= q; ++m) vals.row(m) = basis_.eval_all((i + sig(m)) * dt).transpose();
    pieces_[i] = lu.solve(vals).transpose();
  }
}

Vec3 WindowSpline::control(const VecX& xi, double t) const {
  if (xi.size() != 3 * count()) throw DimensionError("control point vector has the wrong size");
  const VecX b = basis_.eval_all(std::clamp(t, basis_.t_start(), basis_.t_end()));
  Vec3 u = Vec3::Zero();
  for (int l = 0; l < count(); ++l)
    if (b(l) != 0.0) u += b(l) * xi.segment<3>(3 * l);
  return u;
}

MatX WindowSpline::sampled_matrix(int n_u) const {
  if (n_u < 1) throw std::invalid_argument("n_u must be positive");
  MatX m = MatX::Zero(3 * (n_u + 1), 3 * count());
  const double span = horizon_ * dt_;
  for (int i = 0; i <= n_u; ++i) {
    const VecX b = basis_.eval_all(span * i / n_u);
    for (int l = 0; l < count(); ++l)
      if (b(l) != 0.0) m.block<3, 3>(3 * i, 3 * l) = b(l) * Mat3::Identity();
  }
  return m;
}

PredictionBundle build_bundle(const StmGrid& grid, int k, int horizon, const WindowSpline* spline) {
  if (horizon < 1) throw std::invalid_argument("horizon must be positive");
  if (k < 0 || k + horizon > grid.intervals()) throw std::out_of_range("window exceeds the STM grid");
  if (spline && (spline->horizon() != horizon || std::abs(spline->dt() - grid.dt) > 1e-9 * grid.dt))
    throw DimensionError("spline window does not match the bundle");
  if (spline && spline->basis().order() > grid.degree)
    throw DimensionError("STM grid moments do not cover the spline degree");

  const int N = horizon, n1 = N + 1;
  const Mat63 B = velocity_injection();
  PredictionBundle b;
  b.k = k;
  b.horizon = N;
  for (int j = 0; j <= N; ++j) b.node_times.push_back(grid.time(k + j));

  b.stm.assign(n1 * n1, Mat6::Zero());
  for (int j = 0; j <= N; ++j) {
    b.stm[j * n1 + j] = Mat6::Identity();
    for (int i = 0; i < j; ++i) b.stm[j * n1 + i] = grid.step[k + j - 1] * b.stm[(j - 1) * n1 + i];
  }

  b.F.resize(6 * n1, 6);
  b.G_dv = MatX::Zero(6 * n1, 3 * n1);
  b.G_delta = MatX::Zero(6 * n1, 6 * n1);
  for (int j = 0; j <= N; ++j) {
    b.F.block<6, 6>(6 * j, 0) = b.transition(0, j);
    for (int i = 0; i <= j; ++i) {
      b.G_delta.block<6, 6>(6 * j, 6 * i) = b.transition(i, j);
      b.G_dv.block<6, 3>(6 * j, 3 * i) = b.transition(i, j) * B;
    }
  }

  const int nc = spline ? spline->count() : 0;
  b.G_xi = MatX::Zero(6 * n1, 3 * nc);
  if (spline) {
    MatX acc = MatX::Zero(6, 3 * nc);
    for (int j = 1; j <= N; ++j) {
      const int g = k + j - 1;
      const MatX& piece = spline->piece(j - 1);
      MatX w = MatX::Zero(6, 3 * nc);
      for (int l = 0; l < nc; ++l)
        for (int p = 0; p < piece.cols(); ++p)
          if (piece(l, p) != 0.0) w.middleCols(3 * l, 3) += piece(l, p) * grid.moment[g][p];
      acc = grid.step[g] * acc + w;
      b.G_xi.middleRows(6 * j, 6) = acc;
    }
  }
  return b;
}

PredictionBundle build_bundle(const PeriodicOrbit& orbit, const SystemConstants& c, double t_k,
                              int horizon, double dt, const WindowSpline* spline,
                              const IntegratorSettings& settings) {
  const int degree = spline ? spline->basis().order() : 0;
  const StmGrid grid = build_stm_grid(orbit, c, t_k, dt, horizon, degree, settings);
  return build_bundle(grid, 0, horizon, spline);
}

VecX predict_state(const PredictionBundle& b, const Vec6& x_k, const VecX& dv, const VecX& xi,
                   const VecX& delta) {
  if (dv.size() != b.G_dv.cols() || delta.size() != b.G_delta.cols() || xi.size() != b.G_xi.cols())
    throw DimensionError("predict_state argument sizes do not match the bundle");
  VecX x = b.F * x_k + b.G_dv * dv + b.G_delta * delta;
  if (xi.size() > 0) x += b.G_xi * xi;
  return x;
}

}  // namespace nrho
