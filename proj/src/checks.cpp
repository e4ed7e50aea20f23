#include "nrho/checks.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace nrho {

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

// All inequality rows including the finite box bounds, as A x <= b.
void stacked_rows(const QpProblem& p, MatX& A, VecX& b) {
  const int n = p.variables();
  std::vector<std::pair<VecX, double>> rows;
  for (int i = 0; i < p.inequalities(); ++i) rows.emplace_back(p.G.row(i).transpose(), p.h(i));
  for (Eigen::Index i = 0; i < p.ub.size(); ++i)
    if (std::isfinite(p.ub(i))) rows.emplace_back(VecX::Unit(n, i), p.ub(i));
  for (Eigen::Index i = 0; i < p.lb.size(); ++i)
    if (std::isfinite(p.lb(i))) rows.emplace_back(-VecX::Unit(n, i), -p.lb(i));
  A.resize(static_cast<Eigen::Index>(rows.size()), n);
  b.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    A.row(r) = rows[r].first.transpose();
    b(r) = rows[r].second;
  }
}

}  // namespace

std::optional<VecX> solve_qp_enumerate(const QpProblem& p) {
  p.validate();
  MatX A;
  VecX b;
  stacked_rows(p, A, b);
  const int n = p.variables();
  const int m = static_cast<int>(A.rows());
  if (m > 20) throw std::invalid_argument("enumeration is limited to 20 rows");
  std::optional<VecX> best;
  double best_obj = std::numeric_limits<double>::infinity();
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < m; ++i)
      if (mask & (1u << i)) act.push_back(i);
    const int k = static_cast<int>(act.size());
    if (k > n) continue;
    MatX K = MatX::Zero(n + k, n + k);
    VecX rhs(n + k);
    K.topLeftCorner(n, n) = p.P;
    rhs.head(n) = -p.q;
    for (int i = 0; i < k; ++i) {
      K.block(n + i, 0, 1, n) = A.row(act[i]);
      K.block(0, n + i, n, 1) = A.row(act[i]).transpose();
      rhs(n + i) = b(act[i]);
    }
    const Eigen::FullPivLU<MatX> lu(K);
    if (lu.rank() < n + k) continue;
    const VecX sol = lu.solve(rhs);
    const VecX x = sol.head(n);
    if (k > 0 && sol.tail(k).minCoeff() < -1e-9) continue;
    if (((A * x - b).array() > 1e-9 * scale).any()) continue;
    const double obj = qp_objective(p, x);
    if (obj < best_obj) {
      best_obj = obj;
      best = x;
    }
  }
  return best;
}

QpProblem random_qp(int n, int m, std::uint64_t seed, bool with_box) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.05, 1.0);
  const auto randn = [&](int r, int c) {
    MatX M(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) M(i, j) = g(rng);
    return M;
  };
  QpProblem p;
  const MatX M = randn(n, n);
  p.P = M * M.transpose() + 0.1 * MatX::Identity(n, n);
  p.q = randn(n, 1) * 3.0;
  p.G = randn(m, n);
  const VecX x0 = randn(n, 1);
  p.h = p.G * x0;
  for (int i = 0; i < m; ++i) p.h(i) += u(rng) * 0.5;
  if (with_box) {
    p.lb = x0;
    p.ub = x0;
    for (int i = 0; i < n; ++i) {
      p.lb(i) -= u(rng);
      p.ub(i) += u(rng);
    }
  }
  return p;
}

VecX chance_bound_satisfaction(const MatX& A_LS, const MatX& G_delta, const DisturbanceModel& model, double alpha,
                               int draws, std::uint64_t seed) {
  const VecX bd = bounding_vector(A_LS, G_delta, model, alpha);
  const MatX a = -A_LS * G_delta;
  const int blocks = static_cast<int>(G_delta.cols() / 6);
  const Eigen::SelfAdjointEigenSolver<Mat6> es(model.covariance);
  const Mat6 root = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  VecX hits = VecX::Zero(a.rows());
  VecX d(G_delta.cols());
  for (int s = 0; s < draws; ++s) {
    for (int j = 0; j < blocks; ++j) {
      Vec6 z;
      for (int i = 0; i < 6; ++i) z(i) = g(rng);
      d.segment<6>(6 * j) = model.mean + root * z;
    }
    const VecX v = a * d;
    for (Eigen::Index i = 0; i < v.size(); ++i)
      if (v(i) >= bd(i)) hits(i) += 1.0;
  }
  return hits / draws;
}

std::vector<CheckResult> run_invariant_suite(bool quick, const std::string& orbit_file) {
  std::vector<CheckResult> out;
  const auto record = [&out](std::string name, bool ok, std::string detail) {
    out.push_back({std::move(name), ok, std::move(detail)});
  };

  std::optional<PeriodicOrbit> orbit;
  try {
    if (!orbit_file.empty()) {
      orbit = load_orbit(orbit_file);
    } else {
      orbit = southern_nrho(15674.0, SystemConstants::earth_moon(kEarthMoonSemimajorAxisKm));
    }
    const auto v = orbit_invariant_violations(*orbit);
    std::string d = v.empty() ? "nu=" + std::to_string(orbit->stability_index) : v.front();
    record("orbit invariants", v.empty(), d);
  } catch (const std::exception& e) {
    record("orbit invariants", false, e.what());
    orbit.reset();
  }

  if (orbit) {
    try {
      const SystemConstants c = SystemConstants::earth_moon(kEarthMoonMinDistanceKm);
      PeriodicOrbit o = *orbit;
      o.constants = c;
      const StmGrid grid = build_stm_grid(o, c, 0.0, 1080.0, 3, 1);
      const Mat6 composed = grid.transition(0, 3);
      const Mat6 direct = stm_between(o, c, 0.0, 3240.0);
      const double err = (composed - direct).cwiseAbs().maxCoeff() / direct.cwiseAbs().maxCoeff();
      record("stm composition", err <= 1e-8, "relative error " + fmt(err));
    } catch (const std::exception& e) {
      record("stm composition", false, e.what());
    }
  }

  {
    const double alpha = chi_square_quantile(0.95, 6);
    const double res = std::abs(chi_square_cdf_even(alpha, 6) - 0.95);
    record("chi-square quantile", res <= 1e-12, "alpha=" + std::to_string(alpha) + " residual " + fmt(res));
  }

  try {
    const int N = quick ? 8 : 40;
    const int draws = quick ? 20000 : 100000;
    const LosStack los = los_stack(LosGeometry{}, N);
    MatX Gd = MatX::Zero(6 * (N + 1), 6 * (N + 1));
    Mat6 step = Mat6::Identity();
    step.topRightCorner<3, 3>() = 300.0 * Mat3::Identity();
    for (int i = 0; i <= N; ++i) {
      Mat6 acc = Mat6::Identity();
      for (int j = i; j >= 0; --j) {
        Gd.block<6, 6>(6 * i, 6 * j) = acc;
        acc = acc * step;
      }
    }
    DisturbanceModel model;
    model.mean << 0.05, -0.02, 0.03, 1e-4, -2e-4, 1e-4;
    Mat6 L = Mat6::Identity() * 0.1;
    L.bottomRightCorner<3, 3>() = Mat3::Identity() * 3e-4;
    L(3, 0) = 1e-4;
    model.covariance = L * L.transpose();
    const VecX sat = chance_bound_satisfaction(los.A, Gd, model, chi_square_quantile(0.95, 6), draws, 7);
    record("chance bound", sat.minCoeff() >= 0.94, "min row satisfaction " + std::to_string(sat.minCoeff()));
  } catch (const std::exception& e) {
    record("chance bound", false, e.what());
  }

  {
    const int instances = quick ? 40 : 200;
    double worst_obj = 0.0, worst_kkt = 0.0;
    int failures = 0;
    for (int s = 0; s < instances; ++s) {
      const int n = 2 + s % 4;
      const int m = 1 + s % 5;
      const QpProblem p = random_qp(n, m, 1000 + s, s % 2 == 0);
      const auto ref = solve_qp_enumerate(p);
      const QpSolution sol = solve_qp(p);
      if (!ref || sol.status != QpStatus::optimal) {
        ++failures;
        continue;
      }
      const double o1 = qp_objective(p, *ref);
      worst_obj = std::max(worst_obj, std::abs(sol.objective - o1) / std::max(1.0, std::abs(o1)));
      worst_kkt = std::max(worst_kkt, sol.kkt.max());
    }
    record("qp oracle", failures == 0 && worst_obj <= 1e-9 && worst_kkt <= 1e-8,
           std::to_string(instances) + " instances, objective gap " + fmt(worst_obj) + ", kkt " + fmt(worst_kkt));
  }

  for (const auto& cfg : {impulsive_scenario(), continuous_scenario()}) {
    try {
      const std::string a = serialize_scenario(cfg);
      const std::string b = serialize_scenario(parse_scenario(a));
      record("config round-trip " + cfg.name, a == b, a == b ? "identical" : "serialized text differs");
    } catch (const std::exception& e) {
      record("config round-trip " + cfg.name, false, e.what());
    }
  }
  return out;
}

}  // namespace nrho
