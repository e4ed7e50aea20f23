#include "nrho/qp.hpp"

#include <Eigen/Sparse>
#include <cmath>
#include <json.hpp>
#include <limits>

namespace nrho {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Constraints in the internal form n_i' x >= b_i with unit n_i.
struct Rows {
  Eigen::SparseMatrix<double> N;  // n x M, one column per constraint
  VecX b;
  enum Kind { general, upper, lower };
  std::vector<Kind> kind;
  std::vector<int> index;
  std::vector<double> scale;  // |g_i| for general rows
};

struct Core {
  VecX x;
  std::vector<int> active;
  VecX u;
  MatX J, R;
  QpStatus status = QpStatus::max_iter;
  int iterations = 0;
  std::vector<double> trace;
};

void givens(double a, double b, double& c, double& s, double& h) {
  h = std::hypot(a, b);
  if (h == 0.0) {
    c = 1.0;
    s = 0.0;
    return;
  }
  c = a / h;
  s = b / h;
}

// Goldfarb-Idnani dual active-set iterations for a strictly convex problem given L with P = L L'.
Core goldfarb_idnani(const Eigen::LLT<MatX>& llt, const VecX& q, const Rows& rows, const QpSettings& st) {
  const int n = static_cast<int>(q.size());
  const int m = static_cast<int>(rows.b.size());
  Core c;
  // J = L^{-T}
  c.J = llt.matrixU().solve(MatX::Identity(n, n));
  c.R = MatX::Zero(n, n);
  c.x = -llt.solve(q);
  double f = 0.5 * q.dot(c.x);
  c.trace.push_back(f);
  int iq = 0;
  std::vector<char> is_active(m, 0);
  VecX u = VecX::Zero(n + 1);
  const int max_it = st.max_iterations > 0 ? st.max_iterations : 10 * (n + m) + 100;
  const double eps = std::numeric_limits<double>::epsilon();

  auto drop = [&](int l) {
    is_active[c.active[l]] = 0;
    c.active.erase(c.active.begin() + l);
    for (int k = l; k < iq - 1; ++k) {
      c.R.col(k) = c.R.col(k + 1);
      u(k) = u(k + 1);
    }
    u(iq - 1) = u(iq);  // the pending multiplier moves down with the set
    u(iq) = 0.0;
    c.R.col(iq - 1).setZero();
    --iq;
    for (int j = l; j < iq; ++j) {
      double cc, ss, hh;
      givens(c.R(j, j), c.R(j + 1, j), cc, ss, hh);
      if (ss == 0.0) continue;
      for (int k = j; k < iq; ++k) {
        const double t1 = c.R(j, k), t2 = c.R(j + 1, k);
        c.R(j, k) = cc * t1 + ss * t2;
        c.R(j + 1, k) = -ss * t1 + cc * t2;
      }
      c.R(j + 1, j) = 0.0;
      const VecX a = c.J.col(j), b = c.J.col(j + 1);
      c.J.col(j) = cc * a + ss * b;
      c.J.col(j + 1) = -ss * a + cc * b;
    }
  };

  auto add = [&](int p, VecX d) {
    for (int j = n - 1; j > iq; --j) {
      double cc, ss, hh;
      givens(d(j - 1), d(j), cc, ss, hh);
      if (ss == 0.0) continue;
      d(j - 1) = hh;
      d(j) = 0.0;
      const VecX a = c.J.col(j - 1), b = c.J.col(j);
      c.J.col(j - 1) = cc * a + ss * b;
      c.J.col(j) = -ss * a + cc * b;
    }
    if (std::abs(d(iq)) <= eps * std::max(1.0, d.head(iq + 1).norm())) return false;
    c.R.col(iq).head(iq + 1) = d.head(iq + 1);
    c.active.push_back(p);
    is_active[p] = 1;
    ++iq;
    return true;
  };

  for (c.iterations = 0; c.iterations < max_it;) {
    // step 1: most violated inactive constraint
    VecX s = rows.N.transpose() * c.x - rows.b;
    int p = -1;
    double worst = 0.0;
    for (int i = 0; i < m; ++i) {
      if (is_active[i]) continue;
      const double tol = st.feasibility_tol * (1.0 + std::abs(rows.b(i)));
      if (s(i) < -tol && s(i) < worst) {
        worst = s(i);
        p = i;
      }
    }
    if (p < 0) {
      c.status = QpStatus::optimal;
      break;
    }
    u(iq) = 0.0;
    double sp = s(p);
    bool added = false;
    while (!added && c.iterations < max_it) {
      ++c.iterations;
      const VecX np = VecX(rows.N.col(p));
      const VecX d = c.J.transpose() * np;
      const VecX z = c.J.rightCols(n - iq) * d.tail(n - iq);
      VecX r(iq);
      if (iq > 0) r = c.R.topLeftCorner(iq, iq).triangularView<Eigen::Upper>().solve(d.head(iq));
      double t1 = kInf;
      int l = -1;
      for (int k = 0; k < iq; ++k)
        if (r(k) > eps && u(k) / r(k) < t1) {
          t1 = u(k) / r(k);
          l = k;
        }
      const double znp = z.dot(np);
      const double t2 = (z.norm() > eps * std::max(1.0, c.x.norm()) && znp > 0.0) ? -sp / znp : kInf;
      const double t = std::min(t1, t2);
      if (t == kInf) {
        c.status = QpStatus::infeasible;
        c.u = u.head(iq);
        return c;
      }
      if (t2 == kInf) {
        u.head(iq) -= t * r;
        u(iq) += t;
        drop(l);
        c.trace.push_back(f);
        continue;
      }
      c.x += t * z;
      f += t * znp * (0.5 * t + u(iq));
      u.head(iq) -= t * r;
      u(iq) += t;
      c.trace.push_back(f);
      if (t == t2) {
        if (!add(p, d)) {
          c.status = QpStatus::infeasible;
          c.u = u.head(iq);
          return c;
        }
        added = true;
      } else {
        drop(l);
        sp = np.dot(c.x) - rows.b(p);
      }
    }
    if (!added) break;
  }
  c.u = u.head(iq);
  return c;
}

// Newton refinement of the equality-constrained KKT system on the final active set.
void refine(Core& c, const MatX& P, const VecX& q, const Rows& rows, int steps) {
  const int iq = static_cast<int>(c.active.size());
  const int n = static_cast<int>(q.size());
  if (steps <= 0) return;
  MatX Na(n, iq);
  VecX ba(iq);
  for (int k = 0; k < iq; ++k) {
    Na.col(k) = VecX(rows.N.col(c.active[k]));
    ba(k) = rows.b(c.active[k]);
  }
  auto residual_norm = [&](const VecX& x, const VecX& u) {
    const VecX r1 = P * x + q - Na * u;
    const VecX r2 = Na.transpose() * x - ba;
    return std::max(r1.cwiseAbs().maxCoeff(), iq ? r2.cwiseAbs().maxCoeff() : 0.0);
  };
  const auto Rt = c.R.topLeftCorner(iq, iq).triangularView<Eigen::Upper>();
  for (int it = 0; it < steps; ++it) {
    const VecX r1 = P * c.x + q - Na * c.u;
    const VecX r2 = Na.transpose() * c.x - ba;
    VecX a(iq), du(iq);
    if (iq > 0) a = -Rt.transpose().solve(r2);
    const VecX cc = -c.J.rightCols(n - iq).transpose() * r1;
    VecX dx = c.J.rightCols(n - iq) * cc;
    if (iq > 0) {
      dx += c.J.leftCols(iq) * a;
      du = Rt.solve(a + c.J.leftCols(iq).transpose() * r1);
    }
    const VecX xn = c.x + dx;
    const VecX un = iq ? VecX(c.u + du) : c.u;
    if (residual_norm(xn, un) < residual_norm(c.x, c.u)) {
      c.x = xn;
      c.u = un;
    } else {
      break;
    }
  }
  for (int k = 0; k < iq; ++k) c.u(k) = std::max(c.u(k), 0.0);
}

}  // namespace

std::string to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::max_iter: return "max_iter";
  }
  return "unknown";
}

double KktResiduals::max() const { return std::max({stationarity, primal, complementarity}); }

void QpProblem::validate() const {
  const int n = variables();
  if (P.rows() != n || P.cols() != n) throw DimensionError("P must be n x n");
  if (G.rows() != h.size() || (G.rows() > 0 && G.cols() != n)) throw DimensionError("G must be m x n with h of size m");
  if (lb.size() != 0 && lb.size() != n) throw DimensionError("lb must be empty or of size n");
  if (ub.size() != 0 && ub.size() != n) throw DimensionError("ub must be empty or of size n");
  if (!P.allFinite() || !q.allFinite() || !G.allFinite() || !h.allFinite())
    throw std::invalid_argument("QP data must be finite");
  const double scale = std::max(1.0, P.cwiseAbs().maxCoeff());
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) throw std::invalid_argument("P must be symmetric");
  for (int i = 0; i < lb.size(); ++i)
    if (ub.size() && lb(i) > ub(i)) throw std::invalid_argument("lb must not exceed ub");
}

double qp_objective(const QpProblem& p, const VecX& x) { return 0.5 * x.dot(p.P * x) + p.q.dot(x); }

QpSolution solve_qp(const QpProblem& problem, const QpSettings& settings) {
  problem.validate();
  const int n = problem.variables();
  QpSolution sol;
  sol.duals = VecX::Zero(problem.inequalities());
  if (problem.lb.size()) sol.lower_duals = VecX::Zero(n);
  if (problem.ub.size()) sol.upper_duals = VecX::Zero(n);

  Rows rows;
  std::vector<VecX> cols;
  std::vector<double> bs;
  for (int i = 0; i < problem.inequalities(); ++i) {
    const double norm = problem.G.row(i).norm();
    if (norm == 0.0) {
      if (problem.h(i) < 0.0) {
        sol.status = QpStatus::infeasible;
        sol.x = VecX::Zero(n);
        return sol;
      }
      continue;
    }
    cols.push_back(-problem.G.row(i).transpose() / norm);
    bs.push_back(-problem.h(i) / norm);
    rows.kind.push_back(Rows::general);
    rows.index.push_back(i);
    rows.scale.push_back(norm);
  }
  for (int i = 0; i < problem.ub.size(); ++i) {
    if (!std::isfinite(problem.ub(i))) continue;
    cols.push_back(-VecX::Unit(n, i));
    bs.push_back(-problem.ub(i));
    rows.kind.push_back(Rows::upper);
    rows.index.push_back(i);
    rows.scale.push_back(1.0);
  }
  for (int i = 0; i < problem.lb.size(); ++i) {
    if (!std::isfinite(problem.lb(i))) continue;
    cols.push_back(VecX::Unit(n, i));
    bs.push_back(problem.lb(i));
    rows.kind.push_back(Rows::lower);
    rows.index.push_back(i);
    rows.scale.push_back(1.0);
  }
  std::vector<Eigen::Triplet<double>> nz;
  rows.b.resize(static_cast<int>(bs.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    for (int i = 0; i < n; ++i)
      if (cols[k](i) != 0.0) nz.emplace_back(i, static_cast<int>(k), cols[k](i));
    rows.b(static_cast<int>(k)) = bs[k];
  }
  rows.N.resize(n, static_cast<int>(cols.size()));
  rows.N.setFromTriplets(nz.begin(), nz.end());

  const double pmax = std::max(problem.P.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  Eigen::LLT<MatX> llt(problem.P);
  bool strictly_convex = llt.info() == Eigen::Success;
  if (strictly_convex) {
    const auto& L = llt.matrixLLT();
    const double dmin = L.diagonal().minCoeff();
    strictly_convex = dmin * dmin > settings.singular_tol * pmax;
  }

  Core core;
  if (strictly_convex) {
    core = goldfarb_idnani(llt, problem.q, rows, settings);
    if (core.status == QpStatus::optimal) refine(core, problem.P, problem.q, rows, settings.refinement_steps);
  } else {
    // proximal point iterations on P + rho I
    const double rho = settings.proximal_weight * pmax + 1e-12;
    const MatX Pr = problem.P + rho * MatX::Identity(n, n);
    Eigen::LLT<MatX> lr(Pr);
    if (lr.info() != Eigen::Success) throw std::invalid_argument("P is not positive semidefinite");
    VecX xk = VecX::Zero(n);
    for (int k = 0; k < settings.max_proximal_iterations; ++k) {
      const VecX qk = problem.q - rho * xk;
      core = goldfarb_idnani(lr, qk, rows, settings);
      if (core.status != QpStatus::optimal) break;
      refine(core, Pr, qk, rows, settings.refinement_steps);
      const double change = (core.x - xk).cwiseAbs().maxCoeff();
      xk = core.x;
      if (change <= 1e-13 * (1.0 + xk.cwiseAbs().maxCoeff())) break;
      if (k + 1 == settings.max_proximal_iterations) core.status = QpStatus::max_iter;
    }
  }

  sol.status = core.status;
  sol.x = core.x;
  sol.iterations = core.iterations;
  sol.objective_trace = core.trace;
  for (std::size_t k = 0; k < core.active.size(); ++k) {
    const int c = core.active[k];
    const double u = core.u(static_cast<int>(k));
    switch (rows.kind[c]) {
      case Rows::general: sol.duals(rows.index[c]) = u / rows.scale[c]; break;
      case Rows::upper: sol.upper_duals(rows.index[c]) = u; break;
      case Rows::lower: sol.lower_duals(rows.index[c]) = u; break;
    }
  }
  sol.objective = qp_objective(problem, sol.x);
  sol.kkt = kkt_check(problem, sol.x, sol.duals, sol.lower_duals, sol.upper_duals);
  return sol;
}

KktResiduals kkt_check(const QpProblem& p, const VecX& x, const VecX& y, const VecX& zl, const VecX& zu) {
  const int n = p.variables();
  if (x.size() != n || y.size() != p.inequalities()) throw DimensionError("kkt_check sizes");
  if ((zl.size() && zl.size() != n) || (zu.size() && zu.size() != n)) throw DimensionError("kkt_check box sizes");
  KktResiduals r;
  const VecX px = p.P * x;
  const VecX gy = p.inequalities() ? VecX(p.G.transpose() * y) : VecX::Zero(n);
  VecX grad = px + p.q + gy;
  double scale = std::max({1.0, px.cwiseAbs().maxCoeff(), p.q.cwiseAbs().maxCoeff(),
                           n ? gy.cwiseAbs().maxCoeff() : 0.0});
  if (zu.size()) {
    grad += zu;
    scale = std::max(scale, zu.cwiseAbs().maxCoeff());
  }
  if (zl.size()) {
    grad -= zl;
    scale = std::max(scale, zl.cwiseAbs().maxCoeff());
  }
  double dual_neg = 0.0;
  for (int i = 0; i < y.size(); ++i) dual_neg = std::max(dual_neg, -y(i) * p.G.row(i).norm());
  for (int i = 0; i < zl.size(); ++i) dual_neg = std::max(dual_neg, -zl(i));
  for (int i = 0; i < zu.size(); ++i) dual_neg = std::max(dual_neg, -zu(i));
  r.stationarity = std::max(grad.cwiseAbs().maxCoeff(), dual_neg) / scale;

  const double xs = std::max(1.0, x.cwiseAbs().maxCoeff());
  double viol = 0.0, comp = 0.0;
  for (int i = 0; i < p.inequalities(); ++i) {
    const double norm = p.G.row(i).norm();
    const double slack = p.h(i) - p.G.row(i).dot(x);
    if (norm == 0.0) {
      viol = std::max(viol, -slack);
      continue;
    }
    viol = std::max(viol, -slack / norm);
    comp = std::max(comp, std::abs(y(i) * slack));
  }
  for (int i = 0; i < p.ub.size(); ++i)
    if (std::isfinite(p.ub(i))) {
      viol = std::max(viol, x(i) - p.ub(i));
      if (zu.size()) comp = std::max(comp, std::abs(zu(i) * (p.ub(i) - x(i))));
    }
  for (int i = 0; i < p.lb.size(); ++i)
    if (std::isfinite(p.lb(i))) {
      viol = std::max(viol, p.lb(i) - x(i));
      if (zl.size()) comp = std::max(comp, std::abs(zl(i) * (x(i) - p.lb(i))));
    }
  r.primal = viol / xs;
  r.complementarity = comp / (scale * xs);
  return r;
}

std::string dump_qp(const QpProblem& p) {
  using nlohmann::json;
  auto vec = [](const VecX& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  auto mat = [&](const MatX& m) {
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) rows.push_back(vec(m.row(i).transpose()));
    return rows;
  };
  json j;
  j["schema"] = "nrho.qp";
  j["version"] = 1;
  j["P"] = mat(p.P);
  j["q"] = vec(p.q);
  j["G"] = mat(p.G);
  j["h"] = vec(p.h);
  j["lb"] = vec(p.lb);
  j["ub"] = vec(p.ub);
  return j.dump();
}

}  // namespace nrho
