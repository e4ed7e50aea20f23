#pragma once

#include <string>
#include <vector>

#include "nrho/types.hpp"

namespace nrho {

/// minimize 1/2 x'Px + q'x  subject to  G x <= h,  lb <= x <= ub.
/// lb/ub may be empty (no box) or hold +-infinity entries.
struct QpProblem {
  MatX P;
  VecX q;
  MatX G;
  VecX h;
  VecX lb;
  VecX ub;

  [[nodiscard]] int variables() const { return static_cast<int>(q.size()); }
  [[nodiscard]] int inequalities() const { return static_cast<int>(h.size()); }
  /// Throws DimensionError / std::invalid_argument on malformed input.
  void validate() const;
};

enum class QpStatus { optimal, infeasible, max_iter };

std::string to_string(QpStatus s);

struct KktResiduals {
  double stationarity = 0.0;
  double primal = 0.0;
  double complementarity = 0.0;

  [[nodiscard]] double max() const;
};

struct QpSolution {
  VecX x;
  VecX duals;        // one per row of G, >= 0
  VecX lower_duals;  // box multipliers (empty without a box)
  VecX upper_duals;
  QpStatus status = QpStatus::max_iter;
  KktResiduals kkt;
  double objective = 0.0;
  int iterations = 0;
  std::vector<double> objective_trace;  // dual objective after every step, nondecreasing
};

struct QpSettings {
  int max_iterations = 0;  // 0 selects 10 (n + m) + 100
  double feasibility_tol = 1e-11;
  int refinement_steps = 3;
  /// Proximal weight relative to the largest diagonal entry of P, used when P is singular.
  double proximal_weight = 1e-7;
  int max_proximal_iterations = 500;
  /// P counts as singular when min(diag L)^2 < singular_tol * max(diag P), L its Cholesky factor.
  double singular_tol = 1e-14;
};

QpSolution solve_qp(const QpProblem& problem, const QpSettings& settings = {});

/// Scaled residuals: stationarity relative to the largest term of Px + q + G'y + box duals,
/// primal violation and complementarity on unit-normalized constraint rows.
KktResiduals kkt_check(const QpProblem& problem, const VecX& x, const VecX& duals,
                       const VecX& lower_duals = {}, const VecX& upper_duals = {});

double qp_objective(const QpProblem& problem, const VecX& x);

/// JSON dump of a problem for offline debugging.
std::string dump_qp(const QpProblem& problem);

}  // namespace nrho
