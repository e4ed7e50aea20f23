#pragma once

#include <memory>
#include <optional>
#include <string>

#include "nrho/qp.hpp"
#include "nrho/uncertainty.hpp"

namespace nrho {

enum class ControllerMode { robust, nominal };

std::string to_string(ControllerMode m);
ControllerMode controller_mode_from_string(const std::string& s);

struct ControllerConfig {
  int horizon = 40;              // N
  double dt_s = 1080.0;          // node spacing
  double beta = 0.5;             // impulsive vs continuous effort weight
  double gamma = 1e6;            // terminal weight
  int arrival_node = 40;         // k_a, global node index
  double probability = 0.95;     // p of the chance constraint
  double lambda = 0.25;          // estimator forgetting factor
  Vec3 dv_max = Vec3::Constant(0.1);  // m/s
  Vec3 u_max = Vec3::Zero();          // m/s^2
  int n_u = 400;                 // thrust-bound sample intervals over the window
  int spline_order = 4;          // q
  int control_points = 44;       // n_c
  ControllerMode mode = ControllerMode::robust;
  /// Time unit (s) in which control magnitudes enter the effort terms: dV is weighted as dV * T,
  /// spline points as xi * T^2, so every term of the cost is in m^2.
  double cost_time_unit_s = 3600.0;
  QpSettings qp{};

  [[nodiscard]] bool impulsive_enabled() const { return dv_max.maxCoeff() > 0.0; }
  [[nodiscard]] bool continuous_enabled() const { return u_max.maxCoeff() > 0.0; }
  /// Collects every violated invariant; empty when valid.
  [[nodiscard]] std::vector<std::string> validation_errors() const;
  void validate() const;
};

/// Line-of-sight polytope A_L x <= b_L around the docking axis (+x of LVLH).
struct LosGeometry {
  double c_y = 1.0 / std::tan(M_PI / 6.0);
  double c_z = 1.0 / std::tan(M_PI / 6.0);
  double y0 = 5.0;  // m
  double z0 = 5.0;  // m

  [[nodiscard]] Eigen::Matrix<double, 5, 6> A_L() const;
  [[nodiscard]] Eigen::Matrix<double, 5, 1> b_L() const;
  /// max_i (A_L x - b_L)_i; positive means outside the region.
  [[nodiscard]] double violation(const Vec3& rho) const;
  [[nodiscard]] std::vector<std::string> validation_errors() const;
};

struct LosStack {
  MatX A;  // 5N x 6(N+1), node 0 excluded
  VecX b;
};

LosStack los_stack(const LosGeometry& geom, int horizon);

/// QP objective 1/2 z'Pz + q'z equal to J/2 up to a constant, z = [dV_S; xi_S].
struct Objective {
  MatX P;
  VecX q;
  double constant = 0.0;  // J(z) = z'Pz + 2 q'z + constant
};

Objective build_objective(const PredictionBundle& bundle, const Vec6& x_k, const ControllerConfig& config,
                          const VecX& delta_mean_stack);

/// Direct evaluation of J for a decision vector (test oracle and diagnostics).
double evaluate_cost(const PredictionBundle& bundle, const Vec6& x_k, const ControllerConfig& config,
                     const VecX& delta_mean_stack, const VecX& dv, const VecX& xi);

struct MpcStepResult {
  VecX dv;         // 3(N+1)
  VecX xi;         // 3 n_c (empty without continuous thrust)
  VecX predicted;  // mean stacked state
  double objective = 0.0;
  QpStatus status = QpStatus::optimal;
  bool fallback = false;
  KktResiduals kkt;
  int qp_iterations = 0;
  double solve_time_s = 0.0;
  double b_delta_norm = 0.0;
  VecX b_delta;
  VecX los_rhs;    // right-hand side of the LOS rows actually imposed (in the original units)
};

/// Everything the per-step solve needs besides the state.
struct ControllerContext {
  ControllerConfig config;
  LosGeometry geometry;
  std::shared_ptr<const StmGrid> grid;
  std::shared_ptr<const WindowSpline> spline;  // null when continuous thrust is off
  MatX sampled_basis;                          // B_{S,xi}
  LosStack los;
  double alpha = 0.0;

  static ControllerContext create(const ControllerConfig& config, const LosGeometry& geometry,
                                  std::shared_ptr<const StmGrid> grid);
};

/// Solves the robust (or nominal) QP for one window. `previous` enables the infeasibility fallback.
MpcStepResult solve_step(const Vec6& x_k, const PredictionBundle& bundle, const ControllerContext& ctx,
                         const DisturbanceModel& model, const MpcStepResult* previous = nullptr);

/// Controller state across a closed-loop run: estimator, last command, last bundle.
class Controller {
 public:
  explicit Controller(std::shared_ptr<const ControllerContext> ctx);

  /// One MPC cycle at global node k: updates the estimator with the residual of the last
  /// interval (if any), rebuilds the bundle, solves.
  MpcStepResult step(int k, const Vec6& x_k);

  [[nodiscard]] const EstimatorState& estimator() const { return estimator_; }
  [[nodiscard]] const std::vector<Vec6>& residuals() const { return residuals_; }
  [[nodiscard]] const ControllerContext& context() const { return *ctx_; }

 private:
  std::shared_ptr<const ControllerContext> ctx_;
  EstimatorState estimator_;
  std::optional<MpcStepResult> last_;
  std::optional<PredictionBundle> last_bundle_;
  Vec6 last_state_ = Vec6::Zero();
  std::vector<Vec6> residuals_;
};

/// Mission cost: sum |dV| plus sum |u| dT_nu over the thrust samples.
double mission_cost(const std::vector<Vec3>& impulses, const std::vector<Vec3>& thrust_samples,
                    double sample_dt);

}  // namespace nrho
