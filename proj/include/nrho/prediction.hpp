#pragma once

#include <vector>

#include "nrho/bspline.hpp"
#include "nrho/frames.hpp"

namespace nrho {

/// phi(t1, t0) of the linearized relative model along the orbit (t in seconds).
Mat6 stm_between(const PeriodicOrbit& orbit, const SystemConstants& c, double t0, double t1,
                 const IntegratorSettings& settings = {});

struct QuadratureSettings {
  int initial_subintervals = 20;
  int max_halvings = 8;
  double rel_tol = 1e-12;
};

/// Single-interval transition matrices on a uniform grid t_g = t0 + g dt, plus the control
/// moments M_{g,p} = int_0^dt phi(t_{g+1}, t_g + s) B (s/dt)^p ds, p = 0..degree.
struct StmGrid {
  double t0 = 0.0;
  double dt = 0.0;
  int degree = 0;
  std::vector<Mat6> step;                  // phi(t_{g+1}, t_g)
  std::vector<std::vector<Mat63>> moment;  // [g][p]
  std::vector<int> quadrature_points;      // trapezoid sub-intervals used per interval

  [[nodiscard]] int intervals() const { return static_cast<int>(step.size()); }
  [[nodiscard]] double time(int g) const { return t0 + g * dt; }
  /// phi(t_j, t_i) for grid indices i <= j, by composition.
  [[nodiscard]] Mat6 transition(int i, int j) const;
};

/// Moments are integrated with the trapezoidal rule on a halving subgrid; successive trapezoid
/// estimates are Richardson-extrapolated and the halving stops once they agree to rel_tol.
StmGrid build_stm_grid(const PeriodicOrbit& orbit, const SystemConstants& c, double t0, double dt,
                       int intervals, int degree, const IntegratorSettings& settings = {},
                       const QuadratureSettings& quad = {});

/// Spline control parameterization tied to an N-step window: the basis spans [0, N dt] in
/// window-relative time and every dt interval lies inside one knot span.
class WindowSpline {
 public:
  WindowSpline() = default;
  WindowSpline(BsplineBasis basis, int horizon, double dt);

  [[nodiscard]] const BsplineBasis& basis() const { return basis_; }
  [[nodiscard]] int count() const { return basis_.count(); }
  [[nodiscard]] int horizon() const { return horizon_; }
  [[nodiscard]] double dt() const { return dt_; }
  /// Coefficients of b_l on interval i (0-based) as a polynomial in s/dt: rows l, columns power.
  [[nodiscard]] const MatX& piece(int i) const { return pieces_[i]; }

  /// u(t) for window-relative time t and stacked control points xi (3 n_c).
  [[nodiscard]] Vec3 control(const VecX& xi, double t) const;

  /// B_{S,xi}: stacked 3x3n_c basis matrices at n_u + 1 instants equispaced over the window.
  [[nodiscard]] MatX sampled_matrix(int n_u) const;

 private:
  BsplineBasis basis_;
  int horizon_ = 0;
  double dt_ = 0.0;
  std::vector<MatX> pieces_;
};

/// Stacked prediction x_S = F x_k + G_dv dV_S + G_xi xi_S + G_delta delta_S over nodes k..k+N.
struct PredictionBundle {
  int k = 0;
  int horizon = 0;
  std::vector<double> node_times;
  MatX F;        // 6(N+1) x 6
  MatX G_dv;     // 6(N+1) x 3(N+1)
  MatX G_xi;     // 6(N+1) x 3 n_c   (empty columns when there is no spline)
  MatX G_delta;  // 6(N+1) x 6(N+1)
  std::vector<Mat6> stm;  // phi(t_{k+j}, t_{k+i}) at index j (N+1) + i, i <= j

  [[nodiscard]] const Mat6& transition(int i, int j) const { return stm[j * (horizon + 1) + i]; }
  [[nodiscard]] int xi_size() const { return static_cast<int>(G_xi.cols()); }
};

/// Window starting at grid node k with `horizon` steps; the grid must cover k + horizon.
PredictionBundle build_bundle(const StmGrid& grid, int k, int horizon, const WindowSpline* spline);

/// Direct construction: builds a grid for exactly this window and assembles it.
PredictionBundle build_bundle(const PeriodicOrbit& orbit, const SystemConstants& c, double t_k,
                              int horizon, double dt, const WindowSpline* spline,
                              const IntegratorSettings& settings = {});

VecX predict_state(const PredictionBundle& b, const Vec6& x_k, const VecX& dv, const VecX& xi,
                   const VecX& delta);

}  // namespace nrho
