#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "nrho/types.hpp"

namespace nrho {

struct IntegratorSettings {
  double rel_tol = 1e-12;
  double abs_tol = 1e-12;
  double max_step = std::numeric_limits<double>::infinity();
  double initial_step = 0.0;  // 0 selects a step automatically
  bool dense_output = true;
  long max_steps = 2'000'000;
};

using OdeRhs = std::function<void(double t, const VecX& y, VecX& dydt)>;

/// Accepted steps of an integration, with cubic Hermite interpolation between them.
class Trajectory {
 public:
  Trajectory() = default;

  void push(double t, VecX y, VecX dydt);

  [[nodiscard]] double t_begin() const { return times_.front(); }
  [[nodiscard]] double t_end() const { return times_.back(); }
  [[nodiscard]] const VecX& front() const { return states_.front(); }
  [[nodiscard]] const VecX& back() const { return states_.back(); }
  [[nodiscard]] std::size_t size() const { return times_.size(); }
  [[nodiscard]] bool empty() const { return times_.empty(); }

  [[nodiscard]] const std::vector<double>& times() const { return times_; }
  [[nodiscard]] const std::vector<VecX>& states() const { return states_; }
  [[nodiscard]] const std::vector<VecX>& derivatives() const { return derivatives_; }

  /// State at t; t must lie inside the integrated span (either direction).
  [[nodiscard]] VecX operator()(double t) const;

 private:
  std::vector<double> times_;
  std::vector<VecX> states_;
  std::vector<VecX> derivatives_;
};

/// Terminal event g(t, y) = 0. Crossings with t - t0 below min_elapsed are ignored.
struct EventSpec {
  std::function<double(double, const VecX&)> g;
  int direction = 0;  // +1 rising only, -1 falling only, 0 both
  double min_elapsed = 0.0;
};

struct EventHit {
  bool found = false;
  double t = 0.0;
  VecX y;
};

/// Embedded Dormand-Prince 5(4) integration from t0 to t1 (t1 < t0 integrates backwards).
/// When dense_output is false only the end points are kept.
Trajectory integrate(const OdeRhs& rhs, double t0, const VecX& y0, double t1,
                     const IntegratorSettings& settings);

/// Same as integrate() but stops at the first root of the event function.
/// The root is polished with Newton steps on g using short re-integrations.
EventHit integrate_to_event(const OdeRhs& rhs, double t0, const VecX& y0, double t_max,
                            const EventSpec& event, const IntegratorSettings& settings,
                            Trajectory* trajectory = nullptr);

}  // namespace nrho
