#pragma once

#include <vector>

#include "nrho/types.hpp"

namespace nrho {

/// B-spline basis of degree `order` (q) with `count` (n_c) functions, knots.size() = n_c + q + 1.
/// Basis indices are zero-based here: j = 0 .. n_c - 1.
class BsplineBasis {
 public:
  BsplineBasis() = default;
  BsplineBasis(int order, std::vector<double> knots);

  /// (q+1)-fold end knots, uniform interior knots over [t0, t1].
  static BsplineBasis clamped_uniform(int order, int count, double t0, double t1);

  [[nodiscard]] int order() const { return order_; }
  [[nodiscard]] int count() const { return static_cast<int>(knots_.size()) - order_ - 1; }
  [[nodiscard]] const std::vector<double>& knots() const { return knots_; }
  [[nodiscard]] double t_start() const { return knots_[order_]; }
  [[nodiscard]] double t_end() const { return knots_[knots_.size() - order_ - 1]; }

  /// Knot span index s with knots[s] <= t < knots[s+1] (the last non-empty span at t_end).
  [[nodiscard]] int span(double t) const;

  /// B_{j,q}(t) via the Cox-de Boor recursion.
  [[nodiscard]] double eval(int j, double t) const;

  /// All n_c basis values at t.
  [[nodiscard]] VecX eval_all(double t) const;

  /// k-th derivative of B_{j,q} at t. `right` picks the one-sided limit at a knot.
  [[nodiscard]] double derivative(int j, double t, int k, bool right = true) const;

  /// Exact integral of B_{j,q} over the whole span.
  [[nodiscard]] double integral(int j) const;

 private:
  int order_ = 0;
  std::vector<double> knots_;

  [[nodiscard]] double recurse(int j, int p, double t, int s) const;
  [[nodiscard]] double recurse_derivative(int j, int p, double t, int s, int k) const;
  [[nodiscard]] int span_at(double t, bool right) const;
};

}  // namespace nrho
