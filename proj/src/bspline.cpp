#include "nrho/bspline.hpp"

#include <algorithm>
#include <stdexcept>

namespace nrho {

BsplineBasis::BsplineBasis(int order, std::vector<double> knots) : order_(order), knots_(std::move(knots)) {
  if (order_ < 0) throw std::invalid_argument("spline order must be nonnegative");
  if (static_cast<int>(knots_.size()) < 2 * order_ + 2) throw std::invalid_argument("too few knots");
  if (!std::is_sorted(knots_.begin(), knots_.end())) throw std::invalid_argument("knots must be nondecreasing");
  if (!(t_end() > t_start())) throw std::invalid_argument("empty spline span");
}

BsplineBasis BsplineBasis::clamped_uniform(int order, int count, double t0, double t1) {
  if (count < order + 1) throw std::invalid_argument("need at least order + 1 control points");
  if (!(t1 > t0)) throw std::invalid_argument("spline span must be increasing");
  const int interior = count - order - 1;
  std::vector<double> k;
  k.reserve(count + order + 1);
  for (int i = 0; i <= order; ++i) k.push_back(t0);
  for (int i = 1; i <= interior; ++i) k.push_back(t0 + (t1 - t0) * i / (interior + 1));
  for (int i = 0; i <= order; ++i) k.push_back(t1);
  return BsplineBasis(order, std::move(k));
}

int BsplineBasis::span_at(double t, bool right) const {
  const int lo = order_, hi = static_cast<int>(knots_.size()) - order_ - 2;
  if (t < t_start() || t > t_end()) throw std::out_of_range("time outside the spline span");
  if (right) {
    for (int s = hi; s >= lo; --s)
      if (knots_[s] <= t && knots_[s] < knots_[s + 1]) return s;
    return lo;
  }
  for (int s = lo; s <= hi; ++s)
    if (knots_[s] < t && t <= knots_[s + 1]) return s;
  return lo;
}

int BsplineBasis::span(double t) const { return span_at(t, true); }

double BsplineBasis::recurse(int j, int p, double t, int s) const {
  if (p == 0) return j == s ? 1.0 : 0.0;
  double v = 0.0;
  const double a = knots_[j + p] - knots_[j];
  const double b = knots_[j + p + 1] - knots_[j + 1];
  if (a > 0.0) v += (t - knots_[j]) / a * recurse(j, p - 1, t, s);
  if (b > 0.0) v += (knots_[j + p + 1] - t) / b * recurse(j + 1, p - 1, t, s);
  return v;
}

double BsplineBasis::recurse_derivative(int j, int p, double t, int s, int k) const {
  if (k == 0) return recurse(j, p, t, s);
  if (p == 0) return 0.0;
  double v = 0.0;
  const double a = knots_[j + p] - knots_[j];
  const double b = knots_[j + p + 1] - knots_[j + 1];
  if (a > 0.0) v += p / a * recurse_derivative(j, p - 1, t, s, k - 1);
  if (b > 0.0) v -= p / b * recurse_derivative(j + 1, p - 1, t, s, k - 1);
  return v;
}

double BsplineBasis::eval(int j, double t) const {
  if (j < 0 || j >= count()) throw std::out_of_range("basis index out of range");
  return recurse(j, order_, t, span_at(t, true));
}

VecX BsplineBasis::eval_all(double t) const {
  const int s = span_at(t, true);
  VecX out = VecX::Zero(count());
  for (int j = std::max(0, s - order_); j <= s && j < count(); ++j) out(j) = recurse(j, order_, t, s);
  return out;
}

double BsplineBasis::derivative(int j, double t, int k, bool right) const {
  if (j < 0 || j >= count()) throw std::out_of_range("basis index out of range");
  if (k < 0) throw std::invalid_argument("derivative order must be nonnegative");
  return recurse_derivative(j, order_, t, span_at(t, right), k);
}

double BsplineBasis::integral(int j) const {
  if (j < 0 || j >= count()) throw std::out_of_range("basis index out of range");
  return (knots_[j + order_ + 1] - knots_[j]) / (order_ + 1);
}

}  // namespace nrho
