#include "nrho/integrator.hpp"

#include <algorithm>
#include <cmath>

namespace nrho {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                 a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                 a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                 b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                 e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

struct Stepper {
  const OdeRhs& rhs;
  const IntegratorSettings& s;
  VecX k2, k3, k4, k5, k6, k7, tmp;

  Stepper(const OdeRhs& f, const IntegratorSettings& settings, Eigen::Index n)
      : rhs(f), s(settings), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n) {}

  // One trial step; returns the scaled error norm and fills y_new, k7 (= f(t+h, y_new)).
  double trial(double t, const VecX& y, const VecX& k1, double h, VecX& y_new) {
    tmp = y + h * (a21 * k1);
    rhs(t + c2 * h, tmp, k2);
    tmp = y + h * (a31 * k1 + a32 * k2);
    rhs(t + c3 * h, tmp, k3);
    tmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs(t + c4 * h, tmp, k4);
    tmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(t + c5 * h, tmp, k5);
    tmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs(t + h, tmp, k6);
    y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    rhs(t + h, y_new, k7);
    tmp = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double sc = s.abs_tol + s.rel_tol * std::max(std::abs(y[i]), std::abs(y_new[i]));
      const double r = tmp[i] / sc;
      sum += r * r;
    }
    return std::sqrt(sum / static_cast<double>(y.size()));
  }
};

double initial_step(const OdeRhs& rhs, double t0, const VecX& y0, const VecX& f0, double dir,
                    const IntegratorSettings& s) {
  if (s.initial_step > 0.0) return s.initial_step;
  VecX sc = (s.abs_tol + s.rel_tol * y0.array().abs()).matrix();
  const double d0 = (y0.array() / sc.array()).matrix().norm() / std::sqrt(double(y0.size()));
  const double d1 = (f0.array() / sc.array()).matrix().norm() / std::sqrt(double(y0.size()));
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h0 = std::min(h0, s.max_step);
  VecX y1 = y0 + dir * h0 * f0;
  VecX f1(y0.size());
  rhs(t0 + dir * h0, y1, f1);
  const double d2 =
      ((f1 - f0).array() / sc.array()).matrix().norm() / std::sqrt(double(y0.size())) / h0;
  const double h1 = (std::max(d1, d2) <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                                                 : std::pow(0.01 / std::max(d1, d2), 0.2);
  return std::min({100.0 * h0, h1, s.max_step});
}

// Core loop. `accept` is called after every accepted step with (t_old, y_old, t_new, y_new) and
// may return true to stop.
template <typename OnAccept>
void run(const OdeRhs& rhs, double t0, const VecX& y0, double t1, const IntegratorSettings& s,
         OnAccept&& accept) {
  if (!(s.rel_tol > 0.0) || !(s.abs_tol > 0.0)) throw std::invalid_argument("tolerances must be positive");
  const double span = t1 - t0;
  if (span == 0.0) return;
  const double dir = span > 0.0 ? 1.0 : -1.0;
  Stepper st(rhs, s, y0.size());
  VecX y = y0, y_new(y0.size()), k1(y0.size());
  rhs(t0, y, k1);
  double t = t0;
  double h = std::min(initial_step(rhs, t0, y0, k1, dir, s), std::abs(span));
  long steps = 0;
  while (dir * (t1 - t) > 0.0) {
    if (++steps > s.max_steps) throw IntegrationError("integrator step budget exhausted");
    h = std::min(h, s.max_step);
    bool last = false;
    if (h >= std::abs(t1 - t) * (1.0 - 1e-12)) {
      h = std::abs(t1 - t);
      last = true;
    }
    const double min_h = 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t));
    if (h < min_h) throw IntegrationError("integrator step size underflow");
    const double err = st.trial(t, y, k1, dir * h, y_new);
    if (!std::isfinite(err)) {
      h *= 0.2;
      continue;
    }
    if (err <= 1.0) {
      const double t_new = last ? t1 : t + dir * h;
      const bool stop = accept(t, y, k1, t_new, y_new, st.k7);
      t = t_new;
      y.swap(y_new);
      k1 = st.k7;
      if (stop) return;
      const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
      h *= fac;
    } else {
      h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
    }
  }
}

VecX hermite(double t, double ta, const VecX& ya, const VecX& fa, double tb, const VecX& yb,
             const VecX& fb) {
  const double h = tb - ta;
  if (h == 0.0) return ya;
  const double s = (t - ta) / h;
  const double s2 = s * s, s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s, h01 = -2 * s3 + 3 * s2,
               h11 = s3 - s2;
  return h00 * ya + h10 * h * fa + h01 * yb + h11 * h * fb;
}

}  // namespace

void Trajectory::push(double t, VecX y, VecX dydt) {
  times_.push_back(t);
  states_.push_back(std::move(y));
  derivatives_.push_back(std::move(dydt));
}

VecX Trajectory::operator()(double t) const {
  if (times_.empty()) throw std::out_of_range("empty trajectory");
  if (times_.size() == 1) return states_.front();
  const bool forward = times_.back() >= times_.front();
  const double lo = forward ? times_.front() : times_.back();
  const double hi = forward ? times_.back() : times_.front();
  const double slack = 1e-12 * std::max(1.0, std::abs(hi - lo));
  if (t < lo - slack || t > hi + slack) throw std::out_of_range("time outside trajectory span");
  std::size_t i;
  if (forward) {
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    i = it == times_.begin() ? 0 : std::size_t(it - times_.begin()) - 1;
  } else {
    auto it = std::upper_bound(times_.begin(), times_.end(), t, std::greater<>());
    i = it == times_.begin() ? 0 : std::size_t(it - times_.begin()) - 1;
  }
  i = std::min(i, times_.size() - 2);
  return hermite(t, times_[i], states_[i], derivatives_[i], times_[i + 1], states_[i + 1],
                 derivatives_[i + 1]);
}

Trajectory integrate(const OdeRhs& rhs, double t0, const VecX& y0, double t1,
                     const IntegratorSettings& settings) {
  Trajectory traj;
  VecX f0(y0.size());
  rhs(t0, y0, f0);
  traj.push(t0, y0, f0);
  VecX last_y = y0, last_f = f0;
  double last_t = t0;
  run(rhs, t0, y0, t1, settings,
      [&](double, const VecX&, const VecX&, double tn, const VecX& yn, const VecX& fn) {
        if (settings.dense_output) {
          traj.push(tn, yn, fn);
        } else {
          last_t = tn;
          last_y = yn;
          last_f = fn;
        }
        return false;
      });
  if (!settings.dense_output && t1 != t0) traj.push(last_t, last_y, last_f);
  return traj;
}

EventHit integrate_to_event(const OdeRhs& rhs, double t0, const VecX& y0, double t_max,
                            const EventSpec& event, const IntegratorSettings& settings,
                            Trajectory* trajectory) {
  EventHit hit;
  double ta = 0.0, tb = 0.0, ga = 0.0, gb = 0.0;
  VecX ya;
  bool bracketed = false;
  if (trajectory) {
    VecX f0(y0.size());
    rhs(t0, y0, f0);
    trajectory->push(t0, y0, f0);
  }
  double g_prev = event.g(t0, y0);
  const double dir = t_max >= t0 ? 1.0 : -1.0;
  run(rhs, t0, y0, t_max, settings,
      [&](double to, const VecX& yo, const VecX&, double tn, const VecX& yn, const VecX& fn) {
        if (trajectory) trajectory->push(tn, yn, fn);
        const double g_new = event.g(tn, yn);
        const bool past_min = dir * (tn - t0) > event.min_elapsed;
        const bool sign_change = (g_prev < 0.0 && g_new >= 0.0) || (g_prev > 0.0 && g_new <= 0.0);
        const bool dir_ok = event.direction == 0 || (event.direction > 0 && g_new > g_prev) ||
                            (event.direction < 0 && g_new < g_prev);
        if (past_min && sign_change && dir_ok && dir * (to - t0) >= 0.0) {
          ta = to;
          tb = tn;
          ga = g_prev;
          gb = g_new;
          ya = yo;
          bracketed = true;
          return true;
        }
        g_prev = g_new;
        return false;
      });
  if (!bracketed) return hit;

  // Illinois-modified regula falsi, each evaluation an exact re-integration from ta.
  IntegratorSettings inner = settings;
  inner.dense_output = false;
  auto eval = [&](double t) -> std::pair<double, VecX> {
    if (t == ta) return {ga, ya};
    Trajectory tr = integrate(rhs, ta, ya, t, inner);
    return {event.g(t, tr.back()), tr.back()};
  };
  double lo = ta, hi = tb, glo = ga, ghi = gb;
  VecX y_best;
  double t_best = tb;
  int side = 0;
  for (int it = 0; it < 100; ++it) {
    double t = (glo * hi - ghi * lo) / (glo - ghi);
    if (!(t > std::min(lo, hi) && t < std::max(lo, hi))) t = 0.5 * (lo + hi);
    auto [g, y] = eval(t);
    t_best = t;
    y_best = y;
    if (g == 0.0 || std::abs(hi - lo) < 1e-15 * std::max(1.0, std::abs(t))) break;
    if ((g < 0.0) == (glo < 0.0)) {
      lo = t;
      glo = g;
      if (side == -1) ghi *= 0.5;
      side = -1;
    } else {
      hi = t;
      ghi = g;
      if (side == 1) glo *= 0.5;
      side = 1;
    }
    if (std::abs(hi - lo) < 4e-16 * std::max(1.0, std::abs(t))) break;
  }
  hit.found = true;
  hit.t = t_best;
  hit.y = y_best;
  return hit;
}

}  // namespace nrho
