#include <doctest.h>

#include <cmath>
#include <random>

#include "support.hpp"

using namespace nrho;
using namespace nrho::test;

namespace {

// x-component of the effective-potential gradient on the x axis.
double collinear_residual(double x, double mu) {
  const double d1 = x + mu, d2 = x - 1.0 + mu;
  return x - (1.0 - mu) * d1 / std::pow(std::abs(d1), 3) - mu * d2 / std::pow(std::abs(d2), 3);
}

double bisect(double lo, double hi, double mu) {
  double flo = collinear_residual(lo, mu);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = collinear_residual(mid, mu);
    if ((fm < 0) == (flo < 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

Vec6 random_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.2, 1.2), v(-0.5, 0.5);
  Vec6 x;
  x << u(rng), u(rng), 0.3 * u(rng), v(rng), v(rng), v(rng);
  return x;
}

}  // namespace

TEST_SUITE("dynamics") {

TEST_CASE("L1 found by bisection is an equilibrium") {
  const auto& c = system();
  const double mu = c.mass_ratio();
  const double x1 = bisect(0.5, 1.0 - mu - 1e-3, mu);
  Vec6 s = Vec6::Zero();
  s(0) = x1;
  CHECK(cr3bp_derivative(s, c).tail<3>().norm() < 1e-12);
  CHECK(std::abs(lagrange_point(1, c).r.x() - x1) < 1e-12);
}

TEST_CASE("L2 abscissa") {
  const auto& c = system();
  const double mu = c.mass_ratio();
  CHECK(std::abs(mu - 0.012155) < 1e-5);
  const double x2 = bisect(1.0 - mu + 1e-3, 1.5, mu);
  CHECK(std::abs(collinear_residual(x2, mu)) < 1e-12);
  CHECK(std::abs(x2 - 1.1556) < 1e-3);
  CHECK(std::abs(lagrange_point(2, c).r.x() - x2) < 1e-12);
  Vec6 s = Vec6::Zero();
  s(0) = lagrange_point(3, c).r.x();
  CHECK(cr3bp_derivative(s, c).tail<3>().norm() < 1e-12);
}

TEST_CASE("triangular points") {
  const auto& c = system();
  const double mu = c.mass_ratio();
  const Vec3 l4 = lagrange_point(4, c).r, l5 = lagrange_point(5, c).r;
  CHECK((l4 - Vec3(0.5 - mu, std::sqrt(3.0) / 2, 0)).norm() < 1e-15);
  CHECK((l5 - Vec3(0.5 - mu, -std::sqrt(3.0) / 2, 0)).norm() < 1e-15);
  CHECK_THROWS(lagrange_point(6, c));
}

TEST_CASE("two-body limit near the Moon") {
  const auto& c = system();
  const double mu = c.mass_ratio();
  const double eps = 1e-4;
  Vec6 s = Vec6::Zero();
  s(0) = 1.0 - mu - eps;
  const Vec6 d = cr3bp_derivative(s, c);
  const double expected = mu / (eps * eps);
  CHECK(d(3) > 0.0);
  CHECK(std::abs(d(3) - expected) / expected < 1e-3);
}

TEST_CASE("planar states stay planar") {
  Vec6 s;
  s << 0.8, 0.1, 0.0, 0.05, 0.2, 0.0;
  const Vec6 d = cr3bp_derivative(s, system());
  CHECK(d(2) == 0.0);
  CHECK(d(5) == 0.0);
  const Trajectory tr = propagate(SynodicState::from_vector(s), 3.0, system(), {});
  CHECK(std::abs(tr.back()(2)) < 1e-14);
  CHECK(std::abs(tr.back()(5)) < 1e-14);
}

TEST_CASE("Jacobi constant: potential-only and mirror symmetry") {
  const auto& c = system();
  const double mu = c.mass_ratio();
  Vec6 s;
  s << 0.9, 0.2, 0.1, 0.3, -0.2, 0.1;
  Vec6 still = s;
  still.tail<3>().setZero();
  const double r1 = (s.head<3>() - Vec3(-mu, 0, 0)).norm(), r2 = (s.head<3>() - Vec3(1 - mu, 0, 0)).norm();
  const double potential = s(0) * s(0) + s(1) * s(1) + 2 * (1 - mu) / r1 + 2 * mu / r2;
  CHECK(std::abs(jacobi_constant(still, c) - potential) < 1e-14);
  Vec6 m = s;
  m(1) = -m(1);
  m(4) = -m(4);
  CHECK(std::abs(jacobi_constant(m, c) - jacobi_constant(s, c)) < 1e-14);
}

TEST_CASE("Jacobi drift over one period of the target orbit") {
  const auto o = target_orbit();
  const Trajectory tr = propagate(o->initial_state, o->period, o->constants, {});
  double worst = 0.0;
  const double c0 = jacobi_constant(o->initial_state.vector(), o->constants);
  for (const auto& y : tr.states()) worst = std::max(worst, std::abs(jacobi_constant(y, o->constants) - c0));
  CHECK(worst <= 1e-10);
}

TEST_CASE("L4 persists and zero-length propagation") {
  const auto& c = system();
  const SynodicState l4 = lagrange_point(4, c);
  const Trajectory tr = propagate(l4, 10.0, c, {});
  CHECK((tr.back() - l4.vector()).norm() < 1e-8);
  const Trajectory z = propagate(l4, 0.0, c, {});
  CHECK((z.back() - l4.vector()).norm() == 0.0);
}

TEST_CASE("target orbit returns to its start after one period") {
  const auto o = target_orbit();
  const Trajectory tr = propagate(o->initial_state, o->period, o->constants, {1e-13, 1e-13});
  CHECK((tr.back() - o->initial_state.vector()).norm() <= 1e-10);
}

TEST_CASE("analytic Jacobian matches central differences at 100 states") {
  const auto& c = system();
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    const Vec6 x = random_state(rng);
    const Mat6 A = cr3bp_jacobian(x, c);
    Mat6 fd;
    const double h = 1e-6;
    for (int j = 0; j < 6; ++j) {
      Vec6 p = x, m = x;
      p(j) += h;
      m(j) -= h;
      fd.col(j) = (cr3bp_derivative(p, c) - cr3bp_derivative(m, c)) / (2 * h);
    }
    worst = std::max(worst, max_abs(A - fd));
    CHECK(std::abs(A.trace()) < 1e-14);
  }
  CHECK(worst <= 1e-7);
}

TEST_CASE("jerk matches the time derivative of the acceleration") {
  const auto o = target_orbit();
  const auto& c = o->constants;
  for (double t : {0.0, 0.3, 1.1}) {
    const Vec6 x = o->state_at(t).vector();
    const double h = 1e-5;
    const Trajectory fwd = propagate(SynodicState::from_vector(x), h, c, {1e-13, 1e-13});
    const Trajectory back = propagate(SynodicState::from_vector(x), -h, c, {1e-13, 1e-13});
    const Vec3 fd = (cr3bp_derivative(fwd.back(), c).tail<3>() - cr3bp_derivative(back.back(), c).tail<3>()) / (2 * h);
    const Vec3 j = cr3bp_jerk(x, c);
    CHECK((j - fd).norm() <= 1e-6 * std::max(1.0, j.norm()));
  }
}

TEST_CASE("variational equations") {
  const auto o = target_orbit();
  const auto& c = o->constants;
  const Trajectory z = propagate_with_stm(o->initial_state, 0.0, c, {});
  CHECK(max_abs(stm_from_augmented(z.back()) - Mat6::Identity()) == 0.0);

  const Trajectory full = propagate_with_stm(o->initial_state, o->period, c, {1e-13, 1e-13});
  CHECK(std::abs(stm_from_augmented(full.back()).determinant() - 1.0) <= 1e-8);

  // Short arc: STM columns against central differences of the flow.
  const double T = 0.2;
  const Mat6 phi = stm_from_augmented(propagate_with_stm(o->initial_state, T, c, {1e-13, 1e-13}).back());
  Mat6 fd;
  for (int j = 0; j < 6; ++j) {
    const double h = 1e-6;
    Vec6 p = o->initial_state.vector(), m = p;
    p(j) += h;
    m(j) -= h;
    fd.col(j) = (propagate(SynodicState::from_vector(p), T, c, {1e-13, 1e-13}).back() -
                 propagate(SynodicState::from_vector(m), T, c, {1e-13, 1e-13}).back()) /
                (2 * h);
  }
  CHECK(max_abs(phi - fd) <= 1e-6 * max_abs(phi));
}

TEST_CASE("constants validation") {
  SystemConstants c;
  c.distance_km = -1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK_NOTHROW(system().validate());
  CHECK(std::abs(system().mean_motion() - std::sqrt((398600.4 + 4904.869) / std::pow(363104.0, 3))) < 1e-18);
}

}
