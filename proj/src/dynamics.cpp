#include "nrho/dynamics.hpp"

#include <cmath>

namespace nrho {

namespace {

constexpr double kSingularDistance = 1e-12;

struct PrimaryGeometry {
  Vec3 d1, d2;
  double r1, r2;
};

PrimaryGeometry geometry(const Vec3& r, double mu) {
  PrimaryGeometry g;
  g.d1 = r - Vec3(-mu, 0.0, 0.0);
  g.d2 = r - Vec3(1.0 - mu, 0.0, 0.0);
  g.r1 = g.d1.norm();
  g.r2 = g.d2.norm();
  if (g.r1 < kSingularDistance || g.r2 < kSingularDistance)
    throw SingularityError("state coincides with a primary");
  return g;
}

// Gravity-gradient contribution -mu/r^3 (I - 3 r r^T / r^2) for one primary.
Mat3 gravity_gradient(const Vec3& d, double r, double gm) {
  const double r3 = r * r * r;
  return -gm / r3 * (Mat3::Identity() - 3.0 * d * d.transpose() / (r * r));
}

}  // namespace

double SystemConstants::mean_motion() const {
  const double d_m = distance_km * 1e3;
  return std::sqrt((mu1 + mu2) * 1e9 / (d_m * d_m * d_m));
}

void SystemConstants::validate() const {
  if (!(mu2 > 0.0) || !(mu1 >= mu2)) throw std::invalid_argument("require mu1 >= mu2 > 0");
  if (!(distance_km > 0.0)) throw std::invalid_argument("primary separation must be positive");
  if (!(moon_radius_km >= 0.0)) throw std::invalid_argument("moon radius must be nonnegative");
}

SystemConstants SystemConstants::earth_moon(double distance_km) {
  SystemConstants c;
  c.distance_km = distance_km;
  return c;
}

Vec3 primary1_position(const SystemConstants& c) { return {-c.mass_ratio(), 0.0, 0.0}; }
Vec3 primary2_position(const SystemConstants& c) { return {1.0 - c.mass_ratio(), 0.0, 0.0}; }

Vec6 cr3bp_derivative(const Vec6& x, const SystemConstants& c, const Vec3& control) {
  const double mu = c.mass_ratio();
  const Vec3 r = x.head<3>();
  const Vec3 v = x.tail<3>();
  const auto g = geometry(r, mu);
  const Vec3 grav = -(1.0 - mu) * g.d1 / (g.r1 * g.r1 * g.r1) - mu * g.d2 / (g.r2 * g.r2 * g.r2);
  // -2 k x v - k x (k x r) with n = 1
  const Vec3 coriolis(2.0 * v.y(), -2.0 * v.x(), 0.0);
  const Vec3 centrifugal(r.x(), r.y(), 0.0);
  Vec6 dx;
  dx << v, grav + coriolis + centrifugal + control;
  return dx;
}

Mat6 cr3bp_jacobian(const Vec6& x, const SystemConstants& c) {
  const double mu = c.mass_ratio();
  const auto g = geometry(x.head<3>(), mu);
  Mat6 a = Mat6::Zero();
  a.topRightCorner<3, 3>().setIdentity();
  Mat3 u = gravity_gradient(g.d1, g.r1, 1.0 - mu) + gravity_gradient(g.d2, g.r2, mu);
  u(0, 0) += 1.0;
  u(1, 1) += 1.0;
  a.bottomLeftCorner<3, 3>() = u;
  a(3, 4) = 2.0;
  a(4, 3) = -2.0;
  return a;
}

Vec3 cr3bp_jerk(const Vec6& x, const SystemConstants& c) {
  const Mat6 a = cr3bp_jacobian(x, c);
  const Vec6 dx = cr3bp_derivative(x, c);
  return (a * dx).tail<3>();
}

double jacobi_constant(const Vec6& x, const SystemConstants& c) {
  const double mu = c.mass_ratio();
  const auto g = geometry(x.head<3>(), mu);
  return x(0) * x(0) + x(1) * x(1) + 2.0 * (1.0 - mu) / g.r1 + 2.0 * mu / g.r2 -
         x.tail<3>().squaredNorm();
}

SynodicState lagrange_point(int index, const SystemConstants& c) {
  const double mu = c.mass_ratio();
  SynodicState s;
  if (index == 4 || index == 5) {
    s.r = Vec3(0.5 - mu, (index == 4 ? 1.0 : -1.0) * std::sqrt(3.0) / 2.0, 0.0);
    return s;
  }
  if (index < 1 || index > 5) throw std::invalid_argument("Lagrange point index must be 1..5");
  // Collinear points: root of the x-component of the acceleration on the x axis.
  auto fx = [mu](double x) {
    const double d1 = x + mu, d2 = x - 1.0 + mu;
    return x - (1.0 - mu) * d1 / std::abs(d1 * d1 * d1) - mu * d2 / std::abs(d2 * d2 * d2);
  };
  double lo, hi;
  const double eps = 1e-9;
  switch (index) {
    case 1: lo = -mu + eps; hi = 1.0 - mu - eps; break;
    case 2: lo = 1.0 - mu + eps; hi = 2.0; break;
    default: lo = -2.0; hi = -mu - eps; break;
  }
  double flo = fx(lo);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = fx(mid);
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-16) break;
  }
  s.r = Vec3(0.5 * (lo + hi), 0.0, 0.0);
  return s;
}

VecX variational_derivative(const VecX& augmented, const SystemConstants& c) {
  if (augmented.size() != 42) throw DimensionError("augmented state must have 42 entries");
  const Vec6 x = augmented.head<6>();
  const Mat6 a = cr3bp_jacobian(x, c);
  const Mat6 phi = stm_from_augmented(augmented);
  const Mat6 dphi = a * phi;
  VecX out(42);
  out.head<6>() = cr3bp_derivative(x, c);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) out(6 + 6 * i + j) = dphi(i, j);
  return out;
}

Mat6 stm_from_augmented(const VecX& augmented) {
  Mat6 phi;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) phi(i, j) = augmented(6 + 6 * i + j);
  return phi;
}

Trajectory propagate(const SynodicState& start, double t_end, const SystemConstants& c,
                     const IntegratorSettings& settings, const ControlLaw& control) {
  OdeRhs rhs = [&](double t, const VecX& y, VecX& dy) {
    const Vec3 u = control ? control(t) : Vec3::Zero();
    dy = cr3bp_derivative(y.head<6>(), c, u);
  };
  return integrate(rhs, start.t, start.vector(), t_end, settings);
}

Trajectory propagate_with_stm(const SynodicState& start, double t_end, const SystemConstants& c,
                              const IntegratorSettings& settings) {
  VecX y0(42);
  y0.head<6>() = start.vector();
  const Mat6 eye = Mat6::Identity();
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) y0(6 + 6 * i + j) = eye(i, j);
  OdeRhs rhs = [&](double, const VecX& y, VecX& dy) { dy = variational_derivative(y, c); };
  return integrate(rhs, start.t, y0, t_end, settings);
}

}  // namespace nrho
