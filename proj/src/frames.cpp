#include "nrho/frames.hpp"

#include <cmath>

namespace nrho {

LvlhFrame lvlh_from_state(const Vec6& x, const SystemConstants& c) {
  const double n = c.mean_motion();
  const double len = c.length_unit_m();
  const Vec3 r1 = primary1_position(c), r2 = primary2_position(c);

  const Vec3 r = x.head<3>() - r2;
  const Vec3 v = x.tail<3>();
  const Vec3 a = cr3bp_derivative(x, c).tail<3>();
  const Vec3 jerk = cr3bp_jerk(x, c);

  const Vec3 h = r.cross(v);
  const double hn = h.norm(), rn = r.norm();
  if (!(hn > 1e-12 * rn * std::max(1.0, v.norm())))
    throw DegenerateFrameError("target momentum about the second primary vanishes");

  LvlhFrame f;
  const Vec3 k = -r / rn;
  const Vec3 j = -h / hn;
  const Vec3 i = j.cross(k);
  f.dcm.row(0) = i.transpose();
  f.dcm.row(1) = j.transpose();
  f.dcm.row(2) = k.transpose();

  const double rdot = r.dot(v) / rn;
  const Vec3 hdot = r.cross(a);
  const double hn_dot = h.dot(hdot) / hn;
  const double ha = h.dot(a);
  const double ha_dot = hdot.dot(a) + h.dot(jerk);

  const double wy = -hn / (rn * rn);
  const double wz = -rn * ha / (hn * hn);
  const double wy_dot = -hn_dot / (rn * rn) + 2.0 * hn * rdot / (rn * rn * rn);
  const double wz_dot = -(rdot * ha + rn * ha_dot) / (hn * hn) + 2.0 * rn * ha * hn_dot / (hn * hn * hn);

  f.omega_ls = Vec3(0.0, wy, wz) * n;
  f.omega_dot_ls = Vec3(0.0, wy_dot, wz_dot) * (n * n);
  const Vec3 omega_si = f.dcm * Vec3(0.0, 0.0, n);
  f.omega_li = f.omega_ls + omega_si;
  f.omega_dot_li = f.omega_dot_ls - f.omega_ls.cross(omega_si);

  f.r_target = x.head<3>() * len;
  f.r1t = f.dcm * (x.head<3>() - r1) * len;
  f.r2t = f.dcm * r * len;
  return f;
}

LvlhFrame lvlh_at(const PeriodicOrbit& orbit, double t, const SystemConstants& c) {
  return lvlh_from_state(orbit.state_at(t * c.mean_motion()).vector(), c);
}

Vec6 relative_derivative_nonlinear(const Vec6& x, const LvlhFrame& f, const SystemConstants& c,
                                   const Vec3& u) {
  const double mu1 = c.mu1 * 1e9, mu2 = c.mu2 * 1e9;
  const Vec3 rho = x.head<3>(), rho_dot = x.tail<3>();
  const Vec3 p1 = rho + f.r1t, p2 = rho + f.r2t;
  const double d1 = p1.norm(), d2 = p2.norm();
  if (d1 < 1.0 || d2 < 1.0) throw SingularityError("relative position coincides with a primary");
  const Vec3& w = f.omega_li;
  const Vec3 grav1 = p1 / (d1 * d1 * d1) - f.r1t / std::pow(f.r1t.norm(), 3);
  const Vec3 grav2 = p2 / (d2 * d2 * d2) - f.r2t / std::pow(f.r2t.norm(), 3);
  Vec6 dx;
  dx.head<3>() = rho_dot;
  dx.tail<3>() = -2.0 * w.cross(rho_dot) - w.cross(w.cross(rho)) - f.omega_dot_li.cross(rho) -
                 mu1 * grav1 - mu2 * grav2 + u;
  return dx;
}

Mat6 linear_system_matrix(const LvlhFrame& f, const SystemConstants& c) {
  const Mat3 om = skew(f.omega_li);
  const Mat3 om_dot = skew(f.omega_dot_li);
  auto gradient = [](double mu, const Vec3& r) {
    const double rn = r.norm();
    const Vec3 e = r / rn;
    return Mat3((mu / (rn * rn * rn)) * (Mat3::Identity() - 3.0 * e * e.transpose()));
  };
  Mat6 a = Mat6::Zero();
  a.topRightCorner<3, 3>().setIdentity();
  a.bottomLeftCorner<3, 3>() =
      -om_dot - om * om - gradient(c.mu1 * 1e9, f.r1t) - gradient(c.mu2 * 1e9, f.r2t);
  a.bottomRightCorner<3, 3>() = -2.0 * om;
  return a;
}

Vec6 relative_from_absolute(const Vec6& chaser, const Vec6& target, const SystemConstants& c) {
  const LvlhFrame f = lvlh_from_state(target, c);
  const Vec3 rho_s = (chaser.head<3>() - target.head<3>()) * c.length_unit_m();
  const Vec3 drho_s = (chaser.tail<3>() - target.tail<3>()) * c.velocity_unit_mps();
  Vec6 out;
  out.head<3>() = f.dcm * rho_s;
  out.tail<3>() = f.dcm * drho_s - f.omega_ls.cross(out.head<3>());
  return out;
}

Vec6 absolute_from_relative(const Vec6& rel, const Vec6& target, const SystemConstants& c) {
  const LvlhFrame f = lvlh_from_state(target, c);
  const Vec3 rho_dot_s = f.dcm.transpose() * (rel.tail<3>() + f.omega_ls.cross(rel.head<3>()));
  Vec6 out;
  out.head<3>() = target.head<3>() + f.dcm.transpose() * rel.head<3>() / c.length_unit_m();
  out.tail<3>() = target.tail<3>() + rho_dot_s / c.velocity_unit_mps();
  return out;
}

}  // namespace nrho
