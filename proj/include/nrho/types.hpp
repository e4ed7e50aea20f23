#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace nrho {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat63 = Eigen::Matrix<double, 6, 3>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Raised when a state gets numerically too close to one of the primaries.
class SingularityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by the integrator when the step size collapses or the step budget runs out.
class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline Mat3 skew(const Vec3& w) {
  Mat3 s;
  s << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return s;
}

/// B = [0; I], the velocity injection matrix of the relative models.
inline Mat63 velocity_injection() {
  Mat63 b = Mat63::Zero();
  b.bottomRows<3>().setIdentity();
  return b;
}

}  // namespace nrho
