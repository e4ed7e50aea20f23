#include "nrho/uncertainty.hpp"

#include <cmath>
#include <stdexcept>

namespace nrho {

void DisturbanceModel::validate() const {
  if (!mean.allFinite() || !covariance.allFinite()) throw std::invalid_argument("disturbance model must be finite");
  const double scale = std::max(1.0, covariance.cwiseAbs().maxCoeff());
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("disturbance covariance must be symmetric");
  const Eigen::SelfAdjointEigenSolver<Mat6> es(covariance, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-10) throw std::invalid_argument("disturbance covariance is not PSD");
}

double chi_square_cdf_even(double x, int dof) {
  if (dof <= 0 || dof % 2 != 0) throw std::invalid_argument("closed form needs an even positive dof");
  if (x <= 0.0) return 0.0;
  const double h = 0.5 * x;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < dof / 2; ++k) {
    term *= h / k;
    sum += term;
  }
  return 1.0 - std::exp(-h) * sum;
}

double chi_square_quantile(double p, int dof) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("probability must lie in (0, 1)");
  double lo = 0.0, hi = 1.0;
  while (chi_square_cdf_even(hi, dof) < p) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (chi_square_cdf_even(mid, dof) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

VecX bounding_vector(const MatX& A_LS, const MatX& G_delta, const DisturbanceModel& model, double alpha) {
  if (A_LS.cols() != G_delta.rows() || G_delta.cols() % 6 != 0) throw DimensionError("bounding_vector sizes");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  model.validate();
  const MatX a = -A_LS * G_delta;
  const int blocks = static_cast<int>(G_delta.cols() / 6);
  const Mat6 s = alpha * model.covariance;
  VecX b = VecX::Zero(a.rows());
  for (int i = 0; i < a.rows(); ++i) {
    double sum = 0.0;
    for (int j = 0; j < blocks; ++j) {
      const Eigen::Matrix<double, 1, 6> aij = a.block<1, 6>(i, 6 * j);
      double q = aij * s * aij.transpose();
      if (q < 0.0) {
        if (q < -1e-10 * std::max(1.0, aij.squaredNorm() * s.cwiseAbs().maxCoeff()))
          throw std::invalid_argument("negative variance in the tightening term");
        q = 0.0;
      }
      sum += aij.dot(model.mean) - std::sqrt(q);
    }
    b(i) = sum;
  }
  return b;
}

EstimatorState estimator_update(const EstimatorState& s, const Vec6& d) {
  EstimatorState n = s;
  const double decay = std::exp(-s.lambda);
  n.gamma = decay * (s.gamma + 1.0);
  n.delta_hat = decay / n.gamma * (s.gamma * s.delta_hat + d);
  const Vec6 e = d - n.delta_hat;
  n.sigma_hat = decay / n.gamma * (s.gamma * s.sigma_hat + e * e.transpose());
  n.sigma_hat = 0.5 * (n.sigma_hat + n.sigma_hat.transpose()).eval();
  n.count = s.count + 1;
  return n;
}

Vec6 residual_disturbance(const Vec6& x_next, const Vec6& x_now, const PredictionBundle& b,
                          const Vec3& dv, const VecX& xi) {
  if (b.horizon < 1) throw DimensionError("bundle needs at least one interval");
  Vec6 pred = b.transition(0, 1) * (x_now + velocity_injection() * dv);
  if (xi.size() > 0) {
    if (xi.size() != b.G_xi.cols()) throw DimensionError("control point vector has the wrong size");
    pred += b.G_xi.middleRows(6, 6) * xi;
  }
  return x_next - pred;
}

}  // namespace nrho
