#pragma once

#include "nrho/prediction.hpp"

namespace nrho {

/// Gaussian per-node state disturbance delta ~ N6(mean, covariance).
struct DisturbanceModel {
  Vec6 mean = Vec6::Zero();
  Mat6 covariance = Mat6::Zero();

  /// Throws std::invalid_argument when the covariance is asymmetric or has eigenvalues < -1e-10.
  void validate() const;
};

/// Chi-square CDF for an even number of degrees of freedom (closed form).
double chi_square_cdf_even(double x, int dof);

/// alpha with P(chi2(dof) <= alpha) = p, dof even (6 for the disturbance model).
double chi_square_quantile(double p, int dof = 6);

/// Tightening vector: row i sums, over the 6-wide blocks a_ij of row i of -A_LS G_delta,
/// a_ij mean - sqrt(alpha a_ij Sigma a_ij').
VecX bounding_vector(const MatX& A_LS, const MatX& G_delta, const DisturbanceModel& model, double alpha);

/// Recursive exponentially weighted estimate of the disturbance mean and covariance.
struct EstimatorState {
  Vec6 delta_hat = Vec6::Zero();
  Mat6 sigma_hat = Mat6::Zero();
  double gamma = 0.0;
  double lambda = 0.25;
  int count = 0;

  [[nodiscard]] DisturbanceModel model() const { return {delta_hat, sigma_hat}; }
};

EstimatorState estimator_update(const EstimatorState& state, const Vec6& observed);

/// One-step residual delta_i = x_{i+1} - (x_{i+1} predicted from x_i with the applied controls),
/// using the first interval of a bundle starting at node i.
Vec6 residual_disturbance(const Vec6& x_next, const Vec6& x_now, const PredictionBundle& bundle,
                          const Vec3& dv, const VecX& xi);

}  // namespace nrho
