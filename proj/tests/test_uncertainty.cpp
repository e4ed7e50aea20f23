#include <doctest.h>

#include <cmath>
#include <random>

#include "nrho/checks.hpp"
#include "support.hpp"

using namespace nrho;
using namespace nrho::test;

namespace {

double cdf6(double x) { return 1.0 - std::exp(-0.5 * x) * (1.0 + 0.5 * x + x * x / 8.0); }

Mat6 random_psd(std::mt19937_64& rng, double scale) {
  const MatX L = random_matrix(6, 6, rng, scale);
  return L * L.transpose();
}

VecX truth_after(TruthModel model, const VecX& y0, double t0, double dt) {
  return propagate_truth(system(), model, y0, t0, t0 + dt, {}, {1e-12, 1e-12}).back();
}

}  // namespace

TEST_SUITE("uncertainty") {

TEST_CASE("chi-square quantile") {
  double lo = 0.0, hi = 50.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (cdf6(mid) < 0.95 ? lo : hi) = mid;
  }
  CHECK(std::abs(chi_square_quantile(0.95, 6) - lo) <= 1e-10);
  CHECK(chi_square_quantile(0.95, 6) == doctest::Approx(12.5916).epsilon(1e-5));
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.001, 0.999);
  for (int i = 0; i < 20; ++i) {
    const double p = u(rng);
    CHECK(std::abs(chi_square_cdf_even(chi_square_quantile(p, 6), 6) - p) <= 1e-12);
  }
  CHECK(chi_square_quantile(1e-12, 6) < 1e-3);
  double prev = 0.0;
  for (int i = 1; i < 100; ++i) {
    const double a = chi_square_quantile(i / 100.0, 6);
    CHECK(a > prev);
    prev = a;
  }
  CHECK(chi_square_quantile(0.5, 2) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS(chi_square_quantile(1.0, 6));
  CHECK_THROWS(chi_square_cdf_even(1.0, 3));
}

TEST_CASE("bounding vector analytic cases") {
  const LosStack los = los_stack(LosGeometry{}, 4);
  std::mt19937_64 rng(2);
  const MatX G = random_matrix(30, 30, rng);
  CHECK(bounding_vector(los.A, G, DisturbanceModel{}, 12.59).norm() == 0.0);

  MatX A = MatX::Zero(1, 6);
  A(0, 0) = -1.0;
  DisturbanceModel m;
  m.covariance = Mat6::Identity();
  CHECK(bounding_vector(A, MatX::Identity(6, 6), m, 1.0)(0) == doctest::Approx(-1.0).epsilon(1e-15));
  m.mean(0) = 0.25;
  CHECK(bounding_vector(A, MatX::Identity(6, 6), m, 4.0)(0) == doctest::Approx(0.25 - 2.0).epsilon(1e-15));

  DisturbanceModel bad;
  bad.covariance = -Mat6::Identity();
  CHECK_THROWS(bounding_vector(A, MatX::Identity(6, 6), bad, 1.0));
}

TEST_CASE("bounding vector is monotone in the covariance") {
  const LosStack los = los_stack(LosGeometry{}, 5);
  std::mt19937_64 rng(21);
  const MatX G = random_matrix(36, 36, rng);
  for (int trial = 0; trial < 50; ++trial) {
    DisturbanceModel a, b;
    a.mean = random_matrix(6, 1, rng, 0.1);
    b.mean = a.mean;
    a.covariance = random_psd(rng, 0.1);
    b.covariance = a.covariance + random_psd(rng, 0.05);
    const VecX ba = bounding_vector(los.A, G, a, 12.59), bb = bounding_vector(los.A, G, b, 12.59);
    CHECK((bb - ba).maxCoeff() <= 1e-12 * std::max(1.0, ba.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("Monte Carlo satisfaction of the tightened rows") {
  const auto o = target_orbit();
  const int N = 6;
  const PredictionBundle b = build_bundle(*o, system(), 0.0, N, 1080.0, nullptr);
  const LosStack los = los_stack(LosGeometry{}, N);
  DisturbanceModel m;
  m.mean << 0.02, -0.05, 0.01, 2e-5, 1e-5, -3e-5;
  Mat6 L = Mat6::Zero();
  L.diagonal() << 0.3, 0.2, 0.25, 2e-4, 3e-4, 1e-4;
  L(4, 1) = 1e-4;
  m.covariance = L * L.transpose();
  const double p = 0.95;
  const VecX sat = chance_bound_satisfaction(los.A, b.G_delta, m, chi_square_quantile(p, 6), 100000, 99);
  CHECK(sat.minCoeff() >= p - 0.01);
}

TEST_CASE("estimator recursion") {
  EstimatorState s;
  s.lambda = 0.25;
  Vec6 c;
  c << 0.3, -1.2, 0.5, 1e-3, -2e-3, 4e-4;
  const EstimatorState first = estimator_update(s, c);
  CHECK((first.delta_hat - c).norm() == doctest::Approx(0.0));
  CHECK(first.gamma == doctest::Approx(std::exp(-0.25)));
  CHECK(max_abs(first.sigma_hat) <= 1e-30);

  EstimatorState k = s;
  for (int i = 0; i < 200; ++i) k = estimator_update(k, c);
  CHECK((k.delta_hat - c).norm() <= 1e-6 * c.norm());
  CHECK(k.count == 200);
  // gamma_k = sum_{j=1..k} e^{-lambda j}
  CHECK(k.gamma == doctest::Approx(std::exp(-0.25) / (1.0 - std::exp(-0.25))).epsilon(1e-12));
}

TEST_CASE("estimator covariance is consistent for slow forgetting") {
  std::mt19937_64 rng(123);
  const Mat6 cov = random_psd(rng, 1.0);
  const Eigen::LLT<Mat6> llt(cov);
  std::normal_distribution<double> g;
  EstimatorState s;
  s.lambda = 1e-6;
  Vec6 mean = Vec6::Zero();
  std::vector<Vec6> draws;
  for (int i = 0; i < 10000; ++i) {
    Vec6 z;
    for (int j = 0; j < 6; ++j) z(j) = g(rng);
    draws.push_back(llt.matrixL() * z);
    mean += draws.back();
    s = estimator_update(s, draws.back());
  }
  mean /= draws.size();
  Mat6 sample = Mat6::Zero();
  for (const auto& d : draws) sample += (d - mean) * (d - mean).transpose();
  sample /= draws.size();
  CHECK((s.sigma_hat - sample).norm() <= 0.1 * sample.norm());
}

TEST_CASE("estimator stays PSD over 10^4 random streams") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lam(0.01, 2.0);
  double worst = 0.0;
  for (int stream = 0; stream < 10000; ++stream) {
    EstimatorState s;
    s.lambda = lam(rng);
    const double scale = std::pow(10.0, (stream % 7) - 3);
    for (int i = 0; i < 12; ++i) {
      s = estimator_update(s, random_matrix(6, 1, rng, scale));
      const double mn = Eigen::SelfAdjointEigenSolver<Mat6>(s.sigma_hat, Eigen::EigenvaluesOnly).eigenvalues()(0);
      worst = std::min(worst, mn / std::max(1e-300, s.sigma_hat.norm()));
    }
  }
  CHECK(worst >= -1e-12);
}

TEST_CASE("residual disturbance") {
  const auto o = target_orbit();
  const auto& c = system();
  const double dt = 1080.0;
  const PredictionBundle b = build_bundle(*o, c, 0.0, 1, dt, nullptr);
  VecX y0(12);
  y0.head<6>() = o->state_at(0.0).vector();
  y0.tail<6>() << 1000.0, 0.0, 0.0, 0.0, 0.0, 0.0;
  const Vec3 dv(0.01, -0.02, 0.005);

  SUBCASE("linear truth") {
    VecX start = y0;
    start.segment<3>(9) += dv;
    const VecX y1 = truth_after(TruthModel::linear, start, 0.0, dt);
    const Vec6 r = residual_disturbance(y1.tail<6>(), y0.tail<6>(), b, dv, VecX());
    CHECK(r.norm() <= 1e-9 * 1000.0);

    Vec6 kicked = y1.tail<6>();
    const Vec3 w(2e-3, -1e-3, 5e-4);
    kicked.tail<3>() += w;
    const Vec6 rk = residual_disturbance(kicked, y0.tail<6>(), b, dv, VecX());
    CHECK((rk.tail<3>() - w).norm() <= 1e-9);
    CHECK(rk.head<3>().norm() <= 1e-6);
  }
  SUBCASE("nonlinear truth matches the dual-propagation mismatch") {
    const VecX nl = truth_after(TruthModel::nonlinear, y0, 0.0, dt);
    const VecX lin = truth_after(TruthModel::linear, y0, 0.0, dt);
    const Vec6 r = residual_disturbance(nl.tail<6>(), y0.tail<6>(), b, Vec3::Zero(), VecX());
    const Vec6 mismatch = nl.tail<6>() - lin.tail<6>();
    MESSAGE("18 min model mismatch at perilune for 1 km: " << r.head<3>().norm() << " m");
    CHECK((r - mismatch).head<3>().norm() <= 1e-6);
    CHECK(r.head<3>().norm() > 0.0);
  }
}

}
