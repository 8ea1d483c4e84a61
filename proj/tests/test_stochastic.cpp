#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "walkmpc/errors.hpp"
#include "walkmpc/model.hpp"
#include "walkmpc/stochastic.hpp"

using namespace walkmpc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Phi(x) = 1/2 + phi(x) sum_n x^(2n+1) / (1*3*...*(2n+1)).
double cdf_series(double x) {
  const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  double term = x;
  double sum = x;
  for (int n = 1; n < 400; ++n) {
    term *= x * x / (2.0 * n + 1.0);
    sum += term;
    if (std::abs(term) < 1e-18 * std::abs(sum)) break;
  }
  return 0.5 + phi * sum;
}

double quantile_by_bisection(double p) {
  double lo = -8.0;
  double hi = 8.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (cdf_series(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

DisturbanceModel table_disturbance() {
  DisturbanceModel d;
  d.sigma = Eigen::Vector2d(0.0008, 0.008);
  d.support = Box::symmetric(Eigen::Vector2d(0.0016, 0.016));
  return d;
}

MatrixXd reference_closed_loop() {
  const LtiModel m = discretize_lipm(LipmParams{});
  GainVector g;
  g.K << kReferenceGain[0], kReferenceGain[1];
  return closed_loop(m, g).A_K;
}

}  // namespace

TEST_SUITE("stochastic") {
  TEST_CASE("normal CDF matches the Taylor series") {
    for (double x : {-5.0, -2.0, -0.7, 0.0, 0.3, 1.0, 1.6448536269514722, 3.5})
      CHECK(norm_cdf(x) == doctest::Approx(cdf_series(x)).epsilon(1e-13));
  }

  TEST_CASE("quantile inverts the CDF") {
    for (double p : {1e-8, 1e-5, 0.01, 0.05, 0.3, 0.5, 0.8, 0.95, 0.999, 1.0 - 1e-7}) {
      const double x = inv_norm_cdf(p);
      CHECK(x == doctest::Approx(quantile_by_bisection(p)).epsilon(1e-9));
      CHECK(norm_cdf(x) == doctest::Approx(p).epsilon(1e-12));
    }
    CHECK_THROWS_AS(inv_norm_cdf(0.0), DomainError);
    CHECK_THROWS_AS(inv_norm_cdf(1.0), DomainError);
    CHECK_THROWS_AS(inv_norm_cdf(std::nan("")), DomainError);
  }

  TEST_CASE("quantile coefficient for common violation levels") {
    CHECK(quantile_coefficient(0.05) == doctest::Approx(1.6448536).epsilon(1e-7));
    CHECK(quantile_coefficient(0.01) == doctest::Approx(2.3263479).epsilon(1e-7));
    CHECK(quantile_coefficient(0.5) == 0.0);
    CHECK_THROWS_AS(quantile_coefficient(0.0), DomainError);
    CHECK_THROWS_AS(quantile_coefficient(0.6), DomainError);
  }

  TEST_CASE("disturbance model validation") {
    DisturbanceModel d = table_disturbance();
    CHECK_NOTHROW(d.validate());
    d.sigma(0) = 0.0;
    CHECK_THROWS_AS(d.validate(), DomainError);
    d = table_disturbance();
    d.support.lower(1) = 0.0;
    CHECK_THROWS_AS(d.validate(), DomainError);
    d = table_disturbance();
    d.sigma = VectorXd::Ones(3);
    CHECK_THROWS_AS(d.validate(), DomainError);
  }

  TEST_CASE("covariance recursion equals the explicit power sum") {
    const MatrixXd A_K = reference_closed_loop();
    const DisturbanceModel d = table_disturbance();
    const CovarianceSchedule cov = propagate_covariance(A_K, d, 16);
    REQUIRE(cov.horizon() == 16);
    CHECK(cov.sigma[0].cwiseAbs().maxCoeff() == 0.0);
    for (int i = 1; i <= 16; ++i) {
      MatrixXd sum = MatrixXd::Zero(2, 2);
      MatrixXd power = MatrixXd::Identity(2, 2);
      for (int j = 0; j < i; ++j) {
        sum += power * d.covariance() * power.transpose();
        power = power * A_K;
      }
      CHECK((cov.sigma[static_cast<std::size_t>(i)] - sum).cwiseAbs().maxCoeff() < 1e-18);
    }
    CHECK_THROWS_AS(propagate_covariance(A_K, d, 0), DomainError);
    CHECK_THROWS_AS(propagate_covariance(MatrixXd::Identity(3, 3), d, 4), DomainError);
  }

  TEST_CASE("state back-off is kappa times the projected standard deviation") {
    const CovarianceSchedule cov = propagate_covariance(reference_closed_loop(), table_disturbance(), 16);
    const ChanceConstraintSpec spec{Eigen::Vector2d(1.0, 0.0), 0.04, 0.05};
    const auto eta = state_backoffs({spec}, cov);
    REQUIRE(eta.size() == 1);
    REQUIRE(eta[0].size() == 17);
    CHECK(eta[0][0] == 0.0);
    CHECK(eta[0][1] == doctest::Approx(1.6448536 * 0.0008).epsilon(1e-7));
    for (std::size_t i = 1; i < eta[0].size(); ++i) {
      CHECK(eta[0][i] == doctest::Approx(1.6448536269514722 * std::sqrt(cov.sigma[i](0, 0))).epsilon(1e-14));
      CHECK(eta[0][i] >= eta[0][i - 1]);
    }
    CHECK(eta[0][1] == doctest::Approx(0.0013159).epsilon(1e-4));
  }

  TEST_CASE("nilpotent closed loop gives constant back-offs after two steps") {
    const LtiModel m = discretize_lipm(LipmParams{});
    const MatrixXd A_K = closed_loop(m, deadbeat_gain(m)).A_K;
    const CovarianceSchedule cov = propagate_covariance(A_K, table_disturbance(), 16);
    const auto eta = state_backoffs({{Eigen::Vector2d(1.0, 0.0), 0.04, 0.05}}, cov);
    // Sigma[i] = Sigma_w + A_K Sigma_w A_K' for every i >= 2.
    const double var = 0.0008 * 0.0008 + A_K(0, 0) * A_K(0, 0) * 0.0008 * 0.0008 +
                       A_K(0, 1) * A_K(0, 1) * 0.008 * 0.008;
    for (std::size_t i = 2; i <= 16; ++i)
      CHECK(eta[0][i] == doctest::Approx(1.6448536269514722 * std::sqrt(var)).epsilon(1e-12));
  }

  TEST_CASE("state back-off matches the empirical quantile of simulated errors") {
    const MatrixXd A_K = reference_closed_loop();
    const DisturbanceModel d = table_disturbance();
    const CovarianceSchedule cov = propagate_covariance(A_K, d, 3);
    const auto eta = state_backoffs({{Eigen::Vector2d(1.0, 0.0), 0.0, 0.05}}, cov);

    std::mt19937_64 rng(2024);
    std::normal_distribution<double> nd;
    const int samples = 200000;
    std::vector<double> c(samples);
    for (int s = 0; s < samples; ++s) {
      Eigen::Vector2d e = Eigen::Vector2d::Zero();
      for (int i = 0; i < 3; ++i) e = A_K * e + Eigen::Vector2d(d.sigma(0) * nd(rng), d.sigma(1) * nd(rng));
      c[static_cast<std::size_t>(s)] = e(0);
    }
    const auto k = static_cast<std::size_t>(0.95 * samples);
    std::nth_element(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(k), c.end());
    CHECK(c[k] == doctest::Approx(eta[0][3]).epsilon(0.02));
  }

  TEST_CASE("control back-off uses the gain-projected covariance") {
    const MatrixXd A_K = reference_closed_loop();
    const CovarianceSchedule cov = propagate_covariance(A_K, table_disturbance(), 5);
    MatrixXd K(1, 2);
    K << kReferenceGain[0], kReferenceGain[1];
    const auto eta = control_backoffs({{VectorXd::Ones(1), 0.05, 0.05}, {-VectorXd::Ones(1), 0.05, 0.5}}, K, cov);
    REQUIRE(eta.size() == 2);
    REQUIRE(eta[0].size() == 5);
    CHECK(eta[0][0] == 0.0);
    for (std::size_t i = 0; i < 5; ++i) {
      const double var = (K * cov.sigma[i] * K.transpose())(0, 0);
      CHECK(eta[0][i] == doctest::Approx(1.6448536269514722 * std::sqrt(var)).epsilon(1e-14));
      CHECK(eta[1][i] == 0.0);
    }
    CHECK_THROWS_AS(control_backoffs({{Eigen::Vector2d(1, 0), 0.0, 0.05}}, K, cov), DomainError);
  }

  TEST_CASE("chance constraint validation") {
    ChanceConstraintSpec s{Eigen::Vector2d(1, 0), 0.04, 0.05};
    CHECK_NOTHROW(s.validate());
    s.beta = 0.0;
    CHECK_THROWS_AS(s.validate(), DomainError);
    s.beta = 0.05;
    s.row = Eigen::Vector2d::Zero();
    CHECK_THROWS_AS(s.validate(), DomainError);
  }

  TEST_CASE("back-off CSV layout") {
    BackoffSchedule b;
    b.eta_x = {{0.0, 0.5}};
    b.eta_u = {{0.25}};
    std::ostringstream os;
    write_backoffs_csv(os, b);
    CHECK(os.str() == "kind,constraint,step,eta\nstate,0,0,0\nstate,0,1,0.5\ncontrol,0,0,0.25\n");
  }
}
