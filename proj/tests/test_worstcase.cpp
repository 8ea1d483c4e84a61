#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "walkmpc/errors.hpp"
#include "walkmpc/model.hpp"
#include "walkmpc/stochastic.hpp"
#include "walkmpc/worstcase.hpp"

using namespace walkmpc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

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

// Scalar loop: alpha_i = (1 - a^(2(i+1))) / (1 - a^2) * (1 - |a|)^2 / (1 - |a|^(i+1))^2.
double scalar_alpha(double a, int i) {
  const double m = std::abs(a);
  return (1.0 - std::pow(a, 2 * (i + 1))) / (1.0 - a * a) * (1.0 - m) * (1.0 - m) /
         std::pow(1.0 - std::pow(m, i + 1), 2);
}

// alpha_i by explicit matrix powers, no shared helpers.
std::vector<double> alpha_by_powers(const Eigen::Matrix2d& A, const Eigen::Vector2d& q,
                                    const Eigen::Vector2d& sigma, int steps) {
  std::vector<double> out;
  double num = 0.0;
  double den = 0.0;
  Eigen::Matrix2d P = Eigen::Matrix2d::Identity();
  for (int j = 0; j <= steps; ++j) {
    const Eigen::Vector2d b = P.transpose() * q;
    for (int k = 0; k < 2; ++k) {
      num += b(k) * b(k) * sigma(k) * sigma(k);
      den += std::abs(b(k)) * sigma(k);
    }
    out.push_back(num / (den * den));
    P = P * A;
  }
  return out;
}

}  // namespace

TEST_SUITE("worstcase") {
  TEST_CASE("sensitivity rows are q' A^j") {
    const MatrixXd A = reference_closed_loop();
    const SensitivityRows rows = sensitivity_rows(Eigen::Vector2d(1, 0), A, 5);
    REQUIRE(rows.i_max() == 5);
    MatrixXd P = MatrixXd::Identity(2, 2);
    for (int j = 0; j <= 5; ++j) {
      const VectorXd expected = P.transpose() * Eigen::Vector2d(1, 0);
      CHECK((rows.b[static_cast<std::size_t>(j)] - expected).cwiseAbs().maxCoeff() < 1e-15);
      P = P * A;
    }
    CHECK_THROWS_AS(sensitivity_rows(Eigen::Vector2d(0, 0), A, 3), DomainError);
    CHECK_THROWS_AS(sensitivity_rows(Eigen::Vector2d(1, 0), A, -1), DomainError);
    CHECK_THROWS_AS(sensitivity_rows(Eigen::Vector3d(1, 0, 0), A, 2), DomainError);
  }

  TEST_CASE("scalar loop with a = 0.5 follows the closed form") {
    const SensitivityRows rows = sensitivity_rows(VectorXd::Ones(1), MatrixXd::Constant(1, 1, 0.5), 30);
    const auto alpha = alpha_series(rows, VectorXd::Constant(1, 0.3));
    CHECK(alpha[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(alpha[1] == doctest::Approx(1.25 / 2.25).epsilon(1e-14));
    for (int i = 0; i <= 30; ++i)
      CHECK(alpha[static_cast<std::size_t>(i)] == doctest::Approx(scalar_alpha(0.5, i)).epsilon(1e-13));
    // Limit (1 - |a|)^2 / (1 - a^2) = 1/3.
    CHECK(alpha[30] == doctest::Approx(1.0 / 3.0).epsilon(1e-8));
  }

  TEST_CASE("negative scalar loop uses absolute values in the denominator") {
    const SensitivityRows rows = sensitivity_rows(VectorXd::Constant(1, -2.0), MatrixXd::Constant(1, 1, -0.8), 20);
    const auto alpha = alpha_series(rows, VectorXd::Constant(1, 1.7));
    for (int i = 0; i <= 20; ++i)
      CHECK(alpha[static_cast<std::size_t>(i)] == doctest::Approx(scalar_alpha(-0.8, i)).epsilon(1e-12));
  }

  TEST_CASE("worst-case box reproduces the stochastic back-off on the walking model") {
    const DisturbanceModel d = table_disturbance();
    for (const MatrixXd& A : {reference_closed_loop(), MatrixXd(closed_loop(discretize_lipm({}), deadbeat_gain(discretize_lipm({}))).A_K)}) {
      const SensitivityRows rows = sensitivity_rows(Eigen::Vector2d(1, 0), A, 15);
      const WorstCaseReport r = analyze_worst_case(rows, d, 0.05);
      REQUIRE(r.alpha.size() == 16);
      const CovarianceSchedule cov = propagate_covariance(A, d, 16);
      const auto eta_x = state_backoffs({{Eigen::Vector2d(1, 0), 0.04, 0.05}}, cov);
      for (int i = 0; i <= 15; ++i) {
        const auto k = static_cast<std::size_t>(i);
        CHECK(std::abs(eta_from_box(rows, r.w_max[k], i) - r.eta[k]) < 1e-10);
        CHECK(r.eta[k] == doctest::Approx(eta_x[0][k + 1]).epsilon(1e-12));
        CHECK(r.zeta[k] == doctest::Approx(1.6448536269514722 * std::sqrt(r.alpha[k])).epsilon(1e-14));
      }
    }
  }

  TEST_CASE("walking model alpha series shrinks along the horizon") {
    const SensitivityRows rows = sensitivity_rows(Eigen::Vector2d(1, 0), reference_closed_loop(), 15);
    const auto alpha = alpha_series(rows, table_disturbance().sigma);
    const auto oracle = alpha_by_powers(reference_closed_loop(), Eigen::Vector2d(1, 0),
                                        Eigen::Vector2d(0.0008, 0.008), 15);
    CHECK(alpha[0] == doctest::Approx(1.0));
    for (std::size_t i = 0; i < alpha.size(); ++i) {
      CHECK(alpha[i] == doctest::Approx(oracle[i]).epsilon(1e-13));
      if (i > 0) CHECK(alpha[i] < alpha[i - 1]);
    }
  }

  TEST_CASE("nilpotent closed loop freezes alpha after one step") {
    const LtiModel m = discretize_lipm(LipmParams{});
    const MatrixXd A_K = closed_loop(m, deadbeat_gain(m)).A_K;
    const auto alpha = alpha_series(sensitivity_rows(Eigen::Vector2d(1, 0), A_K, 15), table_disturbance().sigma);
    const Eigen::Vector2d sigma(0.0008, 0.008);
    const Eigen::Vector2d b1(A_K(0, 0), A_K(0, 1));
    const double num = sigma(0) * sigma(0) + b1.cwiseProduct(sigma).squaredNorm();
    const double den = sigma(0) + b1.cwiseAbs().dot(sigma);
    for (std::size_t i = 1; i < alpha.size(); ++i) CHECK(alpha[i] == doctest::Approx(num / (den * den)).epsilon(1e-12));
  }

  TEST_CASE("box and sigma forms reject bad inputs") {
    const SensitivityRows rows = sensitivity_rows(Eigen::Vector2d(1, 0), reference_closed_loop(), 3);
    CHECK_THROWS_AS(eta_from_box(rows, Eigen::Vector2d(-1, 0), 1), DomainError);
    CHECK_THROWS_AS(eta_from_box(rows, Eigen::Vector2d(1, 1), 4), DomainError);
    CHECK_THROWS_AS(alpha_series(rows, Eigen::Vector2d(0, 1)), DomainError);
    CHECK_THROWS_AS(eta_from_sigma(rows, table_disturbance(), 0.7, 1), DomainError);
  }

  TEST_CASE("scalar monotonicity experiment finds no counterexamples") {
    const Monotonicity1dReport r = monotonicity_experiment_1d(2000, 5, 30);
    CHECK(r.trials == 2000);
    CHECK(r.counterexamples.empty());
    CHECK(r.strict_decreases + r.high_precision_decreases == 2000L * 30);
    CHECK(r.high_precision_decreases > 0);
    CHECK(r.strict_decreases > 0);
    const Monotonicity1dReport again = monotonicity_experiment_1d(2000, 5, 30);
    CHECK(again.strict_decreases == r.strict_decreases);
  }

  TEST_CASE("two-dimensional loops can increase alpha") {
    // Search independently for an instance with alpha_{i+1} > alpha_i under
    // the walking disturbance spreads and confirm it with the library series.
    const Eigen::Vector2d sigma(0.0008, 0.008);
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> entry(-1.0, 1.0);
    std::normal_distribution<double> gauss;
    bool found = false;
    for (int t = 0; t < 5000 && !found; ++t) {
      Eigen::Matrix2d A;
      A << entry(rng), entry(rng), entry(rng), entry(rng);
      if (Eigen::EigenSolver<Eigen::Matrix2d>(A).eigenvalues().cwiseAbs().maxCoeff() >= 0.99) continue;
      const Eigen::Vector2d q(gauss(rng), gauss(rng));
      const auto oracle = alpha_by_powers(A, q, sigma, 30);
      for (int i = 0; i < 30 && !found; ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (oracle[k + 1] > oracle[k] + 1e-9) {
          const auto alpha = alpha_series(sensitivity_rows(q, A, 30), sigma);
          CHECK(alpha[k] == doctest::Approx(oracle[k]).epsilon(1e-12));
          CHECK(alpha[k + 1] > alpha[k]);
          found = true;
        }
      }
    }
    CHECK(found);

    const MonotonicityNdReport r = monotonicity_experiment_nd(2, 300, 1, sigma);
    CHECK(r.trials == 300);
    CHECK(r.records.size() == 300);
    CHECK(r.violating > 0);
    CHECK(r.violation_fraction() < 0.2);
    for (const auto& rec : r.records) CHECK(rec.rho < 0.99);
  }

  TEST_CASE("n-dimensional experiment validates its arguments") {
    CHECK_THROWS_AS(monotonicity_experiment_nd(1, 10, 1), DomainError);
    CHECK_THROWS_AS(monotonicity_experiment_nd(2, 0, 1), DomainError);
    CHECK_THROWS_AS(monotonicity_experiment_nd(2, 10, 1, VectorXd::Ones(3)), DomainError);
    CHECK_THROWS_AS(monotonicity_experiment_1d(0, 1), DomainError);
  }

  TEST_CASE("worst-case CSV layout") {
    const SensitivityRows rows = sensitivity_rows(Eigen::Vector2d(1, 0), reference_closed_loop(), 2);
    const WorstCaseReport r = analyze_worst_case(rows, table_disturbance(), 0.05);
    std::ostringstream os;
    write_worstcase_csv(os, r);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "step,alpha,zeta,eta,w_max_0,w_max_1");
    int count = 0;
    while (std::getline(is, line)) ++count;
    CHECK(count == 3);
  }
}
