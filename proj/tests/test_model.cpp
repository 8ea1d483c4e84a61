#include <cmath>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "walkmpc/errors.hpp"
#include "walkmpc/model.hpp"

using namespace walkmpc;

namespace {

// Continuous LIPM with state [c, cdot] and input p.
Mat2 continuous_a(double w) {
  Mat2 a;
  a << 0.0, 1.0, w * w, 0.0;
  return a;
}

// A = sum_k (Ac dt)^k / k!, B = sum_k Ac^k dt^(k+1) / (k+1)! bc.
void series_discretization(double w, double dt, Mat2& A, Vec2& B) {
  const Mat2 ac = continuous_a(w);
  const Vec2 bc(0.0, -w * w);
  A.setZero();
  Mat2 integral = Mat2::Zero();
  Mat2 term = Mat2::Identity();
  double fact = 1.0;
  for (int k = 0; k < 40; ++k) {
    A += term * std::pow(dt, k) / fact;
    integral += term * std::pow(dt, k + 1) / (fact * (k + 1));
    term = term * ac;
    fact *= (k + 1);
  }
  B = integral * bc;
}

double eig_radius(const Mat2& m) {
  return Eigen::EigenSolver<Mat2>(m).eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("natural frequency of the default pendulum") {
    LipmParams p;
    CHECK(p.natural_frequency() == doctest::Approx(std::sqrt(9.81 / 0.88)).epsilon(1e-15));
  }

  TEST_CASE("exact discretization matches the matrix exponential series") {
    for (double dt : {0.0, 0.01, 0.1, 0.3}) {
      LipmParams p;
      p.sampling_dt = dt;
      const LtiModel m = discretize_lipm(p);
      Mat2 A;
      Vec2 B;
      series_discretization(p.natural_frequency(), dt, A, B);
      CHECK((m.A - A).cwiseAbs().maxCoeff() < 1e-13);
      CHECK((m.B - B).cwiseAbs().maxCoeff() < 1e-13);
    }
  }

  TEST_CASE("zero sampling time gives the identity map") {
    LipmParams p;
    p.sampling_dt = 0.0;
    const LtiModel m = discretize_lipm(p);
    CHECK(m.A.isIdentity(0.0));
    CHECK(m.B.isZero(0.0));
  }

  TEST_CASE("invalid pendulum parameters are rejected") {
    LipmParams p;
    p.com_height = 0.0;
    CHECK_THROWS_AS(discretize_lipm(p), DomainError);
    p = LipmParams{};
    p.gravity = -1.0;
    CHECK_THROWS_AS(discretize_lipm(p), DomainError);
    p = LipmParams{};
    p.sampling_dt = -0.1;
    CHECK_THROWS_AS(discretize_lipm(p), DomainError);
    p = LipmParams{};
    p.com_height = std::nan("");
    CHECK_THROWS_AS(p.validate(), DomainError);
  }

  TEST_CASE("dead-beat gain makes the closed loop nilpotent") {
    for (double dt : {0.05, 0.1, 0.2}) {
      LipmParams p;
      p.sampling_dt = dt;
      const LtiModel m = discretize_lipm(p);
      const GainVector K = deadbeat_gain(m);
      const ClosedLoop cl = closed_loop(m, K);
      const Mat2 sq = cl.A_K * cl.A_K;
      CHECK(sq.cwiseAbs().rowwise().sum().maxCoeff() < 1e-10);
      // Characteristic polynomial z^2: trace and determinant vanish.
      CHECK(std::abs(cl.A_K.trace()) < 1e-12);
      CHECK(std::abs(cl.A_K.determinant()) < 1e-12);
      CHECK(cl.is_schur());
    }
  }

  TEST_CASE("dead-beat gain of the default model") {
    const LtiModel m = discretize_lipm(LipmParams{});
    const GainVector K = deadbeat_gain(m);
    // Independent closed form: K = -[0 1] [B AB]^-1 A^2.
    Mat2 ctrb;
    ctrb << m.B, m.A * m.B;
    const RowVec2 expected = -(RowVec2(0.0, 1.0) * ctrb.inverse() * m.A * m.A);
    CHECK((K.K - expected).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(K.K(0) == doctest::Approx(9.88756744).epsilon(1e-8));
    CHECK(K.K(1) == doctest::Approx(1.37042774).epsilon(1e-8));
  }

  TEST_CASE("uncontrollable pair is reported") {
    LipmParams p;
    p.sampling_dt = 0.0;
    CHECK_THROWS_AS(deadbeat_gain(discretize_lipm(p)), SynthesisError);
  }

  TEST_CASE("spectral radius agrees with a general eigen solver") {
    const LtiModel m = discretize_lipm(LipmParams{});
    for (const RowVec2& k : {RowVec2(kReferenceGain[0], kReferenceGain[1]), RowVec2(0.0, 0.0),
                             RowVec2(2.0, 0.1), RowVec2(6.0, 2.0)}) {
      const ClosedLoop cl = closed_loop(m, GainVector{k});
      CHECK(cl.spectral_radius() == doctest::Approx(eig_radius(cl.A_K)).epsilon(1e-12));
    }
    // Open loop is unstable.
    CHECK_FALSE(closed_loop(m, GainVector{}).is_schur());
  }

  TEST_CASE("step applies the difference equation") {
    const LtiModel m = discretize_lipm(LipmParams{});
    const Vec2 x(0.01, -0.2);
    CHECK((m.step(x, 0.03) - (m.A * x + m.B * 0.03)).isZero(0.0));
  }
}
