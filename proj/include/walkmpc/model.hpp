#pragma once

// Linear inverted pendulum model (one horizontal axis), its exact
// zero-order-hold discretization and dead-beat feedback synthesis.
//
// State x = [c, cdot] (CoM position and velocity), input u = p (CoP).
// Continuous dynamics: cddot = omega^2 (c - p).

#include <Eigen/Core>

namespace walkmpc {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using RowVec2 = Eigen::RowVector2d;

struct LipmParams {
  double com_height = 0.88;  // [m]
  double gravity = 9.81;     // [m/s^2]
  double sampling_dt = 0.1;  // [s]

  double natural_frequency() const;
  /// Throws DomainError unless height, gravity > 0 and dt >= 0 (all finite).
  void validate() const;
};

struct LtiModel {
  Mat2 A = Mat2::Identity();
  Vec2 B = Vec2::Zero();
  double dt = 0.0;
  double omega = 0.0;

  Vec2 step(const Vec2& x, double u) const { return A * x + B * u; }
};

/// Feedback gain for u = K x (row vector, m = 1).
struct GainVector {
  RowVec2 K = RowVec2::Zero();
};

struct ClosedLoop {
  Mat2 A_K = Mat2::Zero();

  double spectral_radius() const;
  bool is_schur() const { return spectral_radius() < 1.0; }
};

LtiModel discretize_lipm(const LipmParams& params);

/// Places both closed-loop eigenvalues of A + B K at the origin
/// (Ackermann's formula for n = 2). Throws SynthesisError when [B, AB] is
/// singular.
GainVector deadbeat_gain(const LtiModel& model);

ClosedLoop closed_loop(const LtiModel& model, const GainVector& gain);

/// Gain reported in the literature for the same walking setup; kept for
/// side-by-side reporting only.
inline constexpr double kReferenceGain[2] = {3.386, 0.968};

}  // namespace walkmpc
