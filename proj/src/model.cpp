#include "walkmpc/model.hpp"

#include <cmath>
#include <complex>
#include <string>

#include <Eigen/LU>

#include "walkmpc/errors.hpp"

namespace walkmpc {

double LipmParams::natural_frequency() const { return std::sqrt(gravity / com_height); }

void LipmParams::validate() const {
  if (!std::isfinite(com_height) || com_height <= 0.0)
    throw DomainError("LIPM: CoM height must be positive, got " + std::to_string(com_height));
  if (!std::isfinite(gravity) || gravity <= 0.0)
    throw DomainError("LIPM: gravity must be positive, got " + std::to_string(gravity));
  if (!std::isfinite(sampling_dt) || sampling_dt < 0.0)
    throw DomainError("LIPM: sampling time must be non-negative, got " +
                      std::to_string(sampling_dt));
}

double ClosedLoop::spectral_radius() const {
  // Closed form for 2x2: roots of z^2 - tr z + det.
  const double tr = A_K.trace();
  const double det = A_K.determinant();
  const std::complex<double> disc = std::sqrt(std::complex<double>(tr * tr - 4.0 * det));
  const std::complex<double> l1 = 0.5 * (tr + disc);
  const std::complex<double> l2 = 0.5 * (tr - disc);
  return std::max(std::abs(l1), std::abs(l2));
}

LtiModel discretize_lipm(const LipmParams& params) {
  params.validate();
  const double w = params.natural_frequency();
  const double ch = std::cosh(w * params.sampling_dt);
  const double sh = std::sinh(w * params.sampling_dt);

  LtiModel m;
  m.dt = params.sampling_dt;
  m.omega = w;
  m.A << ch, sh / w,
         w * sh, ch;
  m.B << 1.0 - ch, -w * sh;
  if (!m.A.allFinite() || !m.B.allFinite())
    throw DomainError("LIPM: discretization overflowed (omega * dt too large)");
  return m;
}

GainVector deadbeat_gain(const LtiModel& model) {
  Mat2 ctrb;
  ctrb.col(0) = model.B;
  ctrb.col(1) = model.A * model.B;
  const double scale = std::max(1.0, ctrb.cwiseAbs().maxCoeff());
  if (std::abs(ctrb.determinant()) <= 1e-14 * scale * scale)
    throw SynthesisError("dead-beat synthesis: (A, B) is not controllable");

  // Desired characteristic polynomial z^2, so phi(A) = A^2.
  GainVector g;
  g.K = -RowVec2(0.0, 1.0) * ctrb.inverse() * (model.A * model.A);
  return g;
}

ClosedLoop closed_loop(const LtiModel& model, const GainVector& gain) {
  return ClosedLoop{model.A + model.B * gain.K};
}

}  // namespace walkmpc
