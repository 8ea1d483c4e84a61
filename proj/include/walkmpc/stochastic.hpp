#pragma once

// Gaussian error propagation and chance-constraint back-offs.

#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "walkmpc/polytope.hpp"

namespace walkmpc {

/// Standard normal CDF.
double norm_cdf(double x);

/// Quantile of the standard normal. Throws DomainError outside (0, 1).
double inv_norm_cdf(double p);

/// kappa(beta) = inv_norm_cdf(1 - beta). Requires 0 < beta <= 0.5.
double quantile_coefficient(double beta);

struct DisturbanceModel {
  Eigen::VectorXd sigma;  // per-component standard deviation
  Box support;            // truncation set W

  Eigen::Index dim() const { return sigma.size(); }
  Eigen::MatrixXd covariance() const { return sigma.array().square().matrix().asDiagonal(); }
  /// sigma > 0 and 0 in the interior of the support.
  void validate() const;
};

/// Sigma[i], i = 0..N, predicted error covariance at prediction step i.
struct CovarianceSchedule {
  std::vector<Eigen::MatrixXd> sigma;

  int horizon() const { return static_cast<int>(sigma.size()) - 1; }
};

/// Individual chance constraint Pr[row' y <= bound] >= 1 - beta, where y is
/// the state (state constraints) or the input (control constraints).
struct ChanceConstraintSpec {
  Eigen::VectorXd row;
  double bound = 0.0;
  double beta = 0.5;

  /// 0 < beta <= 0.5 and row nonzero; throws DomainError.
  void validate() const;
};

/// Back-off magnitudes indexed [constraint][prediction step].
/// eta_x[j][i] tightens the state constraint at step i (i = 0..N, entry 0
/// unused by the MPC); eta_u[j][i] the input constraint at step i = 0..N-1.
struct BackoffSchedule {
  std::vector<std::vector<double>> eta_x;
  std::vector<std::vector<double>> eta_u;
};

CovarianceSchedule propagate_covariance(const Eigen::MatrixXd& A_K, const DisturbanceModel& dist,
                                        int horizon);

/// eta_x[j][i] = kappa(beta_j) sqrt(H_j Sigma[i] H_j').
std::vector<std::vector<double>> state_backoffs(const std::vector<ChanceConstraintSpec>& specs,
                                                const CovarianceSchedule& cov);

/// eta_u[j][i] = kappa(beta_j) sqrt(G_j K Sigma[i] K' G_j'), i = 0..N-1.
std::vector<std::vector<double>> control_backoffs(const std::vector<ChanceConstraintSpec>& specs,
                                                  const Eigen::MatrixXd& K,
                                                  const CovarianceSchedule& cov);

/// CSV with header "kind,constraint,step,eta".
void write_backoffs_csv(std::ostream& os, const BackoffSchedule& schedule);

}  // namespace walkmpc
