#include "walkmpc/stochastic.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "walkmpc/errors.hpp"

namespace walkmpc {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double inv_norm_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("inv_norm_cdf: probability must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double quantile_coefficient(double beta) {
  if (!(beta > 0.0 && beta <= 0.5))
    throw DomainError("violation probability beta must lie in (0, 0.5], got " + std::to_string(beta));
  return beta == 0.5 ? 0.0 : inv_norm_cdf(1.0 - beta);
}

void DisturbanceModel::validate() const {
  support.validate();
  if (support.dim() != sigma.size()) throw DomainError("disturbance: support and sigma sizes differ");
  if (!sigma.allFinite() || (sigma.array() <= 0.0).any())
    throw DomainError("disturbance: standard deviations must be positive");
  if ((support.lower.array() >= 0.0).any() || (support.upper.array() <= 0.0).any())
    throw DomainError("disturbance: support must contain the origin in its interior");
}

void ChanceConstraintSpec::validate() const {
  if (!(beta > 0.0 && beta <= 0.5))
    throw DomainError("chance constraint: beta must lie in (0, 0.5], got " + std::to_string(beta));
  if (row.size() == 0 || row.cwiseAbs().maxCoeff() == 0.0)
    throw DomainError("chance constraint: constraint row must be nonzero");
}

CovarianceSchedule propagate_covariance(const Eigen::MatrixXd& A_K, const DisturbanceModel& dist,
                                        int horizon) {
  if (horizon < 1) throw DomainError("propagate_covariance: horizon must be >= 1");
  dist.validate();
  if (A_K.rows() != dist.dim() || A_K.cols() != dist.dim())
    throw DomainError("propagate_covariance: dimension mismatch");
  const Eigen::MatrixXd Sw = dist.covariance();
  CovarianceSchedule cov;
  cov.sigma.reserve(static_cast<std::size_t>(horizon) + 1);
  cov.sigma.push_back(Eigen::MatrixXd::Zero(dist.dim(), dist.dim()));
  for (int i = 0; i < horizon; ++i) {
    Eigen::MatrixXd next = A_K * cov.sigma.back() * A_K.transpose() + Sw;
    next = 0.5 * (next + next.transpose()).eval();
    cov.sigma.push_back(std::move(next));
  }
  return cov;
}

namespace {

double sqrt_clamped(double variance) {
  if (variance < -1e-14) throw DomainError("back-off: negative variance");
  return std::sqrt(std::max(0.0, variance));
}

}  // namespace

std::vector<std::vector<double>> state_backoffs(const std::vector<ChanceConstraintSpec>& specs,
                                                const CovarianceSchedule& cov) {
  std::vector<std::vector<double>> eta;
  eta.reserve(specs.size());
  for (const auto& s : specs) {
    s.validate();
    const double kappa = quantile_coefficient(s.beta);
    std::vector<double> row;
    row.reserve(cov.sigma.size());
    for (const auto& S : cov.sigma) row.push_back(kappa * sqrt_clamped(s.row.dot(S * s.row)));
    eta.push_back(std::move(row));
  }
  return eta;
}

std::vector<std::vector<double>> control_backoffs(const std::vector<ChanceConstraintSpec>& specs,
                                                  const Eigen::MatrixXd& K,
                                                  const CovarianceSchedule& cov) {
  std::vector<std::vector<double>> eta;
  eta.reserve(specs.size());
  const int N = cov.horizon();
  for (const auto& s : specs) {
    s.validate();
    if (s.row.size() != K.rows()) throw DomainError("control back-off: row size must equal input dimension");
    const double kappa = quantile_coefficient(s.beta);
    const Eigen::RowVectorXd gk = s.row.transpose() * K;
    std::vector<double> row;
    row.reserve(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i)
      row.push_back(kappa * sqrt_clamped(gk.dot(cov.sigma[static_cast<std::size_t>(i)] * gk.transpose())));
    eta.push_back(std::move(row));
  }
  return eta;
}

void write_backoffs_csv(std::ostream& os, const BackoffSchedule& schedule) {
  const auto old = os.precision(17);
  os << "kind,constraint,step,eta\n";
  for (std::size_t j = 0; j < schedule.eta_x.size(); ++j)
    for (std::size_t i = 0; i < schedule.eta_x[j].size(); ++i)
      os << "state," << j << ',' << i << ',' << schedule.eta_x[j][i] << '\n';
  for (std::size_t j = 0; j < schedule.eta_u.size(); ++j)
    for (std::size_t i = 0; i < schedule.eta_u[j].size(); ++i)
      os << "control," << j << ',' << i << ',' << schedule.eta_u[j][i] << '\n';
  os.precision(old);
}

}  // namespace walkmpc
