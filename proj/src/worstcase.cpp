#include "walkmpc/worstcase.hpp"

#include <cmath>
#include <ostream>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include "walkmpc/errors.hpp"
#include "walkmpc/rng.hpp"

namespace walkmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

SensitivityRows sensitivity_rows(const VectorXd& q, const MatrixXd& A_K, int i_max) {
  if (i_max < 0) throw DomainError("sensitivity_rows: i_max must be >= 0");
  if (A_K.rows() != q.size() || A_K.cols() != q.size())
    throw DomainError("sensitivity_rows: dimension mismatch");
  if (q.cwiseAbs().maxCoeff() == 0.0) throw DomainError("sensitivity_rows: q must be nonzero");
  SensitivityRows rows;
  rows.q = q;
  rows.b.reserve(static_cast<std::size_t>(i_max) + 1);
  rows.b.push_back(q);
  for (int j = 1; j <= i_max; ++j) rows.b.push_back((rows.b.back().transpose() * A_K).transpose());
  return rows;
}

namespace {

void check_prefix(const SensitivityRows& rows, int i) {
  if (i < 0 || i > rows.i_max()) throw DomainError("worst-case: step index out of range");
}

}  // namespace

double eta_from_box(const SensitivityRows& rows, const VectorXd& w_max, int i) {
  check_prefix(rows, i);
  if ((w_max.array() < 0.0).any()) throw DomainError("eta_from_box: w_max must be non-negative");
  double eta = 0.0;
  for (int j = 0; j <= i; ++j) eta += rows.b[static_cast<std::size_t>(j)].cwiseAbs().dot(w_max);
  return eta;
}

double eta_from_sigma(const SensitivityRows& rows, const DisturbanceModel& dist, double beta, int i) {
  check_prefix(rows, i);
  const VectorXd var = dist.sigma.array().square();
  double s = 0.0;
  for (int j = 0; j <= i; ++j) s += rows.b[static_cast<std::size_t>(j)].array().square().matrix().dot(var);
  return quantile_coefficient(beta) * std::sqrt(s);
}

std::vector<double> alpha_series(const SensitivityRows& rows, const VectorXd& sigma_w) {
  if ((sigma_w.array() <= 0.0).any()) throw DomainError("alpha_series: sigma_w must be positive");
  const VectorXd var = sigma_w.array().square();
  std::vector<double> alpha;
  alpha.reserve(rows.b.size());
  double num = 0.0;
  double den = 0.0;
  for (const auto& b : rows.b) {
    num += b.array().square().matrix().dot(var);
    den += b.cwiseAbs().dot(sigma_w);
    if (den == 0.0) throw DomainError("alpha_series: all-zero sensitivity prefix");
    alpha.push_back(num / (den * den));
  }
  return alpha;
}

WorstCaseReport zeta_and_wmax(const std::vector<double>& alpha, double beta, const VectorXd& sigma_w) {
  const double kappa = quantile_coefficient(beta);
  WorstCaseReport r;
  r.alpha = alpha;
  for (double a : alpha) {
    const double z = kappa * std::sqrt(a);
    r.zeta.push_back(z);
    r.w_max.push_back(z * sigma_w);
  }
  return r;
}

WorstCaseReport analyze_worst_case(const SensitivityRows& rows, const DisturbanceModel& dist, double beta) {
  WorstCaseReport r = zeta_and_wmax(alpha_series(rows, dist.sigma), beta, dist.sigma);
  for (int i = 0; i <= rows.i_max(); ++i) r.eta.push_back(eta_from_sigma(rows, dist, beta, i));
  return r;
}

namespace {

using HighPrecision = boost::multiprecision::number<boost::multiprecision::cpp_bin_float<200>>;

// alpha_i and alpha_{i+1} of the scalar loop in extended precision.
std::pair<HighPrecision, HighPrecision> scalar_alpha_pair(double a, double q, double sigma, int i) {
  const HighPrecision ha(a), hs(sigma);
  HighPrecision b(q), num(0), den(0), prev(0);
  for (int j = 0; j <= i + 1; ++j) {
    if (j == i + 1) prev = num / (den * den);
    num += b * b * hs * hs;
    den += abs(b) * hs;
    b *= ha;
  }
  return {prev, num / (den * den)};
}

}  // namespace

Monotonicity1dReport monotonicity_experiment_1d(int trials, std::uint64_t seed, int steps) {
  if (trials < 1) throw DomainError("monotonicity_experiment_1d: trials must be >= 1");
  Monotonicity1dReport rep;
  rep.trials = trials;
  rep.steps = steps;
  rep.seed = seed;
  for (int t = 0; t < trials; ++t) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    std::uniform_real_distribution<double> mag(1e-3, 0.999);
    std::uniform_real_distribution<double> pos(0.1, 10.0);
    std::bernoulli_distribution flip(0.5);
    const double a = (flip(rng) ? -1.0 : 1.0) * mag(rng);
    const double q = (flip(rng) ? -1.0 : 1.0) * pos(rng);
    const double sigma = pos(rng);

    const SensitivityRows rows = sensitivity_rows(VectorXd::Constant(1, q), MatrixXd::Constant(1, 1, a), steps);
    const std::vector<double> alpha = alpha_series(rows, VectorXd::Constant(1, sigma));
    for (int i = 0; i < steps; ++i) {
      const double ai = alpha[static_cast<std::size_t>(i)];
      const double an = alpha[static_cast<std::size_t>(i) + 1];
      if (an < ai) {
        ++rep.strict_decreases;
        continue;
      }
      const auto [hi, hn] = scalar_alpha_pair(a, q, sigma, i);
      if (hn < hi)
        ++rep.high_precision_decreases;
      else
        rep.counterexamples.push_back({static_cast<std::uint64_t>(t), a, q, sigma, i, ai, an});
    }
  }
  return rep;
}

MonotonicityNdReport monotonicity_experiment_nd(int n, int trials, std::uint64_t seed, VectorXd sigma_w,
                                                int steps, double rho_cap) {
  if (n < 2) throw DomainError("monotonicity_experiment_nd: n must be >= 2");
  if (trials < 1) throw DomainError("monotonicity_experiment_nd: trials must be >= 1");
  if (sigma_w.size() == 0) sigma_w = VectorXd::Ones(n);
  if (sigma_w.size() != n) throw DomainError("monotonicity_experiment_nd: sigma_w has wrong size");

  MonotonicityNdReport rep;
  rep.n = n;
  rep.trials = trials;
  rep.steps = steps;
  rep.seed = seed;
  rep.rho_cap = rho_cap;
  rep.sigma_w = sigma_w;
  for (int t = 0; t < trials; ++t) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    std::uniform_real_distribution<double> entry(-1.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    MatrixXd A(n, n);
    double rho = 0.0;
    do {
      for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = entry(rng);
      rho = Eigen::EigenSolver<MatrixXd>(A, false).eigenvalues().cwiseAbs().maxCoeff();
    } while (rho >= rho_cap);
    VectorXd q(n);
    do {
      for (Eigen::Index i = 0; i < n; ++i) q(i) = gauss(rng);
    } while (q.cwiseAbs().maxCoeff() == 0.0);

    const std::vector<double> alpha = alpha_series(sensitivity_rows(q, A, steps), sigma_w);
    double worst = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < steps; ++i)
      worst = std::max(worst, alpha[static_cast<std::size_t>(i) + 1] - alpha[static_cast<std::size_t>(i)]);
    rep.records.push_back({static_cast<std::uint64_t>(t), rho, worst});
    if (worst > 1e-12) ++rep.violating;
  }
  return rep;
}

void write_worstcase_csv(std::ostream& os, const WorstCaseReport& r) {
  const auto old = os.precision(17);
  os << "step,alpha,zeta,eta";
  const Eigen::Index n = r.w_max.empty() ? 0 : r.w_max.front().size();
  for (Eigen::Index k = 0; k < n; ++k) os << ",w_max_" << k;
  os << '\n';
  for (std::size_t i = 0; i < r.alpha.size(); ++i) {
    os << i << ',' << r.alpha[i] << ',' << r.zeta[i] << ',' << (i < r.eta.size() ? r.eta[i] : NAN);
    for (Eigen::Index k = 0; k < n; ++k) os << ',' << r.w_max[i](k);
    os << '\n';
  }
  os.precision(old);
}

void write_nd_trials_csv(std::ostream& os, const MonotonicityNdReport& r) {
  const auto old = os.precision(17);
  os << "trial,rho,max_violation\n";
  for (const auto& t : r.records) os << t.trial << ',' << t.rho << ',' << t.max_violation << '\n';
  os.precision(old);
}

}  // namespace walkmpc
