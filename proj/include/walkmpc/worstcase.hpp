#pragma once

// Worst-case reading of SMPC back-offs: for a single constraint q'x <= g,
// the hyper-rectangle disturbance set whose worst case reproduces the
// stochastic back-off at every prediction step, and how it shrinks along
// the horizon.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "walkmpc/stochastic.hpp"

namespace walkmpc {

/// b[j]' = q' A_K^j for j = 0..i_max.
struct SensitivityRows {
  Eigen::VectorXd q;
  std::vector<Eigen::VectorXd> b;

  int i_max() const { return static_cast<int>(b.size()) - 1; }
};

SensitivityRows sensitivity_rows(const Eigen::VectorXd& q, const Eigen::MatrixXd& A_K, int i_max);

/// max q'e over e in sum_{j<=i} A_K^j [-w_max, w_max] = (sum_j |b_j|)' w_max.
double eta_from_box(const SensitivityRows& rows, const Eigen::VectorXd& w_max, int i);
inline double eta_from_box(const SensitivityRows& rows, const Eigen::VectorXd& w_max) {
  return eta_from_box(rows, w_max, rows.i_max());
}

/// kappa(beta) sqrt(sum_{j<=i} b_j' Sigma_w b_j); equals the SMPC state
/// back-off at prediction step i + 1.
double eta_from_sigma(const SensitivityRows& rows, const DisturbanceModel& dist, double beta, int i);
inline double eta_from_sigma(const SensitivityRows& rows, const DisturbanceModel& dist, double beta) {
  return eta_from_sigma(rows, dist, beta, rows.i_max());
}

/// alpha_i = sum_j b_j' diag(b_j) sigma^2 / (sum_j |b_j|' sigma)^2, i = 0..i_max.
std::vector<double> alpha_series(const SensitivityRows& rows, const Eigen::VectorXd& sigma_w);

struct WorstCaseReport {
  std::vector<double> alpha;
  std::vector<double> zeta;
  std::vector<Eigen::VectorXd> w_max;
  std::vector<double> eta;  // filled by analyze_worst_case
};

/// zeta_i = kappa(beta) sqrt(alpha_i), w_max_i = zeta_i sigma_w.
WorstCaseReport zeta_and_wmax(const std::vector<double>& alpha, double beta,
                              const Eigen::VectorXd& sigma_w);

/// Full report for one constraint row, including eta_i from the sigma form.
WorstCaseReport analyze_worst_case(const SensitivityRows& rows, const DisturbanceModel& dist,
                                   double beta);

struct MonotonicityCounterexample {
  std::uint64_t trial = 0;
  double a = 0.0;
  double q = 0.0;
  double sigma = 0.0;
  int step = 0;
  double alpha_i = 0.0;
  double alpha_next = 0.0;
};

struct Monotonicity1dReport {
  int trials = 0;
  int steps = 30;
  std::uint64_t seed = 0;
  long strict_decreases = 0;          // alpha_{i+1} < alpha_i in double precision
  long high_precision_decreases = 0;  // equal in double, strictly smaller with 200 digits
  std::vector<MonotonicityCounterexample> counterexamples;
};

/// Random scalar closed loops |a| in (1e-3, 0.999): checks alpha_{i+1} <
/// alpha_i for i = 0..steps-1. Pairs that tie in double precision are
/// recomputed with 200 significant digits; a counterexample is a pair that
/// is not strictly decreasing there either.
Monotonicity1dReport monotonicity_experiment_1d(int trials, std::uint64_t seed, int steps = 30);

struct NdTrial {
  std::uint64_t trial = 0;
  double rho = 0.0;
  double max_violation = 0.0;  // max_i (alpha_{i+1} - alpha_i), <= 0 when monotone
};

struct MonotonicityNdReport {
  int n = 2;
  int trials = 0;
  int steps = 30;
  std::uint64_t seed = 0;
  double rho_cap = 0.99;
  Eigen::VectorXd sigma_w;
  int violating = 0;
  std::vector<NdTrial> records;

  double violation_fraction() const { return trials ? static_cast<double>(violating) / trials : 0.0; }
};

/// Random Schur closed loops: entries uniform in [-1, 1], rejected while the
/// spectral radius is >= rho_cap; q standard normal; sigma_w shared by all
/// trials (ones when empty).
MonotonicityNdReport monotonicity_experiment_nd(int n, int trials, std::uint64_t seed,
                                                Eigen::VectorXd sigma_w = {}, int steps = 30,
                                                double rho_cap = 0.99);

void write_worstcase_csv(std::ostream& os, const WorstCaseReport& r);
void write_nd_trials_csv(std::ostream& os, const MonotonicityNdReport& r);

}  // namespace walkmpc
