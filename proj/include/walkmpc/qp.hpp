#pragma once

// Dense convex QP solver used by the condensed MPC problems:
//
//   minimize    1/2 z' P z + q' z
//   subject to  A z <= b
//
// Primal active-set method (null-space steps) with a Phase-I LP for the
// initial feasible point. Infeasibility is a normal outcome and comes with a
// Farkas certificate y >= 0, y' A = 0, y' b < 0.

#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Core>

namespace walkmpc {

struct QpProblem {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::MatrixXd A;  // m x d, may have zero rows
  Eigen::VectorXd b;

  Eigen::Index num_vars() const { return q.size(); }
  Eigen::Index num_constraints() const { return b.size(); }
  double objective(const Eigen::VectorXd& z) const { return 0.5 * z.dot(P * z) + q.dot(z); }
  /// max_i (A z - b)_i clipped at 0.
  double max_violation(const Eigen::VectorXd& z) const;
};

enum class QpStatus { optimal, infeasible, max_iter };

const char* to_string(QpStatus s);

struct QpSolution {
  QpStatus status = QpStatus::max_iter;
  Eigen::VectorXd z;            // optimum, or best iterate / Phase-I point
  Eigen::VectorXd multipliers;  // one per constraint, zero when inactive
  std::vector<int> active_set;  // sorted working-set indices at exit
  Eigen::VectorXd farkas;       // set when infeasible
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
};

struct QpSettings {
  double feasibility_tol = 1e-9;
  double optimality_tol = 1e-10;
  double regularization = 1e-12;
  /// Iteration cap per phase is max_iter_factor * (d + m).
  int max_iter_factor = 10;
};

/// Holds the workspace; one instance per thread.
class QpSolver {
 public:
  explicit QpSolver(QpSettings settings = {}) : settings_(settings) {}

  /// Throws DomainError if P is not symmetric PSD or dimensions disagree.
  /// `warm_start`, when feasible, replaces the Phase-I search.
  QpSolution solve(const QpProblem& problem, const Eigen::VectorXd* warm_start = nullptr);

  const QpSettings& settings() const { return settings_; }

 private:
  QpSettings settings_;
};

QpSolution solve_qp(const QpProblem& problem);

/// Phase-I LP on {z : A z <= b}. Returns a point violating no row by more
/// than `tol`, or nullopt.
std::optional<Eigen::VectorXd> find_feasible_point(const Eigen::MatrixXd& A,
                                                   const Eigen::VectorXd& b,
                                                   double tol = 1e-9);

/// KKT residual of (z, lambda): max of stationarity, dual sign, primal
/// violation and complementary slackness, all in the infinity norm.
double kkt_residual(const QpProblem& p, const Eigen::VectorXd& z, const Eigen::VectorXd& lambda);

/// Plain-text dump for reproducing failing cases.
void write_qp(std::ostream& os, const QpProblem& p);
QpProblem read_qp(std::istream& is);
void write_qp_solution(std::ostream& os, const QpSolution& s);

}  // namespace walkmpc
