#include "walkmpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "walkmpc/errors.hpp"

namespace walkmpc {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double QpProblem::max_violation(const VectorXd& z) const {
  if (b.size() == 0) return 0.0;
  return std::max(0.0, (A * z - b).maxCoeff());
}

const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::max_iter: return "max_iter";
  }
  return "unknown";
}

namespace {

enum class EngineStatus { optimal, max_iter };

struct EngineResult {
  EngineStatus status = EngineStatus::max_iter;
  VectorXd x;
  VectorXd lambda;  // size m
  std::vector<int> working;
  int iterations = 0;
};

// True when row a is (numerically) outside the row space of `rows`.
bool independent_of(const MatrixXd& rows, const Eigen::Ref<const VectorXd>& a) {
  const double na = a.norm();
  if (na == 0.0) return false;
  if (rows.rows() == 0) return true;
  if (rows.rows() >= rows.cols()) return false;
  Eigen::HouseholderQR<MatrixXd> qr(rows.transpose());
  const MatrixXd Q = qr.householderQ();
  const VectorXd resid = a - Q.leftCols(rows.rows()) * (Q.leftCols(rows.rows()).transpose() * a);
  return resid.norm() > 1e-9 * na;
}

MatrixXd gather_rows(const MatrixXd& A, const std::vector<int>& idx) {
  MatrixXd out(static_cast<Index>(idx.size()), A.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Index>(r)) = A.row(idx[r]);
  return out;
}

// Primal active-set iterations from a feasible x. H may be singular (H = 0
// for the Phase-I LP); zero-curvature directions are followed to the next
// blocking constraint.
EngineResult run_active_set(const MatrixXd& H, const VectorXd& g, const MatrixXd& A,
                            const VectorXd& b, VectorXd x, std::vector<int> working,
                            int max_iter, double regularization, double opt_tol) {
  const Index n = x.size();
  const Index m = b.size();
  EngineResult res;

  std::vector<char> in_working(static_cast<std::size_t>(m), 0);
  for (int i : working) in_working[static_cast<std::size_t>(i)] = 1;

  // Set after an unblocked full step: x minimizes over the working set.
  bool subspace_min = false;
  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    const VectorXd grad = H * x + g;
    const Index k = static_cast<Index>(working.size());
    const MatrixXd AW = gather_rows(A, working);

    MatrixXd Q;
    MatrixXd R;
    if (k > 0) {
      Eigen::HouseholderQR<MatrixXd> qr(AW.transpose());
      Q = qr.householderQ();
      R = qr.matrixQR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
    } else {
      Q = MatrixXd::Identity(n, n);
    }
    const MatrixXd Z = Q.rightCols(n - k);

    VectorXd p = VectorXd::Zero(n);
    double max_step = 1.0;
    bool ray = false;
    if (n - k > 0 && !subspace_min) {
      const MatrixXd Hz = Z.transpose() * H * Z;
      const VectorXd gz = Z.transpose() * grad;
      Eigen::LLT<MatrixXd> llt(Hz);
      bool pd = llt.info() == Eigen::Success;
      if (pd) {
        const VectorXd d = MatrixXd(llt.matrixL()).diagonal();
        pd = d.minCoeff() * d.minCoeff() > 1e-11 * d.maxCoeff() * d.maxCoeff();
      }
      if (pd) {
        p = -Z * llt.solve(gz);
      } else {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(Hz);
        const VectorXd& ev = es.eigenvalues();
        const MatrixXd& V = es.eigenvectors();
        const double curv_tol = 1e-11 * std::max(1.0, ev.cwiseAbs().maxCoeff());
        VectorXd flat_dir = VectorXd::Zero(n - k);
        VectorXd newton = VectorXd::Zero(n - k);
        for (Index j = 0; j < ev.size(); ++j) {
          const double c = V.col(j).dot(gz);
          if (ev(j) <= curv_tol)
            flat_dir -= c * V.col(j);
          else
            newton -= (c / ev(j)) * V.col(j);
        }
        const double gscale = 1.0 + grad.cwiseAbs().maxCoeff();
        if (flat_dir.norm() > 1e-12 * gscale) {
          p = Z * flat_dir;
          max_step = std::numeric_limits<double>::infinity();
          ray = true;
        } else {
          p = Z * newton;
        }
      }
    }

    const double xscale = 1.0 + x.cwiseAbs().maxCoeff();
    if (subspace_min || p.cwiseAbs().maxCoeff() <= 1e-13 * xscale) {
      subspace_min = false;
      // Stationary on the working set: check multiplier signs.
      VectorXd lamW;
      if (k > 0) {
        const VectorXd rhs = -(Q.leftCols(k).transpose() * grad);
        lamW = R.triangularView<Eigen::Upper>().solve(rhs);
      }
      const double dual_tol = opt_tol * (1.0 + grad.cwiseAbs().maxCoeff());
      Index drop = -1;
      double most_neg = -dual_tol;
      for (Index j = 0; j < k; ++j) {
        if (lamW(j) < most_neg) {
          most_neg = lamW(j);
          drop = j;
        }
      }
      if (drop < 0) {
        res.status = EngineStatus::optimal;
        res.lambda = VectorXd::Zero(m);
        for (Index j = 0; j < k; ++j) res.lambda(working[static_cast<std::size_t>(j)]) = std::max(0.0, lamW(j));
        break;
      }
      in_working[static_cast<std::size_t>(working[static_cast<std::size_t>(drop)])] = 0;
      working.erase(working.begin() + drop);
      continue;
    }

    // Ratio test; ties resolved by the lowest constraint index.
    double step = max_step;
    int blocking = -1;
    const double pnorm = p.norm();
    for (Index i = 0; i < m; ++i) {
      if (in_working[static_cast<std::size_t>(i)]) continue;
      const double ap = A.row(i).dot(p);
      if (ap <= 1e-14 * A.row(i).norm() * pnorm) continue;
      const double slack = std::max(0.0, b(i) - A.row(i).dot(x));
      const double r = slack / ap;
      if (r < step) {
        step = r;
        blocking = static_cast<int>(i);
      }
    }
    if (ray && blocking < 0) {
      // Unbounded flat direction: fall back to the regularized Newton step.
      const MatrixXd Hz = Z.transpose() * H * Z + regularization * MatrixXd::Identity(n - k, n - k);
      p = -Z * Hz.ldlt().solve(Z.transpose() * grad);
      step = 1.0;
      const double pn = p.norm();
      for (Index i = 0; i < m; ++i) {
        if (in_working[static_cast<std::size_t>(i)]) continue;
        const double ap = A.row(i).dot(p);
        if (ap <= 1e-14 * A.row(i).norm() * pn) continue;
        const double r = std::max(0.0, b(i) - A.row(i).dot(x)) / ap;
        if (r < step) {
          step = r;
          blocking = static_cast<int>(i);
        }
      }
    }
    x += step * p;
    if (blocking >= 0) {
      working.push_back(blocking);
      in_working[static_cast<std::size_t>(blocking)] = 1;
    } else {
      subspace_min = true;
    }
  }
  res.x = std::move(x);
  std::sort(working.begin(), working.end());
  res.working = std::move(working);
  if (res.lambda.size() == 0) res.lambda = VectorXd::Zero(m);
  return res;
}

std::vector<int> initial_working_set(const MatrixXd& A, const VectorXd& b, const VectorXd& x,
                                     double tol) {
  std::vector<int> working;
  MatrixXd rows(0, A.cols());
  for (Index i = 0; i < b.size(); ++i) {
    const double slack = b(i) - A.row(i).dot(x);
    if (std::abs(slack) > tol * (1.0 + std::abs(b(i)))) continue;
    if (!independent_of(rows, A.row(i).transpose())) continue;
    rows.conservativeResize(rows.rows() + 1, Eigen::NoChange);
    rows.row(rows.rows() - 1) = A.row(i);
    working.push_back(static_cast<int>(i));
  }
  return working;
}

struct PhaseOneResult {
  VectorXd z;
  double infeasibility = 0.0;
  VectorXd farkas;
  bool converged = false;
  int iterations = 0;
};

// minimize t  s.t.  A z - t <= b,  -t <= 0
PhaseOneResult phase_one(const MatrixXd& A, const VectorXd& b, const VectorXd& z0, int max_iter) {
  const Index d = A.cols();
  const Index m = A.rows();
  MatrixXd A1 = MatrixXd::Zero(m + 1, d + 1);
  A1.topLeftCorner(m, d) = A;
  A1.col(d).head(m).setConstant(-1.0);
  A1(m, d) = -1.0;
  VectorXd b1(m + 1);
  b1.head(m) = b;
  b1(m) = 0.0;

  VectorXd x(d + 1);
  x.head(d) = z0;
  x(d) = m > 0 ? std::max(0.0, (A * z0 - b).maxCoeff()) : 0.0;

  VectorXd g = VectorXd::Zero(d + 1);
  g(d) = 1.0;
  const MatrixXd H = MatrixXd::Zero(d + 1, d + 1);
  EngineResult er = run_active_set(H, g, A1, b1, x, {}, max_iter, 0.0, 1e-12);

  PhaseOneResult out;
  out.z = er.x.head(d);
  out.infeasibility = std::max(0.0, er.x(d));
  out.farkas = er.lambda.head(m);
  out.converged = er.status == EngineStatus::optimal;
  out.iterations = er.iterations;
  return out;
}

void check_problem(const QpProblem& p) {
  const Index d = p.q.size();
  if (p.P.rows() != d || p.P.cols() != d)
    throw DomainError("QP: P must be " + std::to_string(d) + "x" + std::to_string(d));
  if (p.A.rows() != p.b.size() || (p.A.rows() > 0 && p.A.cols() != d))
    throw DomainError("QP: constraint matrix shape does not match");
  if (!p.P.allFinite() || !p.q.allFinite() || !p.A.allFinite() || !p.b.allFinite())
    throw DomainError("QP: non-finite problem data");
  const double scale = std::max(1.0, p.P.cwiseAbs().maxCoeff());
  if ((p.P - p.P.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw DomainError("QP: P is not symmetric");
  if (d > 0) {
    Eigen::LDLT<MatrixXd> ldlt(p.P);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() < -1e-10 * scale)
      throw DomainError("QP: P is indefinite");
  }
}

}  // namespace

double kkt_residual(const QpProblem& p, const VectorXd& z, const VectorXd& lambda) {
  double r = 0.0;
  VectorXd stat = p.P * z + p.q;
  if (p.b.size() > 0) {
    stat += p.A.transpose() * lambda;
    const VectorXd slack = p.A * z - p.b;
    r = std::max(r, std::max(0.0, slack.maxCoeff()));
    r = std::max(r, std::max(0.0, -lambda.minCoeff()));
    r = std::max(r, lambda.cwiseProduct(slack).cwiseAbs().maxCoeff());
  }
  if (stat.size() > 0) r = std::max(r, stat.cwiseAbs().maxCoeff());
  return r;
}

QpSolution QpSolver::solve(const QpProblem& problem, const VectorXd* warm_start) {
  check_problem(problem);
  const Index d = problem.num_vars();
  const Index m = problem.num_constraints();
  const int max_iter = settings_.max_iter_factor * static_cast<int>(d + m + 1);

  QpSolution sol;
  VectorXd z0;
  if (warm_start != nullptr && warm_start->size() == d &&
      problem.max_violation(*warm_start) <= settings_.feasibility_tol) {
    z0 = *warm_start;
  } else {
    const VectorXd start = (warm_start != nullptr && warm_start->size() == d)
                               ? *warm_start
                               : VectorXd::Zero(d);
    PhaseOneResult p1 = phase_one(problem.A, problem.b, start, max_iter);
    sol.iterations += p1.iterations;
    const double tol = settings_.feasibility_tol * (1.0 + (m > 0 ? problem.b.cwiseAbs().maxCoeff() : 0.0));
    if (!p1.converged) {
      sol.status = QpStatus::max_iter;
      sol.z = p1.z;
      sol.multipliers = VectorXd::Zero(m);
      sol.objective = problem.objective(sol.z);
      sol.kkt_residual = kkt_residual(problem, sol.z, sol.multipliers);
      return sol;
    }
    if (p1.infeasibility > tol) {
      sol.status = QpStatus::infeasible;
      sol.z = p1.z;
      sol.farkas = p1.farkas;
      sol.multipliers = VectorXd::Zero(m);
      sol.objective = problem.objective(sol.z);
      sol.kkt_residual = kkt_residual(problem, sol.z, sol.multipliers);
      return sol;
    }
    z0 = p1.z;
  }

  const MatrixXd H = problem.P + settings_.regularization * MatrixXd::Identity(d, d);
  std::vector<int> working =
      initial_working_set(problem.A, problem.b, z0, settings_.feasibility_tol);
  EngineResult er = run_active_set(H, problem.q, problem.A, problem.b, z0, std::move(working),
                                   max_iter, settings_.regularization, settings_.optimality_tol);
  sol.iterations += er.iterations;
  sol.status = er.status == EngineStatus::optimal ? QpStatus::optimal : QpStatus::max_iter;
  sol.z = std::move(er.x);
  sol.multipliers = std::move(er.lambda);
  sol.active_set = std::move(er.working);
  sol.objective = problem.objective(sol.z);
  sol.kkt_residual = kkt_residual(problem, sol.z, sol.multipliers);
  return sol;
}

QpSolution solve_qp(const QpProblem& problem) {
  QpSolver solver;
  return solver.solve(problem);
}

std::optional<VectorXd> find_feasible_point(const MatrixXd& A, const VectorXd& b, double tol) {
  const int max_iter = 10 * static_cast<int>(A.cols() + A.rows() + 1);
  PhaseOneResult p1 = phase_one(A, b, VectorXd::Zero(A.cols()), max_iter);
  if (!p1.converged || p1.infeasibility > tol) return std::nullopt;
  return p1.z;
}

namespace {

void write_matrix(std::ostream& os, const char* name, const MatrixXd& M) {
  os << name << ' ' << M.rows() << ' ' << M.cols() << '\n';
  for (Index i = 0; i < M.rows(); ++i) {
    for (Index j = 0; j < M.cols(); ++j) os << (j ? " " : "") << M(i, j);
    os << '\n';
  }
}

MatrixXd read_matrix(std::istream& is, const char* expected) {
  std::string tag;
  Index r = 0;
  Index c = 0;
  if (!(is >> tag >> r >> c) || tag != expected)
    throw DomainError(std::string("QP dump: expected block '") + expected + "'");
  MatrixXd M(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j)
      if (!(is >> M(i, j))) throw DomainError(std::string("QP dump: truncated block ") + expected);
  return M;
}

}  // namespace

void write_qp(std::ostream& os, const QpProblem& p) {
  const auto old = os.precision(17);
  os << "qp " << p.num_vars() << ' ' << p.num_constraints() << '\n';
  write_matrix(os, "P", p.P);
  write_matrix(os, "q", p.q.transpose());
  write_matrix(os, "A", p.A);
  write_matrix(os, "b", p.b.transpose());
  os.precision(old);
}

QpProblem read_qp(std::istream& is) {
  std::string tag;
  Index d = 0;
  Index m = 0;
  if (!(is >> tag >> d >> m) || tag != "qp") throw DomainError("QP dump: missing header");
  QpProblem p;
  p.P = read_matrix(is, "P");
  p.q = read_matrix(is, "q").transpose();
  p.A = read_matrix(is, "A");
  p.b = read_matrix(is, "b").transpose();
  if (p.q.size() != d || p.b.size() != m) throw DomainError("QP dump: size mismatch");
  if (m == 0) p.A.resize(0, d);
  return p;
}

void write_qp_solution(std::ostream& os, const QpSolution& s) {
  const auto old = os.precision(17);
  os << "status " << to_string(s.status) << '\n';
  os << "objective " << s.objective << '\n';
  os << "kkt_residual " << s.kkt_residual << '\n';
  os << "iterations " << s.iterations << '\n';
  write_matrix(os, "z", s.z.transpose());
  os << "active";
  for (int i : s.active_set) os << ' ' << i;
  os << '\n';
  os.precision(old);
}

}  // namespace walkmpc
