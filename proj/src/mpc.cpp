#include "walkmpc/mpc.hpp"

#include <cmath>
#include <string>

#include "walkmpc/errors.hpp"

namespace walkmpc {

void CostWeights::validate() const {
  for (double w : {alpha_v, beta_c, gamma_p})
    if (!(std::isfinite(w) && w >= 0.0)) throw DomainError("cost weights must be finite and >= 0");
  if (alpha_v == 0.0 && beta_c == 0.0 && gamma_p == 0.0)
    throw DomainError("at least one cost weight must be positive");
}

int OcpDefinition::last_solvable_step() const { return refs.length() - horizon; }

void OcpDefinition::validate() const {
  if (horizon < 1) throw DomainError("horizon must be >= 1");
  weights.validate();
  const int len = refs.length();
  if (static_cast<int>(refs.c_des.size()) != len || static_cast<int>(refs.cdot_des.size()) != len)
    throw DomainError("reference signals must have equal lengths");
  if (static_cast<int>(input_bounds.size()) != len)
    throw DomainError("input bounds must cover every reference step");
  if (len < horizon) throw DomainError("plan shorter than the horizon");
  if (state_constraints.num_rows() > 0 && state_constraints.dim() != 2)
    throw DomainError("state constraints must act on [c, cdot]");
  for (int t = 0; t < len; ++t) {
    const Interval& in = input_bounds[t];
    if (!(std::isfinite(in.lower) && std::isfinite(in.upper)) || in.lower > in.upper)
      throw DomainError("empty or non-finite CoP interval at step " + std::to_string(t));
    if (!std::isfinite(refs.c_des[t]) || !std::isfinite(refs.cdot_des[t]) || !std::isfinite(refs.p_des[t]))
      throw DomainError("non-finite reference at step " + std::to_string(t));
  }
  if (state_constraints.num_rows() > 0 && is_empty(state_constraints))
    throw DomainError("state constraint set is empty");
}

namespace {

// Stacked predictions x_0..x_N = f + G v.
void prediction(const LtiModel& model, int N, const Vec2& x0, Eigen::VectorXd& f, Eigen::MatrixXd& G) {
  f.resize(2 * (N + 1));
  G = Eigen::MatrixXd::Zero(2 * (N + 1), N);
  f.segment<2>(0) = x0;
  for (int i = 1; i <= N; ++i) {
    f.segment<2>(2 * i) = model.A * f.segment<2>(2 * (i - 1));
    G.block(2 * i, 0, 2, N) = model.A * G.block(2 * (i - 1), 0, 2, N);
    G.block<2, 1>(2 * i, i - 1) = model.B;
  }
}

double eta_at(const std::vector<std::vector<double>>& eta, std::size_t j, int i) {
  if (j >= eta.size()) return 0.0;
  if (i >= static_cast<int>(eta[j].size())) throw PreconditionError("back-off schedule shorter than horizon");
  return eta[j][i];
}

// Sufficient emptiness test for tightened state rows: a zero row with a
// negative bound, or two opposite rows whose bounds cross.
bool opposite_rows_cross(const Eigen::MatrixXd& H, const Eigen::VectorXd& h) {
  for (Eigen::Index j = 0; j < H.rows(); ++j) {
    const double scale = H.row(j).lpNorm<Eigen::Infinity>();
    if (scale == 0.0) {
      if (h(j) < 0.0) return true;
      continue;
    }
    for (Eigen::Index k = j + 1; k < H.rows(); ++k)
      if ((H.row(j) + H.row(k)).lpNorm<Eigen::Infinity>() <= 1e-12 * scale && h(j) + h(k) < 0.0) return true;
  }
  return false;
}

}  // namespace

CondensedQp build_condensed_qp(const OcpDefinition& ocp, int t, const Vec2& x0,
                               const BackoffSchedule* backoffs) {
  const int N = ocp.horizon;
  if (t < 0 || t > ocp.last_solvable_step())
    throw PreconditionError("OCP step " + std::to_string(t) + " outside the plan");
  const CostWeights& w = ocp.weights;

  Eigen::VectorXd f;
  Eigen::MatrixXd G;
  prediction(ocp.model, N, x0, f, G);

  CondensedQp out;
  Eigen::MatrixXd P = 2.0 * w.gamma_p * Eigen::MatrixXd::Identity(N, N);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(N);
  double constant = 0.0;
  const Eigen::Vector2d qdiag(w.beta_c, w.alpha_v);
  for (int i = 0; i < N; ++i) {
    const Eigen::MatrixXd Gi = G.middleRows(2 * i, 2);
    const Vec2 ri(ocp.refs.c_des[t + i], ocp.refs.cdot_des[t + i]);
    const Vec2 ei = f.segment<2>(2 * i) - ri;
    P.noalias() += 2.0 * Gi.transpose() * qdiag.asDiagonal() * Gi;
    q.noalias() += 2.0 * Gi.transpose() * qdiag.cwiseProduct(ei);
    constant += ei.dot(qdiag.cwiseProduct(ei));
    const double pd = ocp.refs.p_des[t + i];
    q(i) -= 2.0 * w.gamma_p * pd;
    constant += w.gamma_p * pd * pd;
  }
  out.qp.P = 0.5 * (P + P.transpose());
  out.qp.q = q;
  out.constant = constant;

  const HPolytope& X = ocp.state_constraints;
  const int nx = static_cast<int>(X.num_rows());
  const int m = nx * N + 2 * N;
  out.qp.A.resize(m, N);
  out.qp.b.resize(m);
  int r = 0;
  for (int i = 1; i <= N; ++i) {
    Eigen::VectorXd h_tight = X.h;
    for (int j = 0; j < nx; ++j) {
      const double eta = backoffs ? eta_at(backoffs->eta_x, j, i) : 0.0;
      h_tight(j) = X.h(j) - eta;
      out.qp.A.row(r) = X.H.row(j) * G.middleRows(2 * i, 2);
      out.qp.b(r) = h_tight(j) - X.H.row(j).dot(f.segment<2>(2 * i));
      ++r;
    }
    if (nx > 0 && opposite_rows_cross(X.H, h_tight)) out.empty_by_construction = true;
  }
  for (int i = 0; i < N; ++i) {
    const Interval& in = ocp.input_bounds[t + i];
    const double hi = in.upper - (backoffs ? eta_at(backoffs->eta_u, 0, i) : 0.0);
    const double lo = in.lower + (backoffs ? eta_at(backoffs->eta_u, 1, i) : 0.0);
    if (lo > hi) out.empty_by_construction = true;
    out.qp.A.row(r).setZero();
    out.qp.A(r, i) = 1.0;
    out.qp.b(r++) = hi;
    out.qp.A.row(r).setZero();
    out.qp.A(r, i) = -1.0;
    out.qp.b(r++) = -lo;
  }

  out.free_response = f.tail(2 * N);
  out.forced_response = G.bottomRows(2 * N);
  return out;
}

std::vector<Vec2> predict(const LtiModel& model, const Vec2& s0, const Eigen::VectorXd& v) {
  std::vector<Vec2> s(v.size() + 1);
  s[0] = s0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s[i + 1] = model.step(s[i], v(i));
  return s;
}

double stage_cost(const OcpDefinition& ocp, int t, const Vec2& x, double u) {
  const CostWeights& w = ocp.weights;
  const double dv = ocp.refs.cdot_des[t] - x(1);
  const double dc = ocp.refs.c_des[t] - x(0);
  const double dp = ocp.refs.p_des[t] - u;
  return w.alpha_v * dv * dv + w.beta_c * dc * dc + w.gamma_p * dp * dp;
}

BackoffSchedule rmpc_backoffs(const OcpDefinition& ocp, const Zonotope& omega, const GainVector& K) {
  const int N = ocp.horizon;
  const HPolytope& X = ocp.state_constraints;
  BackoffSchedule out;
  for (Eigen::Index j = 0; j < X.num_rows(); ++j)
    out.eta_x.emplace_back(N + 1, support(omega, X.H.row(j).transpose()));
  const Eigen::VectorXd k = K.K.transpose();
  out.eta_u.emplace_back(N, support(omega, k));
  out.eta_u.emplace_back(N, support(omega, -k));
  return out;
}

BackoffSchedule smpc_backoffs(const OcpDefinition& ocp, const ClosedLoop& cl, const GainVector& K,
                              const DisturbanceModel& dist, double beta_x, double beta_u) {
  const CovarianceSchedule cov = propagate_covariance(cl.A_K, dist, ocp.horizon);
  const HPolytope& X = ocp.state_constraints;
  std::vector<ChanceConstraintSpec> xs;
  for (Eigen::Index j = 0; j < X.num_rows(); ++j) xs.push_back({X.H.row(j).transpose(), X.h(j), beta_x});
  std::vector<ChanceConstraintSpec> us;
  us.push_back({Eigen::VectorXd::Constant(1, 1.0), 0.0, beta_u});
  us.push_back({Eigen::VectorXd::Constant(1, -1.0), 0.0, beta_u});
  BackoffSchedule out;
  out.eta_x = state_backoffs(xs, cov);
  out.eta_u = control_backoffs(us, K.K, cov);
  return out;
}

TighteningCheck check_tightening(const OcpDefinition& ocp, const BackoffSchedule& backoffs) {
  TighteningCheck out;
  const int N = ocp.horizon;
  const HPolytope& X = ocp.state_constraints;
  if (X.num_rows() > 0) {
    for (int i = 1; i <= N && !out.state_empty; ++i) {
      HPolytope tight = X;
      for (Eigen::Index j = 0; j < X.num_rows(); ++j) tight.h(j) -= eta_at(backoffs.eta_x, j, i);
      if (is_empty(tight)) {
        out.state_empty = true;
        out.state_step = i;
      }
    }
  }
  for (int t = 0; t < ocp.refs.length() && !out.input_empty; ++t) {
    const Interval& in = ocp.input_bounds[t];
    for (int i = 0; i < N && i <= t; ++i) {
      if (in.upper - eta_at(backoffs.eta_u, 0, i) < in.lower + eta_at(backoffs.eta_u, 1, i)) {
        out.input_empty = true;
        out.input_step = t;
        break;
      }
    }
  }
  return out;
}

namespace {

struct Attempt {
  bool ok = false;
  QpSolution sol;
  double constant = 0.0;
};

Attempt solve_from(const OcpDefinition& ocp, const BackoffSchedule* tightening, int t, const Vec2& s0,
                   const Eigen::VectorXd* warm, QpSolver& solver) {
  Attempt a;
  const CondensedQp cq = build_condensed_qp(ocp, t, s0, tightening);
  if (cq.empty_by_construction) return a;
  a.sol = solver.solve(cq.qp, warm);
  a.constant = cq.constant;
  a.ok = a.sol.status == QpStatus::optimal;
  return a;
}

void record(const OcpDefinition& ocp, ControllerState& state, int t, const Vec2& s0, const Attempt& a) {
  state.has_trajectory = true;
  state.solved_at = t;
  state.nominal_inputs = a.sol.z;
  state.nominal_states = predict(ocp.model, s0, a.sol.z);
}

}  // namespace

StepResult mpc_step(const OcpDefinition& ocp, const BackoffSchedule* tightening, const GainVector& K,
                    bool fallback, ControllerState& state, int t, const Vec2& x, QpSolver& solver) {
  const int N = ocp.horizon;
  const bool continuing = state.has_trajectory && state.solved_at == t - 1;
  Eigen::VectorXd shifted;
  if (continuing) {
    shifted.resize(N);
    shifted.head(N - 1) = state.nominal_inputs.tail(N - 1);
    shifted(N - 1) = state.nominal_inputs(N - 1);
  }
  const Eigen::VectorXd* warm = continuing ? &shifted : nullptr;

  StepResult res;
  Attempt a = solve_from(ocp, tightening, t, x, warm, solver);
  if (a.ok) {
    record(ocp, state, t, x, a);
    state.mode = Mode::mode1;
    res.mode = Mode::mode1;
    res.s = x;
    res.v = a.sol.z(0);
    res.u = res.v;
  } else if (fallback && continuing) {
    const Vec2 s = state.nominal_states[1];
    a = solve_from(ocp, tightening, t, s, warm, solver);
    if (!a.ok) {
      res.status = StepStatus::infeasible;
      return res;
    }
    record(ocp, state, t, s, a);
    state.mode = Mode::mode2;
    res.mode = Mode::mode2;
    res.s = s;
    res.v = a.sol.z(0);
    res.u = res.v + K.K.dot(x - s);
  } else {
    res.status = StepStatus::infeasible;
    return res;
  }
  res.predicted_cost = a.sol.objective + a.constant;
  res.active_set_size = static_cast<int>(a.sol.active_set.size());
  res.qp_iterations = a.sol.iterations;
  return res;
}

StepResult nominal_step(const OcpDefinition& ocp, ControllerState& state, int t, const Vec2& x,
                        QpSolver& solver) {
  return mpc_step(ocp, nullptr, GainVector{}, false, state, t, x, solver);
}

StepResult rmpc_step(const OcpDefinition& ocp, ControllerState& state, int t, const Vec2& x,
                     const Zonotope& omega, const GainVector& K, QpSolver& solver) {
  const BackoffSchedule b = rmpc_backoffs(ocp, omega, K);
  return mpc_step(ocp, &b, K, true, state, t, x, solver);
}

StepResult smpc_step(const OcpDefinition& ocp, ControllerState& state, int t, const Vec2& x,
                     const BackoffSchedule& backoffs, const GainVector& K, QpSolver& solver) {
  return mpc_step(ocp, &backoffs, K, true, state, t, x, solver);
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::nominal:
      return "nominal";
    case Variant::rmpc:
      return "rmpc";
    case Variant::smpc:
      return "smpc";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "nominal") return Variant::nominal;
  if (s == "rmpc") return Variant::rmpc;
  if (s == "smpc") return Variant::smpc;
  throw DomainError("unknown controller variant '" + s + "'");
}

MpcController::MpcController(OcpDefinition ocp, Variant variant, GainVector K,
                             std::optional<BackoffSchedule> tightening, QpSettings settings)
    : ocp_(std::move(ocp)),
      variant_(variant),
      K_(K),
      tightening_(std::move(tightening)),
      solver_(settings) {
  if (variant_ == Variant::nominal && tightening_)
    throw PreconditionError("nominal MPC takes no constraint tightening");
  if (variant_ != Variant::nominal && !tightening_)
    throw PreconditionError(std::string(to_string(variant_)) + " needs a back-off schedule");
}

StepResult MpcController::step(int t, const Vec2& x) {
  const StepResult r = mpc_step(ocp_, tightening_ ? &*tightening_ : nullptr, K_,
                                variant_ != Variant::nominal, state_, t, x, solver_);
  if (r.status == StepStatus::ok && r.mode == Mode::mode2) ++fallbacks_;
  return r;
}

}  // namespace walkmpc
