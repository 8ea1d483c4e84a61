#pragma once

// Condensed linear MPC for one LIPM axis and the three controllers built on
// it: nominal MPC, tube-based robust MPC and chance-constrained stochastic
// MPC. The latter two differ from the nominal one only through the
// back-off schedule used to tighten the constraints.

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "walkmpc/model.hpp"
#include "walkmpc/polytope.hpp"
#include "walkmpc/qp.hpp"
#include "walkmpc/stochastic.hpp"

namespace walkmpc {

struct CostWeights {
  double alpha_v = 1.0;   // CoM velocity tracking
  double beta_c = 0.0;    // CoM position tracking
  double gamma_p = 1e-3;  // CoP tracking

  void validate() const;
};

/// Desired CoM position, velocity and CoP per absolute MPC step.
struct ReferenceSignal {
  std::vector<double> c_des;
  std::vector<double> cdot_des;
  std::vector<double> p_des;

  int length() const { return static_cast<int>(p_des.size()); }
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;

  bool contains(double v, double tol = 0.0) const { return v >= lower - tol && v <= upper + tol; }
};

struct OcpDefinition {
  LtiModel model;
  int horizon = 16;
  CostWeights weights;
  /// State constraint set X on [c, cdot]; applied on prediction steps 1..N.
  HPolytope state_constraints;
  /// CoP interval per absolute MPC step; applied on prediction steps 0..N-1.
  std::vector<Interval> input_bounds;
  ReferenceSignal refs;

  /// Number of absolute steps at which an OCP can be posed (t + N <= length).
  int last_solvable_step() const;
  void validate() const;
};

struct CondensedQp {
  QpProblem qp;
  double constant = 0.0;  // cost = qp objective + constant
  /// Predicted states x_1..x_N = free + forced * v (2N rows, [c, cdot] pairs).
  Eigen::VectorXd free_response;
  Eigen::MatrixXd forced_response;
  bool empty_by_construction = false;
};

/// Condensed QP at absolute step t from initial state x0. A null schedule
/// means no tightening. eta_u rows: 0 tightens the upper CoP bound, 1 the
/// lower one.
CondensedQp build_condensed_qp(const OcpDefinition& ocp, int t, const Vec2& x0,
                               const BackoffSchedule* backoffs = nullptr);

/// Predicted states s_0..s_N for inputs v from s_0.
std::vector<Vec2> predict(const LtiModel& model, const Vec2& s0, const Eigen::VectorXd& v);

/// Tracking cost of a realized state/input pair at absolute step t.
double stage_cost(const OcpDefinition& ocp, int t, const Vec2& x, double u);

/// Constant RMPC back-offs: support of Omega along every row of X, and of
/// K Omega for the CoP bounds.
BackoffSchedule rmpc_backoffs(const OcpDefinition& ocp, const Zonotope& omega, const GainVector& K);

/// SMPC back-offs for every row of X with probability beta_x and both CoP
/// bounds with beta_u.
BackoffSchedule smpc_backoffs(const OcpDefinition& ocp, const ClosedLoop& cl, const GainVector& K,
                              const DisturbanceModel& dist, double beta_x, double beta_u);

struct TighteningCheck {
  bool state_empty = false;
  int state_step = -1;  // first prediction step with an empty tightened X
  bool input_empty = false;
  int input_step = -1;  // first absolute step with an empty tightened CoP interval

  bool ok() const { return !state_empty && !input_empty; }
};

/// Checks the tightened sets for emptiness over the whole plan.
TighteningCheck check_tightening(const OcpDefinition& ocp, const BackoffSchedule& backoffs);

enum class Mode { mode1, mode2 };

struct ControllerState {
  Mode mode = Mode::mode1;
  bool has_trajectory = false;
  int solved_at = -1;
  std::vector<Vec2> nominal_states;  // s_{t|t} .. s_{t+N|t} of the last feasible solve
  Eigen::VectorXd nominal_inputs;    // v_{t|t} .. v_{t+N-1|t}
};

enum class StepStatus { ok, infeasible };

struct StepResult {
  StepStatus status = StepStatus::ok;
  Mode mode = Mode::mode1;
  double u = 0.0;  // applied input
  double v = 0.0;  // feed-forward part
  Vec2 s = Vec2::Zero();
  double predicted_cost = 0.0;
  int active_set_size = 0;
  int qp_iterations = 0;
};

/// One receding-horizon step. `tightening` null means nominal constraints.
/// With `fallback`, an infeasible Mode-1 problem is re-posed from the
/// stored s_{t|t-1} (Mode 2) and the applied input becomes v + K (x - s).
StepResult mpc_step(const OcpDefinition& ocp, const BackoffSchedule* tightening, const GainVector& K,
                    bool fallback, ControllerState& state, int t, const Vec2& x, QpSolver& solver);

/// Nominal MPC: no tightening, no fallback.
StepResult nominal_step(const OcpDefinition& ocp, ControllerState& state, int t, const Vec2& x,
                        QpSolver& solver);

/// Tube MPC with X - Omega and U - K Omega.
StepResult rmpc_step(const OcpDefinition& ocp, ControllerState& state, int t, const Vec2& x,
                     const Zonotope& omega, const GainVector& K, QpSolver& solver);

/// Stochastic MPC with a precomputed back-off schedule.
StepResult smpc_step(const OcpDefinition& ocp, ControllerState& state, int t, const Vec2& x,
                     const BackoffSchedule& backoffs, const GainVector& K, QpSolver& solver);

enum class Variant { nominal, rmpc, smpc };

const char* to_string(Variant v);
Variant parse_variant(const std::string& s);

/// Stateful controller for one closed-loop episode.
class MpcController {
 public:
  MpcController(OcpDefinition ocp, Variant variant, GainVector K,
                std::optional<BackoffSchedule> tightening, QpSettings settings = {});

  StepResult step(int t, const Vec2& x);

  Variant variant() const { return variant_; }
  const OcpDefinition& ocp() const { return ocp_; }
  const ControllerState& state() const { return state_; }
  int fallback_activations() const { return fallbacks_; }

 private:
  OcpDefinition ocp_;
  Variant variant_;
  GainVector K_;
  std::optional<BackoffSchedule> tightening_;
  QpSolver solver_;
  ControllerState state_;
  int fallbacks_ = 0;
};

}  // namespace walkmpc
