#pragma once

// Walking scenario, disturbance sampling, closed-loop episodes and
// Monte-Carlo studies on the lateral axis.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "walkmpc/model.hpp"
#include "walkmpc/mpc.hpp"
#include "walkmpc/polytope.hpp"
#include "walkmpc/stochastic.hpp"

namespace walkmpc {

struct PlanConfig {
  int num_steps = 8;
  int in_place_steps = 2;
  int step_duration = 8;           // MPC steps per footstep
  int initial_double_support = 8;  // MPC steps with both feet down before the first lift-off
  int padding = 16;                // trailing double support so the last OCP sees a full horizon
  double foot_offset_y = 0.07;     // lateral distance of each foot center from the hallway axis
  double step_length_x = 0.2;
  bool left_first = true;          // first swing leaves the left foot (+y) as support
  Interval foot_cop_x{-0.05, 0.10};
  Interval foot_cop_y{-0.05, 0.05};
  double hallway_half_width = 0.04;

  void validate() const;
};

struct Footstep {
  double center_y = 0.0;
  double center_x = 0.0;
  int duration = 0;
  bool double_support = false;
};

struct FootstepPlan {
  std::vector<Footstep> steps;  // support phases in order, padding included
  int total_steps = 0;          // simulated MPC steps (padding excluded)
  Interval hallway;
  // Per MPC step over total_steps + padding.
  std::vector<Interval> cop_y;
  std::vector<Interval> cop_x;
  std::vector<double> center_y;
  std::vector<double> center_x;
  std::vector<double> speed_x;  // desired forward CoM speed

  int length() const { return static_cast<int>(cop_y.size()); }
};

FootstepPlan build_footstep_plan(const PlanConfig& cfg, double dt);

enum class DisturbanceKind { none, gaussian, corner };

const char* to_string(DisturbanceKind k);
DisturbanceKind parse_disturbance_kind(const std::string& s);

struct Scenario {
  LipmParams lipm;
  DisturbanceModel disturbance = default_disturbance();
  PlanConfig plan;
  CostWeights weights{1.0, 10.0, 1e-3};
  int horizon = 16;
  /// Feedback gain of the tube/variance prediction; dead-beat when absent.
  std::optional<RowVec2> custom_gain = RowVec2(kReferenceGain[0], kReferenceGain[1]);
  double mrpi_eps = 1e-6;
  int disturbance_onset_footstep = 4;  // first footstep (0-based) with disturbances
  DisturbanceKind disturbance_kind = DisturbanceKind::gaussian;
  Vec2 corner_sign{1.0, 1.0};          // which vertex of W for DisturbanceKind::corner

  static DisturbanceModel default_disturbance();
  void validate() const;
};

/// Everything derived offline from a scenario.
struct Setup {
  Scenario scenario;
  LtiModel model;
  GainVector K;
  ClosedLoop closed_loop;
  FootstepPlan plan;
  OcpDefinition lateral;
  OcpDefinition forward;
  Zonotope omega;
  bool omega_exact = false;
  int disturbance_onset = 0;  // MPC step

  int episode_steps() const { return plan.total_steps; }
};

Setup prepare(const Scenario& scenario);

struct VariantConfig {
  Variant variant = Variant::nominal;
  double beta_x = 0.05;
  double beta_u = 0.5;

  std::string label() const;
};

/// Back-off schedule of a variant (nullopt for nominal).
std::optional<BackoffSchedule> variant_backoffs(const Setup& setup, const VariantConfig& v);

MpcController make_controller(const Setup& setup, const VariantConfig& v);

/// Per-component rejection sampling from N(0, sigma^2) truncated to the
/// support; after 10^4 rejections the last draw is clamped. A zero sigma
/// yields zero.
Eigen::VectorXd sample_truncated_gaussian(const DisturbanceModel& dist, std::mt19937_64& rng);

/// Disturbance sequence of one episode: zero before the onset, then
/// samples (or the fixed corner). Depends only on (scenario, seed).
std::vector<Vec2> disturbance_sequence(const Setup& setup, std::uint64_t seed);

struct SimTrace {
  std::vector<Vec2> x;              // T + 1 states
  std::vector<double> u;            // applied inputs
  std::vector<double> v;            // nominal inputs
  std::vector<Vec2> w;
  std::vector<Vec2> s;              // nominal state used at t
  std::vector<Mode> mode;
  std::vector<std::uint32_t> violations_x;  // bit j: row j of X violated by x[t], t = 0..T
  std::vector<char> violations_u;
  std::vector<double> stage_cost;
  std::vector<double> predicted_cost;
  std::vector<int> active_set_size;
  bool failed = false;
  int failed_at = -1;
  int fallbacks = 0;

  int steps() const { return static_cast<int>(u.size()); }
  double total_cost() const;
  int state_violations() const;
};

/// Violations are counted with this slack on the original constraints.
inline constexpr double kViolationTol = 1e-9;

/// Simulates `controller` from x0 for the plan's episode with the given
/// disturbances. A controller failure truncates the trace.
SimTrace run_closed_loop(MpcController& controller, const Vec2& x0, const std::vector<Vec2>& w,
                         int steps);

struct MonteCarloReport {
  std::string label;
  VariantConfig variant;
  int runs = 0;
  std::uint64_t seed = 0;
  std::vector<int> violation_count_per_step;  // runs whose x[t] violates X, t = 0..T
  std::vector<int> input_violation_count_per_step;
  std::vector<double> run_costs;
  std::vector<char> run_failed;
  std::vector<int> run_violations;
  std::vector<double> run_max_abs_c;
  double avg_cost = 0.0;
  double cost_ratio_vs_nominal = 1.0;
  int fallback_activations = 0;
  int failures = 0;

  int max_violations_per_step() const;
  int total_violations() const;
};

/// Runs `runs` paired episodes (run r uses derive_seed(seed, r)). The cost
/// ratio is the mean cost over the mean nominal cost on the same seeds,
/// counting runs where both episodes completed. The nominal baseline is
/// simulated when not supplied. The result does not depend on `threads`.
MonteCarloReport monte_carlo(const Setup& setup, const VariantConfig& variant, int runs,
                             std::uint64_t seed, int threads = 1,
                             const MonteCarloReport* baseline = nullptr);

/// Undisturbed nominal MPC on the forward axis.
SimTrace run_forward(const Setup& setup);

}  // namespace walkmpc
