#include "walkmpc/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <iostream>
#include <mutex>
#include <thread>

#include "walkmpc/errors.hpp"
#include "walkmpc/rng.hpp"

namespace walkmpc {

void PlanConfig::validate() const {
  if (num_steps < 1) throw DomainError("plan needs at least one footstep");
  if (in_place_steps < 0 || in_place_steps > num_steps)
    throw DomainError("in-place steps must lie in [0, num_steps]");
  if (step_duration < 1) throw DomainError("step duration must be >= 1 MPC step");
  if (initial_double_support < 0 || padding < 0) throw DomainError("double-support lengths must be >= 0");
  if (!(std::isfinite(foot_offset_y) && foot_offset_y >= 0.0)) throw DomainError("foot offset must be >= 0");
  if (!std::isfinite(step_length_x)) throw DomainError("step length must be finite");
  for (const Interval& in : {foot_cop_x, foot_cop_y})
    if (!(std::isfinite(in.lower) && std::isfinite(in.upper) && in.lower < in.upper))
      throw DomainError("foot support polygon must be a nonempty finite interval");
  if (!(std::isfinite(hallway_half_width) && hallway_half_width > 0.0))
    throw DomainError("hallway half-width must be positive");
}

FootstepPlan build_footstep_plan(const PlanConfig& cfg, double dt) {
  cfg.validate();
  if (!(dt > 0.0)) throw DomainError("footstep plan needs a positive sampling time");
  FootstepPlan plan;
  plan.hallway = {-cfg.hallway_half_width, cfg.hallway_half_width};

  const double f = cfg.foot_offset_y;
  const double speed = cfg.step_length_x / (cfg.step_duration * dt);
  struct Foot {
    double y, x;
  };
  Foot left{f, 0.0}, right{-f, 0.0};

  auto push = [&](const Footstep& s, const Interval& cy, const Interval& cx, double vx) {
    plan.steps.push_back(s);
    for (int k = 0; k < s.duration; ++k) {
      plan.cop_y.push_back(cy);
      plan.cop_x.push_back(cx);
      plan.center_y.push_back(s.center_y);
      plan.center_x.push_back(s.center_x);
      plan.speed_x.push_back(vx);
    }
  };
  auto double_support = [&](int duration) {
    Footstep s{0.5 * (left.y + right.y), 0.5 * (left.x + right.x), duration, true};
    const Interval cy{std::min(left.y, right.y) + cfg.foot_cop_y.lower,
                      std::max(left.y, right.y) + cfg.foot_cop_y.upper};
    const Interval cx{std::min(left.x, right.x) + cfg.foot_cop_x.lower,
                      std::max(left.x, right.x) + cfg.foot_cop_x.upper};
    push(s, cy, cx, 0.0);
  };

  if (cfg.initial_double_support > 0) double_support(cfg.initial_double_support);
  for (int k = 0; k < cfg.num_steps; ++k) {
    const bool left_support = (k % 2 == 0) == cfg.left_first;
    Foot& support = left_support ? left : right;
    if (k >= cfg.in_place_steps) support.x = (k - cfg.in_place_steps + 1) * cfg.step_length_x;
    const Footstep s{support.y, support.x, cfg.step_duration, false};
    push(s, {support.y + cfg.foot_cop_y.lower, support.y + cfg.foot_cop_y.upper},
         {support.x + cfg.foot_cop_x.lower, support.x + cfg.foot_cop_x.upper},
         k >= cfg.in_place_steps ? speed : 0.0);
  }
  plan.total_steps = static_cast<int>(plan.cop_y.size());
  if (cfg.padding > 0) double_support(cfg.padding);
  return plan;
}

const char* to_string(DisturbanceKind k) {
  switch (k) {
    case DisturbanceKind::none:
      return "none";
    case DisturbanceKind::gaussian:
      return "gaussian";
    case DisturbanceKind::corner:
      return "corner";
  }
  return "?";
}

DisturbanceKind parse_disturbance_kind(const std::string& s) {
  if (s == "none") return DisturbanceKind::none;
  if (s == "gaussian") return DisturbanceKind::gaussian;
  if (s == "corner") return DisturbanceKind::corner;
  throw DomainError("unknown disturbance kind '" + s + "'");
}

DisturbanceModel Scenario::default_disturbance() {
  DisturbanceModel d;
  d.sigma = Eigen::Vector2d(0.0008, 0.008);
  d.support = Box::symmetric(Eigen::Vector2d(0.0016, 0.016));
  return d;
}

void Scenario::validate() const {
  lipm.validate();
  disturbance.validate();
  if (disturbance.dim() != 2) throw DomainError("disturbance must act on [c, cdot]");
  plan.validate();
  weights.validate();
  if (horizon < 1) throw DomainError("horizon must be >= 1");
  if (!(mrpi_eps > 0.0)) throw DomainError("mRPI accuracy must be positive");
  if (disturbance_onset_footstep < 0) throw DomainError("disturbance onset must be >= 0");
  if (std::abs(corner_sign(0)) != 1.0 || std::abs(corner_sign(1)) != 1.0)
    throw DomainError("corner signs must be +1 or -1");
  if (plan.padding < horizon - 1) throw DomainError("plan padding must be at least horizon - 1 steps");
}

Setup prepare(const Scenario& scenario) {
  scenario.validate();
  Setup s;
  s.scenario = scenario;
  s.model = discretize_lipm(scenario.lipm);
  s.K = scenario.custom_gain ? GainVector{*scenario.custom_gain} : deadbeat_gain(s.model);
  s.closed_loop = closed_loop(s.model, s.K);
  s.plan = build_footstep_plan(scenario.plan, s.model.dt);

  const int len = s.plan.length();
  OcpDefinition& lat = s.lateral;
  lat.model = s.model;
  lat.horizon = scenario.horizon;
  lat.weights = scenario.weights;
  // Only the CoM position is constrained.
  lat.state_constraints.H = Eigen::MatrixXd(2, 2);
  lat.state_constraints.H << 1.0, 0.0, -1.0, 0.0;
  lat.state_constraints.h = Eigen::Vector2d(s.plan.hallway.upper, -s.plan.hallway.lower);
  lat.input_bounds = s.plan.cop_y;
  lat.refs.c_des = s.plan.center_y;
  lat.refs.cdot_des.assign(len, 0.0);
  lat.refs.p_des = s.plan.center_y;
  lat.validate();

  OcpDefinition& fwd = s.forward;
  fwd.model = s.model;
  fwd.horizon = scenario.horizon;
  fwd.weights = {scenario.weights.alpha_v, 0.0, scenario.weights.gamma_p};
  fwd.state_constraints.H = Eigen::MatrixXd(0, 2);
  fwd.state_constraints.h = Eigen::VectorXd(0);
  fwd.input_bounds = s.plan.cop_x;
  fwd.refs.c_des = s.plan.center_x;
  fwd.refs.cdot_des = s.plan.speed_x;
  fwd.refs.p_des = s.plan.center_x;
  fwd.validate();

  try {
    s.omega = mrpi_exact_nilpotent(s.closed_loop.A_K, scenario.disturbance.support);
    s.omega_exact = true;
  } catch (const PreconditionError&) {
    s.omega = mrpi_outer_eps(s.closed_loop.A_K, scenario.disturbance.support, scenario.mrpi_eps).set;
  }
  s.disturbance_onset =
      scenario.plan.initial_double_support + scenario.disturbance_onset_footstep * scenario.plan.step_duration;
  return s;
}

std::string VariantConfig::label() const {
  if (variant != Variant::smpc) return to_string(variant);
  char buf[64];
  std::snprintf(buf, sizeof buf, "smpc_bx%g_bu%g", beta_x, beta_u);
  return buf;
}

std::optional<BackoffSchedule> variant_backoffs(const Setup& setup, const VariantConfig& v) {
  switch (v.variant) {
    case Variant::nominal:
      return std::nullopt;
    case Variant::rmpc:
      return rmpc_backoffs(setup.lateral, setup.omega, setup.K);
    case Variant::smpc:
      return smpc_backoffs(setup.lateral, setup.closed_loop, setup.K, setup.scenario.disturbance, v.beta_x,
                           v.beta_u);
  }
  return std::nullopt;
}

MpcController make_controller(const Setup& setup, const VariantConfig& v) {
  return MpcController(setup.lateral, v.variant, setup.K, variant_backoffs(setup, v));
}

Eigen::VectorXd sample_truncated_gaussian(const DisturbanceModel& dist, std::mt19937_64& rng) {
  constexpr int kMaxDraws = 10000;
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd out(dist.dim());
  for (Eigen::Index k = 0; k < dist.dim(); ++k) {
    const double s = dist.sigma(k);
    const double lo = dist.support.lower(k), hi = dist.support.upper(k);
    if (s == 0.0) {
      out(k) = std::clamp(0.0, lo, hi);
      continue;
    }
    if (hi - lo < 0.1 * s) {
      static std::once_flag warned;
      std::call_once(warned, [] {
        std::cerr << "warning: disturbance support narrower than 0.1 sigma; rejection sampling may clamp\n";
      });
    }
    double d = 0.0;
    for (int n = 0; n < kMaxDraws; ++n) {
      d = s * gauss(rng);
      if (d >= lo && d <= hi) break;
    }
    out(k) = std::clamp(d, lo, hi);
  }
  return out;
}

std::vector<Vec2> disturbance_sequence(const Setup& setup, std::uint64_t seed) {
  const Scenario& sc = setup.scenario;
  const int T = setup.episode_steps();
  std::vector<Vec2> w(T, Vec2::Zero());
  std::mt19937_64 rng(seed);
  const Box& W = sc.disturbance.support;
  for (int t = setup.disturbance_onset; t < T; ++t) {
    switch (sc.disturbance_kind) {
      case DisturbanceKind::none:
        break;
      case DisturbanceKind::gaussian:
        w[t] = sample_truncated_gaussian(sc.disturbance, rng);
        break;
      case DisturbanceKind::corner:
        for (int k = 0; k < 2; ++k) w[t](k) = sc.corner_sign(k) > 0 ? W.upper(k) : W.lower(k);
        break;
    }
  }
  return w;
}

double SimTrace::total_cost() const {
  double c = 0.0;
  for (double v : stage_cost) c += v;
  return c;
}

int SimTrace::state_violations() const {
  int n = 0;
  for (std::uint32_t m : violations_x) n += m != 0;
  return n;
}

namespace {

std::uint32_t violation_mask(const HPolytope& X, const Vec2& x) {
  std::uint32_t mask = 0;
  for (Eigen::Index j = 0; j < X.num_rows() && j < 32; ++j)
    if (X.H.row(j).dot(x) - X.h(j) > kViolationTol) mask |= 1u << j;
  return mask;
}

}  // namespace

SimTrace run_closed_loop(MpcController& controller, const Vec2& x0, const std::vector<Vec2>& w, int steps) {
  const OcpDefinition& ocp = controller.ocp();
  if (static_cast<int>(w.size()) < steps) throw PreconditionError("disturbance sequence shorter than episode");
  if (steps - 1 > ocp.last_solvable_step()) throw PreconditionError("episode longer than the plan allows");
  SimTrace tr;
  Vec2 x = x0;
  tr.x.push_back(x);
  tr.violations_x.push_back(violation_mask(ocp.state_constraints, x));
  for (int t = 0; t < steps; ++t) {
    const StepResult r = controller.step(t, x);
    if (r.status != StepStatus::ok) {
      tr.failed = true;
      tr.failed_at = t;
      break;
    }
    tr.u.push_back(r.u);
    tr.v.push_back(r.v);
    tr.s.push_back(r.s);
    tr.mode.push_back(r.mode);
    tr.w.push_back(w[t]);
    tr.stage_cost.push_back(stage_cost(ocp, t, x, r.u));
    tr.predicted_cost.push_back(r.predicted_cost);
    tr.active_set_size.push_back(r.active_set_size);
    tr.violations_u.push_back(!ocp.input_bounds[t].contains(r.u, kViolationTol));
    x = ocp.model.step(x, r.u) + w[t];
    tr.x.push_back(x);
    tr.violations_x.push_back(violation_mask(ocp.state_constraints, x));
  }
  tr.fallbacks = controller.fallback_activations();
  return tr;
}

int MonteCarloReport::max_violations_per_step() const {
  return violation_count_per_step.empty()
             ? 0
             : *std::max_element(violation_count_per_step.begin(), violation_count_per_step.end());
}

int MonteCarloReport::total_violations() const {
  int n = 0;
  for (int c : violation_count_per_step) n += c;
  return n;
}

namespace {

struct RunSummary {
  double cost = 0.0;
  bool failed = false;
  int fallbacks = 0;
  double max_abs_c = 0.0;
  std::vector<std::uint32_t> viol_x;
  std::vector<char> viol_u;
};

}  // namespace

MonteCarloReport monte_carlo(const Setup& setup, const VariantConfig& variant, int runs, std::uint64_t seed,
                             int threads, const MonteCarloReport* baseline) {
  if (runs < 1) throw PreconditionError("monte_carlo needs at least one run");
  MonteCarloReport nominal_report;
  if (variant.variant != Variant::nominal && baseline == nullptr) {
    nominal_report = monte_carlo(setup, VariantConfig{Variant::nominal}, runs, seed, threads);
    baseline = &nominal_report;
  }
  if (baseline && (baseline->runs != runs || baseline->seed != seed))
    throw PreconditionError("nominal baseline must use the same runs and seed");

  const std::optional<BackoffSchedule> tightening = variant_backoffs(setup, variant);
  if (tightening) {
    const TighteningCheck chk = check_tightening(setup.lateral, *tightening);
    if (!chk.ok()) throw DomainError(variant.label() + ": tightened constraint set is empty");
  }
  const int T = setup.episode_steps();
  std::vector<RunSummary> results(runs);
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto worker = [&] {
    for (int r = next++; r < runs; r = next++) {
      try {
        MpcController ctrl(setup.lateral, variant.variant, setup.K, tightening);
        const std::vector<Vec2> w = disturbance_sequence(setup, derive_seed(seed, static_cast<std::uint64_t>(r)));
        const SimTrace tr = run_closed_loop(ctrl, Vec2::Zero(), w, T);
        RunSummary& out = results[r];
        out.cost = tr.total_cost();
        out.failed = tr.failed;
        out.fallbacks = tr.fallbacks;
        for (const Vec2& x : tr.x) out.max_abs_c = std::max(out.max_abs_c, std::abs(x(0)));
        out.viol_x = tr.violations_x;
        out.viol_u = tr.violations_u;
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int n_threads = std::clamp(threads, 1, runs);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);

  MonteCarloReport rep;
  rep.label = variant.label();
  rep.variant = variant;
  rep.runs = runs;
  rep.seed = seed;
  rep.violation_count_per_step.assign(T + 1, 0);
  rep.input_violation_count_per_step.assign(T, 0);
  double cost_sum = 0.0, paired_sum = 0.0, paired_nominal = 0.0;
  int completed = 0;
  for (int r = 0; r < runs; ++r) {
    const RunSummary& rs = results[r];
    int nviol = 0;
    for (std::size_t t = 0; t < rs.viol_x.size(); ++t)
      if (rs.viol_x[t]) {
        ++rep.violation_count_per_step[t];
        ++nviol;
      }
    for (std::size_t t = 0; t < rs.viol_u.size(); ++t) rep.input_violation_count_per_step[t] += rs.viol_u[t];
    rep.run_costs.push_back(rs.cost);
    rep.run_failed.push_back(rs.failed);
    rep.run_violations.push_back(nviol);
    rep.run_max_abs_c.push_back(rs.max_abs_c);
    rep.fallback_activations += rs.fallbacks;
    if (rs.failed) {
      ++rep.failures;
      continue;
    }
    cost_sum += rs.cost;
    ++completed;
    if (baseline && !baseline->run_failed[r]) {
      paired_sum += rs.cost;
      paired_nominal += baseline->run_costs[r];
    }
  }
  rep.avg_cost = completed > 0 ? cost_sum / completed : std::nan("");
  if (variant.variant == Variant::nominal)
    rep.cost_ratio_vs_nominal = 1.0;
  else
    rep.cost_ratio_vs_nominal = paired_nominal > 0.0 ? paired_sum / paired_nominal : std::nan("");
  return rep;
}

SimTrace run_forward(const Setup& setup) {
  MpcController ctrl(setup.forward, Variant::nominal, setup.K, std::nullopt);
  const int T = setup.episode_steps();
  return run_closed_loop(ctrl, Vec2::Zero(), std::vector<Vec2>(T, Vec2::Zero()), T);
}

}  // namespace walkmpc
