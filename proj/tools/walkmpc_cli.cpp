// walkmpc: offline design, simulation and analysis experiments for robust
// and stochastic walking MPC.
//
// Exit codes: 0 success, 1 configuration error, 2 experiment failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "walkmpc/config.hpp"
#include "walkmpc/errors.hpp"
#include "walkmpc/io.hpp"
#include "walkmpc/model.hpp"
#include "walkmpc/polytope.hpp"
#include "walkmpc/rng.hpp"
#include "walkmpc/sim.hpp"
#include "walkmpc/worstcase.hpp"

namespace fs = std::filesystem;
using namespace walkmpc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitFailure = 2;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::optional<std::string> out;
  std::optional<std::string> variant;
  std::optional<double> beta_x;
  std::optional<double> beta_u;
  std::optional<int> threads;
};

ExperimentConfig resolve_config(const Overrides& o) {
  ExperimentConfig cfg;
  if (!o.config.empty()) cfg = load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.runs) cfg.runs = *o.runs;
  if (o.out) cfg.out_dir = *o.out;
  if (o.threads) cfg.threads = *o.threads;
  if (o.beta_x) cfg.beta_x = *o.beta_x;
  if (o.beta_u) cfg.beta_u = *o.beta_u;
  if (o.variant) {
    try {
      cfg.variants = {parse_variant(*o.variant)};
    } catch (const DomainError& e) {
      throw ConfigError(std::string("--variant: ") + e.what());
    }
    cfg.beta_sweep.clear();
  }
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const ExperimentConfig& cfg, const std::string& name) {
  std::ofstream os(fs::path(cfg.out_dir) / name);
  if (!os) throw std::runtime_error("cannot write '" + (fs::path(cfg.out_dir) / name).string() + "'");
  return os;
}

std::string path_in(const ExperimentConfig& cfg, const std::string& name) {
  return (fs::path(cfg.out_dir) / name).string();
}

nlohmann::json row_json(const RowVec2& k) { return {k(0), k(1)}; }

void write_vertices(const ExperimentConfig& cfg, const std::string& name, const Zonotope& z) {
  auto os = open_out(cfg, name);
  write_seed_header(os, cfg.seed);
  os << "c,cdot\n";
  for (const auto& v : vertices_2d(z)) os << format_double(v(0)) << ',' << format_double(v(1)) << '\n';
}

nlohmann::json tube_summary(const Zonotope& omega, const RowVec2& K) {
  const Eigen::VectorXd e1 = Eigen::Vector2d(1.0, 0.0);
  const Eigen::VectorXd k = K.transpose();
  return {{"omega_c", support(omega, e1)},
          {"k_omega", {-support(omega, -k), support(omega, k)}},
          {"vertices", vertices_2d(omega).size()}};
}

int cmd_mrpi(const ExperimentConfig& cfg) {
  const Setup setup = prepare(cfg.scenario);
  const Box& W = cfg.scenario.disturbance.support;
  bool ok = true;

  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = cfg.seed;

  // Dead-beat design: nilpotent closed loop, exact two-term mRPI set.
  const GainVector db = deadbeat_gain(setup.model);
  const ClosedLoop db_cl = closed_loop(setup.model, db);
  const Mat2 sq = db_cl.A_K * db_cl.A_K;
  const Zonotope db_omega = mrpi_exact_nilpotent(db_cl.A_K, W);
  const RpiReport db_rpi = rpi_check(db_cl.A_K, W, db_omega, cfg.mrpi.samples, cfg.seed, cfg.mrpi.steps);
  {
    auto os = open_out(cfg, "omega_deadbeat.txt");
    write_zonotope(os, db_omega);
  }
  write_vertices(cfg, "omega_deadbeat_vertices.csv", db_omega);
  nlohmann::json jd = tube_summary(db_omega, db.K);
  jd["gain"] = row_json(db.K);
  jd["closed_loop_square_inf_norm"] = sq.cwiseAbs().rowwise().sum().maxCoeff();
  jd["invariance"] = rpi_summary(db_rpi);
  j["deadbeat"] = jd;
  ok = ok && db_rpi.violations == 0;

  // Configured gain: the tube used by the controllers.
  const Eigen::MatrixXd A_K = setup.closed_loop.A_K;
  const MrpiApproximation fine = mrpi_outer_eps(A_K, W, cfg.scenario.mrpi_eps);
  const MrpiApproximation coarse = mrpi_outer_eps(A_K, W, cfg.mrpi.eps_coarse);
  {
    auto os = open_out(cfg, "omega.txt");
    write_zonotope(os, setup.omega);
    auto hs = open_out(cfg, "omega_hrep.txt");
    write_hpolytope(hs, to_hpolytope(setup.omega));
    auto cs = open_out(cfg, "omega_outer_coarse.txt");
    write_zonotope(cs, coarse.set);
  }
  write_vertices(cfg, "omega_vertices.csv", setup.omega);
  bool nested = true;
  for (const auto& v : vertices_2d(fine.set)) nested = nested && contains(coarse.set, v, 1e-12);
  const RpiReport rpi = rpi_check(A_K, W, setup.omega, cfg.mrpi.samples, cfg.seed, cfg.mrpi.steps);
  nlohmann::json jc = tube_summary(setup.omega, setup.K.K);
  jc["gain"] = row_json(setup.K.K);
  jc["spectral_radius"] = setup.closed_loop.spectral_radius();
  jc["exact"] = setup.omega_exact;
  jc["outer_eps"] = cfg.scenario.mrpi_eps;
  jc["outer_terms"] = fine.s;
  jc["outer_alpha"] = fine.alpha;
  jc["coarse_eps"] = cfg.mrpi.eps_coarse;
  jc["coarse_terms"] = coarse.s;
  jc["coarse_alpha"] = coarse.alpha;
  jc["fine_inside_coarse"] = nested;
  jc["invariance"] = rpi_summary(rpi);
  j["configured"] = jc;
  j["gain_reference"] = {kReferenceGain[0], kReferenceGain[1]};
  ok = ok && nested && rpi.violations == 0;
  write_json_file(path_in(cfg, "mrpi.json"), j);

  const Eigen::VectorXd e1 = Eigen::Vector2d(1.0, 0.0);
  std::printf("dead-beat K = [%.8f, %.8f] (reference [%.3f, %.3f]), ||A_K^2||_inf = %.3g\n", db.K(0), db.K(1),
              kReferenceGain[0], kReferenceGain[1], sq.cwiseAbs().rowwise().sum().maxCoeff());
  std::printf("dead-beat Omega: %zu vertices, Omega_c = %.8f, invariance violations %d\n",
              vertices_2d(db_omega).size(), support(db_omega, e1), db_rpi.violations);
  const Eigen::VectorXd k = setup.K.K.transpose();
  std::printf("configured K = [%.6g, %.6g]: Omega_c = %.8f, K Omega = [%.8f, %.8f], invariance violations %d\n",
              setup.K.K(0), setup.K.K(1), support(setup.omega, e1), -support(setup.omega, -k),
              support(setup.omega, k), rpi.violations);
  return ok ? kExitOk : kExitFailure;
}

int cmd_backoffs(const ExperimentConfig& cfg) {
  const Setup setup = prepare(cfg.scenario);
  const VariantConfig sv{Variant::smpc, cfg.beta_x, cfg.beta_u};
  const BackoffSchedule smpc = *variant_backoffs(setup, sv);
  const BackoffSchedule rmpc = *variant_backoffs(setup, VariantConfig{Variant::rmpc});
  const int N = cfg.scenario.horizon;

  auto os = open_out(cfg, "backoffs.csv");
  write_seed_header(os, cfg.seed);
  os << "step,smpc_x_upper,smpc_x_lower,smpc_u_upper,smpc_u_lower,rmpc_x_upper,rmpc_x_lower,rmpc_u_upper,"
        "rmpc_u_lower\n";
  for (int i = 0; i <= N; ++i) {
    os << i;
    for (const BackoffSchedule* b : {&smpc, &rmpc}) {
      os << ',' << format_double(b->eta_x[0][i]) << ',' << format_double(b->eta_x[1][i]);
      if (i < N)
        os << ',' << format_double(b->eta_u[0][i]) << ',' << format_double(b->eta_u[1][i]);
      else
        os << ",,";
    }
    os << '\n';
  }

  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = cfg.seed;
  j["beta_x"] = cfg.beta_x;
  j["beta_u"] = cfg.beta_u;
  bool ok = true;
  for (const auto& [name, sched] : {std::pair{"smpc", &smpc}, std::pair{"rmpc", &rmpc}}) {
    const TighteningCheck chk = check_tightening(setup.lateral, *sched);
    j[name] = {{"state_empty", chk.state_empty}, {"state_step", chk.state_step},
               {"input_empty", chk.input_empty}, {"input_step", chk.input_step}};
    if (!chk.ok()) {
      std::fprintf(stderr, "%s: tightened constraint set is empty\n", name);
      ok = false;
    }
  }
  write_json_file(path_in(cfg, "backoffs.json"), j);
  std::printf("back-off schedules written for N = %d (beta_x = %g, beta_u = %g)\n", N, cfg.beta_x, cfg.beta_u);
  return ok ? kExitOk : kExitFailure;
}

int cmd_simulate(const ExperimentConfig& cfg) {
  const Setup setup = prepare(cfg.scenario);
  const MonteCarloReport nominal =
      monte_carlo(setup, VariantConfig{Variant::nominal}, cfg.runs, cfg.seed, cfg.threads);
  std::vector<MonteCarloReport> reports{nominal};
  for (const VariantConfig& v : cfg.variant_configs()) {
    if (v.variant == Variant::nominal) continue;
    reports.push_back(monte_carlo(setup, v, cfg.runs, cfg.seed, cfg.threads, &nominal));
  }

  {
    auto os = open_out(cfg, "violations.csv");
    write_violations_csv(os, cfg.seed, reports);
    auto cs = open_out(cfg, "costs.csv");
    write_run_costs_csv(cs, cfg.seed, reports);
    auto fs_ = open_out(cfg, "forward_trace.csv");
    write_trace_csv(fs_, cfg.seed, run_forward(setup));
  }
  if (cfg.write_traces) {
    fs::create_directories(fs::path(cfg.out_dir) / "traces");
    for (const MonteCarloReport& r : reports) {
      for (int run = 0; run < cfg.runs; ++run) {
        MpcController ctrl = make_controller(setup, r.variant);
        const auto w = disturbance_sequence(setup, derive_seed(cfg.seed, static_cast<std::uint64_t>(run)));
        auto os = open_out(cfg, "traces/" + r.label + "_run" + std::to_string(run) + ".csv");
        write_trace_csv(os, cfg.seed, run_closed_loop(ctrl, Vec2::Zero(), w, setup.episode_steps()));
      }
    }
  }

  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = cfg.seed;
  j["runs"] = cfg.runs;
  j["episode_steps"] = setup.episode_steps();
  j["disturbance_onset_step"] = setup.disturbance_onset;
  j["disturbance"] = to_string(cfg.scenario.disturbance_kind);
  j["weights"] = {{"alpha", cfg.scenario.weights.alpha_v},
                  {"beta", cfg.scenario.weights.beta_c},
                  {"gamma", cfg.scenario.weights.gamma_p}};
  j["reports"] = nlohmann::json::array();
  int failures = 0;
  for (const MonteCarloReport& r : reports) {
    j["reports"].push_back(report_summary(r));
    failures += r.failures;
    std::printf("%-24s violations max/step %3d total %5d  cost ratio %.6f  fallbacks %d  failures %d\n",
                r.label.c_str(), r.max_violations_per_step(), r.total_violations(), r.cost_ratio_vs_nominal,
                r.fallback_activations, r.failures);
  }
  write_json_file(path_in(cfg, "summary.json"), j);
  if (failures > 0) std::fprintf(stderr, "%d episodes aborted on controller failure\n", failures);
  return failures == 0 ? kExitOk : kExitFailure;
}

int cmd_worstcase(const ExperimentConfig& cfg) {
  const Setup setup = prepare(cfg.scenario);
  const WorstCaseSettings& wc = cfg.worstcase;
  const SensitivityRows rows = sensitivity_rows(wc.row, setup.closed_loop.A_K, wc.steps);
  const WorstCaseReport rep = analyze_worst_case(rows, cfg.scenario.disturbance, wc.beta);
  {
    auto os = open_out(cfg, "worstcase.csv");
    write_seed_header(os, cfg.seed);
    write_worstcase_csv(os, rep);
  }
  const Monotonicity1dReport m1 = monotonicity_experiment_1d(wc.trials_1d, cfg.seed, wc.mono_steps);
  const MonotonicityNdReport mn = monotonicity_experiment_nd(wc.dim_nd, wc.trials_nd, cfg.seed,
                                                             cfg.scenario.disturbance.sigma, wc.mono_steps,
                                                             wc.rho_cap);
  {
    auto os = open_out(cfg, "monotonicity_nd.csv");
    write_seed_header(os, cfg.seed);
    write_nd_trials_csv(os, mn);
  }
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = cfg.seed;
  j["row"] = {wc.row(0), wc.row(1)};
  j["beta"] = wc.beta;
  j["one_dimensional"] = {{"trials", m1.trials},
                          {"steps", m1.steps},
                          {"strict_decreases", m1.strict_decreases},
                          {"high_precision_decreases", m1.high_precision_decreases},
                          {"counterexamples", m1.counterexamples.size()}};
  j["n_dimensional"] = {{"n", mn.n},
                        {"trials", mn.trials},
                        {"steps", mn.steps},
                        {"rho_cap", mn.rho_cap},
                        {"violating", mn.violating},
                        {"violation_fraction", mn.violation_fraction()}};
  write_json_file(path_in(cfg, "worstcase.json"), j);
  std::printf("alpha_0 = %.6f, alpha_%d = %.6f\n", rep.alpha.front(), wc.steps, rep.alpha.back());
  std::printf("1D monotonicity: %d trials, %zu counterexamples\n", m1.trials, m1.counterexamples.size());
  std::printf("%dD monotonicity: %d trials, violation fraction %.4f\n", mn.n, mn.trials, mn.violation_fraction());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust and stochastic MPC experiments for LIPM walking"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides o;
  app.add_option("--config", o.config, "experiment configuration file");
  app.add_option("--seed", o.seed, "top-level random seed");
  app.add_option("--runs", o.runs, "Monte-Carlo runs");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--variant", o.variant, "nominal | rmpc | smpc");
  app.add_option("--beta-x", o.beta_x, "state chance-constraint violation probability");
  app.add_option("--beta-u", o.beta_u, "control chance-constraint violation probability");
  app.add_option("--threads", o.threads, "worker threads for Monte-Carlo runs");

  int (*command)(const ExperimentConfig&) = nullptr;
  app.add_subcommand("mrpi", "mRPI set, its approximations and an invariance check")
      ->callback([&] { command = cmd_mrpi; });
  app.add_subcommand("backoffs", "SMPC and RMPC constraint back-off schedules")
      ->callback([&] { command = cmd_backoffs; });
  app.add_subcommand("simulate", "Monte-Carlo closed-loop study on paired seeds")
      ->callback([&] { command = cmd_simulate; });
  app.add_subcommand("worstcase", "equivalent worst-case disturbance sets and monotonicity experiments")
      ->callback([&] { command = cmd_worstcase; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  ExperimentConfig cfg;
  try {
    cfg = resolve_config(o);
    fs::create_directories(cfg.out_dir);
    std::ofstream echo(fs::path(cfg.out_dir) / "config.ini");
    write_config(echo, cfg);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }

  try {
    return command(cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "experiment failed: %s\n", e.what());
    return kExitFailure;
  }
}
