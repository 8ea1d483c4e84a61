#pragma once

// Experiment configuration: an INI-style file with [sections] and
// `key = value` lines. Unknown sections or keys are errors reported with the
// offending line.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "walkmpc/sim.hpp"

namespace walkmpc {

struct MrpiSettings {
  int samples = 1000;       // randomized interior starts
  int steps = 50;
  double eps_coarse = 1e-3;  // second outer approximation for the nesting report
};

struct WorstCaseSettings {
  Eigen::Vector2d row{1.0, 0.0};
  double beta = 0.05;
  int steps = 15;
  int trials_1d = 10000;
  int trials_nd = 1000;
  int dim_nd = 2;
  int mono_steps = 30;
  double rho_cap = 0.99;
};

struct ExperimentConfig {
  Scenario scenario;
  std::vector<Variant> variants{Variant::nominal, Variant::rmpc, Variant::smpc};
  double beta_x = 0.05;
  double beta_u = 0.5;
  std::vector<double> beta_sweep;  // additional SMPC runs, one per beta_x
  int runs = 200;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out_dir = "out";
  bool write_traces = false;
  MrpiSettings mrpi;
  WorstCaseSettings worstcase;

  /// SMPC/RMPC/nominal variants to simulate, sweep included, in a fixed order.
  std::vector<VariantConfig> variant_configs() const;
  /// Throws ConfigError on any invalid setting.
  void validate() const;
};

/// `source` names the input in error messages ("path:line: ...").
ExperimentConfig parse_config(std::istream& is, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);

/// Canonical echo; parse_config(write_config(c)) reproduces c exactly.
void write_config(std::ostream& os, const ExperimentConfig& cfg);
std::string config_to_string(const ExperimentConfig& cfg);

}  // namespace walkmpc
