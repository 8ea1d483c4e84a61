#include "walkmpc/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>

namespace walkmpc {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_seed_header(std::ostream& os, std::uint64_t seed) { os << "# seed=" << seed << '\n'; }

void write_violations_csv(std::ostream& os, std::uint64_t seed, const std::vector<MonteCarloReport>& reports) {
  write_seed_header(os, seed);
  os << "step";
  std::size_t len = 0;
  for (const auto& r : reports) {
    os << ',' << r.label;
    len = std::max(len, r.violation_count_per_step.size());
  }
  os << '\n';
  for (std::size_t t = 0; t < len; ++t) {
    os << t;
    for (const auto& r : reports) os << ',' << (t < r.violation_count_per_step.size() ? r.violation_count_per_step[t] : 0);
    os << '\n';
  }
}

void write_run_costs_csv(std::ostream& os, std::uint64_t seed, const std::vector<MonteCarloReport>& reports) {
  write_seed_header(os, seed);
  os << "variant,run,cost,failed,violations,max_abs_c\n";
  for (const auto& r : reports)
    for (int i = 0; i < r.runs; ++i)
      os << r.label << ',' << i << ',' << format_double(r.run_costs[i]) << ',' << int(r.run_failed[i]) << ','
         << r.run_violations[i] << ',' << format_double(r.run_max_abs_c[i]) << '\n';
}

void write_trace_csv(std::ostream& os, std::uint64_t seed, const SimTrace& tr) {
  write_seed_header(os, seed);
  os << "t,c,cdot,u,v,w_c,w_cdot,s_c,s_cdot,mode,violation_x,violation_u,stage_cost,predicted_cost,active_set\n";
  for (int t = 0; t < tr.steps(); ++t) {
    os << t << ',' << format_double(tr.x[t](0)) << ',' << format_double(tr.x[t](1)) << ','
       << format_double(tr.u[t]) << ',' << format_double(tr.v[t]) << ',' << format_double(tr.w[t](0)) << ','
       << format_double(tr.w[t](1)) << ',' << format_double(tr.s[t](0)) << ',' << format_double(tr.s[t](1)) << ','
       << (tr.mode[t] == Mode::mode1 ? 1 : 2) << ',' << tr.violations_x[t] << ',' << int(tr.violations_u[t]) << ','
       << format_double(tr.stage_cost[t]) << ',' << format_double(tr.predicted_cost[t]) << ','
       << tr.active_set_size[t] << '\n';
  }
  const int T = tr.steps();
  os << T << ',' << format_double(tr.x[T](0)) << ',' << format_double(tr.x[T](1)) << ",,,,,,,," << tr.violations_x[T]
     << ",,,,\n";
}

nlohmann::json report_summary(const MonteCarloReport& r) {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["label"] = r.label;
  j["variant"] = to_string(r.variant.variant);
  if (r.variant.variant == Variant::smpc) {
    j["beta_x"] = r.variant.beta_x;
    j["beta_u"] = r.variant.beta_u;
  }
  j["runs"] = r.runs;
  j["seed"] = r.seed;
  j["avg_cost"] = r.avg_cost;
  j["cost_ratio_vs_nominal"] = r.cost_ratio_vs_nominal;
  j["max_violations_per_step"] = r.max_violations_per_step();
  j["total_violations"] = r.total_violations();
  int input_total = 0;
  for (int c : r.input_violation_count_per_step) input_total += c;
  j["total_input_violations"] = input_total;
  j["fallback_activations"] = r.fallback_activations;
  j["failures"] = r.failures;
  return j;
}

nlohmann::json rpi_summary(const RpiReport& r) {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["starts"] = r.starts;
  j["vertex_starts"] = r.vertex_starts;
  j["steps"] = r.steps;
  j["violations"] = r.violations;
  j["max_excess"] = r.max_excess;
  j["seed"] = r.seed;
  return j;
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace walkmpc
