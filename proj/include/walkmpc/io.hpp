#pragma once

// CSV and JSON export of experiment results. Every CSV starts with a
// "# seed=..." comment line; numbers are written with 17 significant digits
// so that files are byte-identical for identical inputs.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "walkmpc/polytope.hpp"
#include "walkmpc/sim.hpp"

namespace walkmpc {

inline constexpr int kSchemaVersion = 1;

std::string format_double(double v);

void write_seed_header(std::ostream& os, std::uint64_t seed);

/// One column per report: state-violation count at each step.
void write_violations_csv(std::ostream& os, std::uint64_t seed, const std::vector<MonteCarloReport>& reports);

/// One row per (report, run): cost, failure flag, violations, max |c|.
void write_run_costs_csv(std::ostream& os, std::uint64_t seed, const std::vector<MonteCarloReport>& reports);

/// Step log: state, inputs, disturbance, mode, violations, cost, active set.
void write_trace_csv(std::ostream& os, std::uint64_t seed, const SimTrace& trace);

nlohmann::json report_summary(const MonteCarloReport& r);
nlohmann::json rpi_summary(const RpiReport& r);

/// Writes `j` (pretty-printed) to `path`; throws std::runtime_error on I/O failure.
void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace walkmpc
