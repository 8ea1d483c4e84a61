#include "walkmpc/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "walkmpc/errors.hpp"

namespace walkmpc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
    throw ConfigError("expected a finite number, got '" + s + "'");
  return v;
}

template <typename Int>
Int to_int(const std::string& s) {
  Int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("expected an integer, got '" + s + "'");
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("empty list element in '" + s + "'");
    out.push_back(item);
  }
  return out;
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename Ref>
Field number(std::string sec, std::string key, Ref ref) {
  return {std::move(sec), std::move(key),
          [ref](ExperimentConfig& c, const std::string& v) { ref(c) = to_double(v); },
          [ref](const ExperimentConfig& c) { return fmt(ref(c)); }};
}

template <typename Int, typename Ref>
Field integer(std::string sec, std::string key, Ref ref) {
  return {std::move(sec), std::move(key),
          [ref](ExperimentConfig& c, const std::string& v) { ref(c) = to_int<Int>(v); },
          [ref](const ExperimentConfig& c) { return std::to_string(ref(c)); }};
}

const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> table = {
      number("model", "com_height", [](auto& c) -> auto& { return c.scenario.lipm.com_height; }),
      number("model", "gravity", [](auto& c) -> auto& { return c.scenario.lipm.gravity; }),
      number("model", "dt", [](auto& c) -> auto& { return c.scenario.lipm.sampling_dt; }),

      number("disturbance", "sigma_c", [](auto& c) -> auto& { return c.scenario.disturbance.sigma(0); }),
      number("disturbance", "sigma_cdot", [](auto& c) -> auto& { return c.scenario.disturbance.sigma(1); }),
      {"disturbance", "w_c",
       [](C& c, const std::string& v) {
         const double w = to_double(v);
         c.scenario.disturbance.support.lower(0) = -w;
         c.scenario.disturbance.support.upper(0) = w;
       },
       [](const C& c) { return fmt(c.scenario.disturbance.support.upper(0)); }},
      {"disturbance", "w_cdot",
       [](C& c, const std::string& v) {
         const double w = to_double(v);
         c.scenario.disturbance.support.lower(1) = -w;
         c.scenario.disturbance.support.upper(1) = w;
       },
       [](const C& c) { return fmt(c.scenario.disturbance.support.upper(1)); }},
      {"disturbance", "kind",
       [](C& c, const std::string& v) {
         try {
           c.scenario.disturbance_kind = parse_disturbance_kind(v);
         } catch (const DomainError& e) {
           throw ConfigError(e.what());
         }
       },
       [](const C& c) { return std::string(to_string(c.scenario.disturbance_kind)); }},
      integer<int>("disturbance", "onset_footstep", [](auto& c) -> auto& { return c.scenario.disturbance_onset_footstep; }),
      number("disturbance", "corner_sign_c", [](auto& c) -> auto& { return c.scenario.corner_sign(0); }),
      number("disturbance", "corner_sign_cdot", [](auto& c) -> auto& { return c.scenario.corner_sign(1); }),

      integer<int>("controller", "horizon", [](auto& c) -> auto& { return c.scenario.horizon; }),
      number("controller", "alpha", [](auto& c) -> auto& { return c.scenario.weights.alpha_v; }),
      number("controller", "beta", [](auto& c) -> auto& { return c.scenario.weights.beta_c; }),
      number("controller", "gamma", [](auto& c) -> auto& { return c.scenario.weights.gamma_p; }),
      {"controller", "gain",
       [](C& c, const std::string& v) {
         if (v == "deadbeat") {
           c.scenario.custom_gain.reset();
         } else {
           const auto parts = split_list(v);
           if (parts.size() != 2) throw ConfigError("gain must be 'deadbeat' or two numbers 'k_c, k_cdot'");
           c.scenario.custom_gain = RowVec2(to_double(parts[0]), to_double(parts[1]));
         }
       },
       [](const C& c) {
         if (!c.scenario.custom_gain) return std::string("deadbeat");
         return fmt((*c.scenario.custom_gain)(0)) + ", " + fmt((*c.scenario.custom_gain)(1));
       }},
      number("controller", "mrpi_eps", [](auto& c) -> auto& { return c.scenario.mrpi_eps; }),
      {"controller", "variants",
       [](C& c, const std::string& v) {
         c.variants.clear();
         for (const auto& s : split_list(v)) {
           try {
             c.variants.push_back(parse_variant(s));
           } catch (const DomainError& e) {
             throw ConfigError(e.what());
           }
         }
       },
       [](const C& c) {
         std::string s;
         for (std::size_t i = 0; i < c.variants.size(); ++i) s += (i ? ", " : "") + std::string(to_string(c.variants[i]));
         return s;
       }},
      number("controller", "beta_x", [](auto& c) -> auto& { return c.beta_x; }),
      number("controller", "beta_u", [](auto& c) -> auto& { return c.beta_u; }),
      {"controller", "beta_sweep",
       [](C& c, const std::string& v) {
         c.beta_sweep.clear();
         if (v == "none") return;
         for (const auto& s : split_list(v)) c.beta_sweep.push_back(to_double(s));
       },
       [](const C& c) {
         if (c.beta_sweep.empty()) return std::string("none");
         std::string s;
         for (std::size_t i = 0; i < c.beta_sweep.size(); ++i) s += (i ? ", " : "") + fmt(c.beta_sweep[i]);
         return s;
       }},

      integer<int>("plan", "steps", [](auto& c) -> auto& { return c.scenario.plan.num_steps; }),
      integer<int>("plan", "in_place_steps", [](auto& c) -> auto& { return c.scenario.plan.in_place_steps; }),
      integer<int>("plan", "step_duration", [](auto& c) -> auto& { return c.scenario.plan.step_duration; }),
      integer<int>("plan", "initial_double_support",
                   [](auto& c) -> auto& { return c.scenario.plan.initial_double_support; }),
      integer<int>("plan", "padding", [](auto& c) -> auto& { return c.scenario.plan.padding; }),
      number("plan", "foot_offset_y", [](auto& c) -> auto& { return c.scenario.plan.foot_offset_y; }),
      number("plan", "step_length_x", [](auto& c) -> auto& { return c.scenario.plan.step_length_x; }),
      {"plan", "left_first", [](C& c, const std::string& v) { c.scenario.plan.left_first = to_bool(v); },
       [](const C& c) { return std::string(c.scenario.plan.left_first ? "true" : "false"); }},
      number("plan", "cop_x_min", [](auto& c) -> auto& { return c.scenario.plan.foot_cop_x.lower; }),
      number("plan", "cop_x_max", [](auto& c) -> auto& { return c.scenario.plan.foot_cop_x.upper; }),
      number("plan", "cop_y_min", [](auto& c) -> auto& { return c.scenario.plan.foot_cop_y.lower; }),
      number("plan", "cop_y_max", [](auto& c) -> auto& { return c.scenario.plan.foot_cop_y.upper; }),
      number("plan", "hallway_half_width", [](auto& c) -> auto& { return c.scenario.plan.hallway_half_width; }),

      integer<int>("experiment", "runs", [](auto& c) -> auto& { return c.runs; }),
      integer<std::uint64_t>("experiment", "seed", [](auto& c) -> auto& { return c.seed; }),
      integer<int>("experiment", "threads", [](auto& c) -> auto& { return c.threads; }),
      {"experiment", "out", [](C& c, const std::string& v) { c.out_dir = v; },
       [](const C& c) { return c.out_dir; }},
      {"experiment", "write_traces", [](C& c, const std::string& v) { c.write_traces = to_bool(v); },
       [](const C& c) { return std::string(c.write_traces ? "true" : "false"); }},

      integer<int>("mrpi", "samples", [](auto& c) -> auto& { return c.mrpi.samples; }),
      integer<int>("mrpi", "steps", [](auto& c) -> auto& { return c.mrpi.steps; }),
      number("mrpi", "eps_coarse", [](auto& c) -> auto& { return c.mrpi.eps_coarse; }),

      number("worstcase", "row_c", [](auto& c) -> auto& { return c.worstcase.row(0); }),
      number("worstcase", "row_cdot", [](auto& c) -> auto& { return c.worstcase.row(1); }),
      number("worstcase", "beta", [](auto& c) -> auto& { return c.worstcase.beta; }),
      integer<int>("worstcase", "steps", [](auto& c) -> auto& { return c.worstcase.steps; }),
      integer<int>("worstcase", "trials_1d", [](auto& c) -> auto& { return c.worstcase.trials_1d; }),
      integer<int>("worstcase", "trials_nd", [](auto& c) -> auto& { return c.worstcase.trials_nd; }),
      integer<int>("worstcase", "dim_nd", [](auto& c) -> auto& { return c.worstcase.dim_nd; }),
      integer<int>("worstcase", "mono_steps", [](auto& c) -> auto& { return c.worstcase.mono_steps; }),
      number("worstcase", "rho_cap", [](auto& c) -> auto& { return c.worstcase.rho_cap; }),
  };
  return table;
}

}  // namespace

std::vector<VariantConfig> ExperimentConfig::variant_configs() const {
  std::vector<VariantConfig> out;
  for (Variant v : variants) out.push_back({v, beta_x, beta_u});
  for (double b : beta_sweep) out.push_back({Variant::smpc, b, beta_u});
  return out;
}

void ExperimentConfig::validate() const {
  try {
    scenario.validate();
    if (variants.empty()) throw ConfigError("at least one controller variant is required");
    for (double b : beta_sweep) quantile_coefficient(b);
    quantile_coefficient(beta_x);
    quantile_coefficient(beta_u);
    if (runs < 1) throw ConfigError("runs must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (out_dir.empty()) throw ConfigError("output directory must not be empty");
    if (mrpi.samples < 0 || mrpi.steps < 1 || !(mrpi.eps_coarse > 0.0))
      throw ConfigError("invalid [mrpi] settings");
    quantile_coefficient(worstcase.beta);
    if (worstcase.row.isZero()) throw ConfigError("worst-case constraint row must be nonzero");
    if (worstcase.steps < 0 || worstcase.trials_1d < 0 || worstcase.trials_nd < 0 || worstcase.dim_nd < 1 ||
        worstcase.mono_steps < 1 || !(worstcase.rho_cap > 0.0 && worstcase.rho_cap < 1.0))
      throw ConfigError("invalid [worstcase] settings");
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig parse_config(std::istream& is, const std::string& source) {
  ExperimentConfig cfg;
  std::map<std::string, const Field*> index;
  std::set<std::string> sections;
  for (const Field& f : fields()) {
    index[f.section + "." + f.key] = &f;
    sections.insert(f.section);
  }
  std::set<std::string> seen;
  std::string section, line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) { throw ConfigError(source + ":" + std::to_string(lineno) + ": " + msg); };
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!sections.count(section)) fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected 'key = value'");
    if (section.empty()) fail("key outside of a section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string full = section + "." + key;
    const auto it = index.find(full);
    if (it == index.end()) fail("unknown key '" + key + "' in [" + section + "]");
    if (!seen.insert(full).second) fail("duplicate key '" + key + "'");
    if (value.empty()) fail("missing value for '" + key + "'");
    try {
      it->second->set(cfg, value);
    } catch (const ConfigError& e) {
      fail(key + ": " + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, path);
}

void write_config(std::ostream& os, const ExperimentConfig& cfg) {
  std::string section;
  for (const Field& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) os << '\n';
      section = f.section;
      os << '[' << section << "]\n";
    }
    os << f.key << " = " << f.get(cfg) << '\n';
  }
}

std::string config_to_string(const ExperimentConfig& cfg) {
  std::ostringstream os;
  write_config(os, cfg);
  return os.str();
}

}  // namespace walkmpc
