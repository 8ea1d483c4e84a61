#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "walkmpc/config.hpp"
#include "walkmpc/errors.hpp"

using namespace walkmpc;
namespace fs = std::filesystem;

namespace {

ExperimentConfig parse_text(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is, "test.ini");
}

std::string error_of(const std::string& text) {
  try {
    parse_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("walkmpc_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(WALKMPC_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("shipped defaults parse to the walking scenario") {
    const ExperimentConfig c = load_config(WALKMPC_DEFAULT_CONFIG);
    CHECK(c.scenario.lipm.com_height == 0.88);
    CHECK(c.scenario.lipm.gravity == 9.81);
    CHECK(c.scenario.lipm.sampling_dt == 0.1);
    CHECK(c.scenario.disturbance.sigma(0) == 0.0008);
    CHECK(c.scenario.disturbance.support.upper(1) == 0.016);
    CHECK(c.scenario.horizon == 16);
    REQUIRE(c.scenario.custom_gain.has_value());
    CHECK((*c.scenario.custom_gain)(0) == 3.386);
    CHECK(c.runs == 200);
    CHECK(c.beta_sweep.size() == 3);
    CHECK(c.variants.size() == 3);
  }

  TEST_CASE("config echo re-parses to the same configuration") {
    ExperimentConfig c = load_config(WALKMPC_DEFAULT_CONFIG);
    c.scenario.custom_gain.reset();
    c.scenario.weights.gamma_p = 0.1 + 0.2;  // not exactly representable in short decimal
    c.seed = 18446744073709551615ull;
    c.variants = {Variant::smpc};
    c.beta_sweep.clear();
    c.scenario.disturbance_kind = DisturbanceKind::corner;
    c.scenario.corner_sign = Vec2(-1.0, 1.0);
    const std::string echo = config_to_string(c);
    const ExperimentConfig back = parse_text(echo);
    CHECK(config_to_string(back) == echo);
    CHECK_FALSE(back.scenario.custom_gain.has_value());
    CHECK(back.scenario.weights.gamma_p == c.scenario.weights.gamma_p);
    CHECK(back.seed == c.seed);
    CHECK(back.beta_sweep.empty());
    CHECK(back.scenario.corner_sign == c.scenario.corner_sign);

    const ExperimentConfig d = load_config(WALKMPC_DEFAULT_CONFIG);
    CHECK(config_to_string(parse_text(config_to_string(d))) == config_to_string(d));
  }

  TEST_CASE("variant list expands the sweep in a fixed order") {
    const ExperimentConfig c = load_config(WALKMPC_DEFAULT_CONFIG);
    const auto v = c.variant_configs();
    REQUIRE(v.size() == 6);
    CHECK(v[0].variant == Variant::nominal);
    CHECK(v[1].variant == Variant::rmpc);
    CHECK(v[2].label() == "smpc_bx0.05_bu0.5");
    CHECK(v[3].label() == "smpc_bx0.5_bu0.5");
    CHECK(v[5].label() == "smpc_bx1e-05_bu0.5");
  }

  TEST_CASE("config errors name the line") {
    CHECK(error_of("[model]\ncom_height = 0.9\nmass = 3\n").find("test.ini:3:") != std::string::npos);
    CHECK(error_of("[model]\ndt = 0.1\ndt = 0.2\n").find("test.ini:3:") != std::string::npos);
    CHECK(error_of("[robot]\n").find("test.ini:1:") != std::string::npos);
    CHECK(error_of("dt = 0.1\n").find("test.ini:1:") != std::string::npos);
    CHECK(error_of("[model]\n\ndt =\n").find("test.ini:3:") != std::string::npos);
    CHECK(error_of("[model]\ndt = fast\n").find("test.ini:2:") != std::string::npos);
    CHECK(error_of("[controller]\nvariants = nominal, tube\n").find("test.ini:2:") != std::string::npos);
    CHECK(error_of("[controller]\nbeta_x = 0.7\n") != "");
    CHECK(error_of("[experiment]\nruns = 0\n") != "");
    CHECK(error_of("# comment\n; other\n[model]\ndt = 0.1  # trailing\n") == "");
    CHECK_THROWS_AS(load_config("/nonexistent/walkmpc.ini"), ConfigError);
  }

  TEST_CASE("exit codes") {
    const fs::path dir = scratch_dir("exit");
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("") == 1);
    CHECK(run_cli("frobnicate") == 1);
    CHECK(run_cli("backoffs --config /nonexistent.ini") == 1);

    const fs::path bad = dir / "bad.ini";
    std::ofstream(bad) << "[model]\nheight = 1\n";
    CHECK(run_cli("backoffs --config " + bad.string() + " --out " + (dir / "o1").string()) == 1);

    const fs::path deadbeat = dir / "deadbeat.ini";
    std::ofstream(deadbeat) << "[controller]\ngain = deadbeat\nvariants = rmpc\nbeta_sweep = none\n"
                            << "[experiment]\nruns = 2\n";
    CHECK(run_cli("simulate --config " + deadbeat.string() + " --out " + (dir / "o2").string()) == 2);

    CHECK(run_cli("backoffs --config " + std::string(WALKMPC_DEFAULT_CONFIG) + " --out " + (dir / "o3").string()) == 0);
    CHECK(fs::exists(dir / "o3" / "backoffs.csv"));
    CHECK(fs::exists(dir / "o3" / "config.ini"));
    fs::remove_all(dir);
  }

  TEST_CASE("flags override the file and are echoed") {
    const fs::path dir = scratch_dir("flags");
    CHECK(run_cli("simulate --config " + std::string(WALKMPC_DEFAULT_CONFIG) +
                  " --runs 2 --seed 7 --variant smpc --beta-x 0.01 --out " + (dir / "o").string()) == 0);
    const ExperimentConfig echo = load_config((dir / "o" / "config.ini").string());
    CHECK(echo.runs == 2);
    CHECK(echo.seed == 7);
    CHECK(echo.beta_x == 0.01);
    REQUIRE(echo.variants.size() == 1);
    CHECK(echo.variants[0] == Variant::smpc);
    const std::string viol = slurp(dir / "o" / "violations.csv");
    CHECK(viol.rfind("# seed=7\n", 0) == 0);
    CHECK(viol.find("smpc_bx0.01_bu0.5") != std::string::npos);
    const std::string summary = slurp(dir / "o" / "summary.json");
    CHECK(summary.find("\"schema_version\": 1") != std::string::npos);
    fs::remove_all(dir);
  }
}
