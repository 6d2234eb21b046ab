#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "mfl/experiments.hpp"
#include "mfl/parallel.hpp"

using namespace mfl;
namespace fs = std::filesystem;

namespace {

std::string write_temp_config(const std::string& name, const std::string& body) {
  const std::string path = name;
  std::ofstream out(path);
  out << body;
  return path;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kSmallQuadratic = R"({
  "kind": "quadratic",
  "output_dir": "cli_test_out",
  "seed": 11,
  "n_particles": 400,
  "run": {"sigma": 0.4, "dt": 0.01, "n_steps": 200, "record_every": 50},
  "monitors": ["moment_q2", "free_energy", "residual"],
  "quadratic": {"stiffness": [1.0], "coupling": [[0.0]]}
})";

}  // namespace

TEST_CASE("valid config parses and validates with a cost estimate") {
  const auto path = write_temp_config("cli_ok.json", kSmallQuadratic);
  const auto cfg = parse_config(path);
  const auto report = validate(cfg);
  CHECK(report.ok);
  CHECK(report.kind == "quadratic");
  CHECK(report.state_bytes > 0);
  CHECK(report.drift_evals_per_step == 400);
  fs::remove(path);
}

TEST_CASE("schema violations are named precisely") {
  const auto bad_dt = write_temp_config("cli_bad_dt.json", R"({
    "kind": "quadratic",
    "run": {"sigma": 0.4, "dt": -0.01, "n_steps": 10},
    "quadratic": {"stiffness": [1.0]}
  })");
  CHECK_THROWS_WITH_AS(parse_config(bad_dt), doctest::Contains("run.dt"), Error);
  fs::remove(bad_dt);

  CHECK_THROWS_WITH_AS(parse_config("no_such_config.json"),
                       doctest::Contains("ConfigParseError"), Error);

  const auto two_kinds = write_temp_config("cli_two_kinds.json", R"({
    "kind": "quadratic",
    "quadratic": {"stiffness": [1.0]},
    "gan": {}
  })");
  CHECK_THROWS_AS(parse_config(two_kinds), Error);
  fs::remove(two_kinds);
}

TEST_CASE("dynamic game with a mismatched grid fails validation") {
  const auto path = write_temp_config("cli_dyn_bad.json", R"({
    "kind": "dynamic",
    "environment": {"type": "points", "points": [[0.0], [0.5], [1.0]],
                    "weights": [0.3333333333333333, 0.3333333333333333, 0.3333333333333334]},
    "players": [{"dim": 1}],
    "dynamic": {"horizon": 1.0, "theta_dim": 1, "theta0": [0.0]}
  })");
  const auto cfg = parse_config(path);
  CHECK_THROWS_WITH_AS(validate(cfg), doctest::Contains("EnvironmentMismatch"), Error);
  fs::remove(path);
}

TEST_CASE("run_experiment writes artifacts and refuses to overwrite") {
  const auto path = write_temp_config("cli_run.json", kSmallQuadratic);
  fs::remove_all("cli_test_out");
  auto cfg = parse_config(path);
  run_experiment(cfg);
  CHECK(fs::exists("cli_test_out/diagnostics.csv"));
  CHECK(fs::exists("cli_test_out/summary.json"));
  CHECK(fs::exists("cli_test_out/config_echo.json"));
  CHECK(fs::exists("cli_test_out/state_p0_y0.csv"));

  CHECK_THROWS_WITH_AS(run_experiment(cfg), doctest::Contains("overwrite"), Error);
  auto cfg2 = parse_config(path, std::nullopt, std::nullopt, true);
  run_experiment(cfg2);  // overwrite allowed

  fs::remove_all("cli_test_out");
  fs::remove(path);
}

TEST_CASE("same seed and any thread count give identical bytes") {
  const auto path = write_temp_config("cli_det.json", kSmallQuadratic);

  fs::remove_all("cli_test_out");
  set_num_threads(2);
  run_experiment(parse_config(path));
  const auto diag_a = slurp("cli_test_out/diagnostics.csv");
  const auto sum_a = slurp("cli_test_out/summary.json");
  const auto state_a = slurp("cli_test_out/state_p0_y0.csv");

  fs::remove_all("cli_test_out");
  set_num_threads(1);
  run_experiment(parse_config(path));
  set_num_threads(2);
  CHECK(slurp("cli_test_out/diagnostics.csv") == diag_a);
  CHECK(slurp("cli_test_out/summary.json") == sum_a);
  CHECK(slurp("cli_test_out/state_p0_y0.csv") == state_a);

  // A different seed changes the bytes.
  fs::remove_all("cli_test_out");
  run_experiment(parse_config(path, 12345));
  CHECK(slurp("cli_test_out/diagnostics.csv") != diag_a);

  fs::remove_all("cli_test_out");
  fs::remove(path);
}

TEST_CASE("contraction experiment emits the decay report") {
  const auto path = write_temp_config("cli_contraction.json", R"({
    "kind": "contraction",
    "output_dir": "cli_contraction_out",
    "seed": 4,
    "n_particles": 256,
    "run": {"sigma": 0.4, "dt": 0.01, "n_steps": 100, "record_every": 20},
    "contraction": {
      "kappa": {"family": "constant", "value": -1.0},
      "gamma": 0.0,
      "grid": {"n_points": 512},
      "game": {"stiffness": [1.0], "coupling": [[0.0]]},
      "init_a": {"type": "gaussian", "mean": -1.0, "std": 0.5},
      "init_b": {"type": "gaussian", "mean": 1.0, "std": 0.5}
    }
  })");
  fs::remove_all("cli_contraction_out");
  run_experiment(parse_config(path));
  CHECK(fs::exists("cli_contraction_out/decay.csv"));
  CHECK(fs::exists("cli_contraction_out/constants_profile.csv"));
  const auto summary = slurp("cli_contraction_out/summary.json");
  CHECK(summary.find("\"rate_fitted\"") != std::string::npos);
  CHECK(summary.find("\"contractive\": true") != std::string::npos);
  fs::remove_all("cli_contraction_out");
  fs::remove(path);
}

TEST_CASE("dynamic experiment dumps theta and adjoint paths") {
  const auto path = write_temp_config("cli_dyn_run.json", R"({
    "kind": "dynamic",
    "output_dir": "cli_dyn_out",
    "seed": 6,
    "n_particles": 64,
    "environment": {"type": "uniform_grid", "lo": 0.0, "hi": 1.0, "n": 10},
    "players": [{"dim": 1}],
    "run": {"sigma": 0.4, "dt": 0.01, "n_steps": 20, "record_every": 10},
    "monitors": ["moment_q2"],
    "dynamic": {
      "horizon": 1.0, "theta_dim": 1, "theta0": [0.0], "dump_paths": true,
      "lq": {"b_x": [[1.0]], "q_x": [[1.0]], "g_term": [[1.0]]}
    }
  })");
  fs::remove_all("cli_dyn_out");
  run_experiment(parse_config(path));
  CHECK(fs::exists("cli_dyn_out/paths_p0.csv"));
  CHECK(fs::exists("cli_dyn_out/diagnostics.csv"));
  const auto paths = slurp("cli_dyn_out/paths_p0.csv");
  CHECK(paths.rfind("y,theta0,p0", 0) == 0);
  fs::remove_all("cli_dyn_out");
  fs::remove(path);
}

TEST_CASE("bundled configs parse and validate") {
  for (const char* name :
       {"../configs/ou_anchor.json", "../configs/gan_fig1.json",
        "../configs/contraction_ou.json", "../configs/dynamic_lq.json"}) {
    if (!fs::exists(name)) continue;  // run from the build tree only
    const auto cfg = parse_config(name);
    const auto report = validate(cfg);
    CHECK(report.ok);
  }
}
