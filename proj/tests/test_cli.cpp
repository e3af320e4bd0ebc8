#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "approx.hpp"
#include "doctest.h"
#include "json.hpp"
#include "statbundle/cli.hpp"

using namespace statbundle;
using namespace statbundle::cli;
using nlohmann::json;

namespace {

const std::filesystem::path kWorkDir = "/tmp/statbundle_cli_tests";

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  std::filesystem::create_directories(kWorkDir);
  const std::filesystem::path path = kWorkDir / name;
  std::ofstream out(path);
  out << text;
  return path;
}

std::string config_error_message(const std::string& json_text) {
  try {
    parse_config(json_text);
  } catch (const std::invalid_argument& e) {
    return e.what();
  }
  return "";
}

struct CmdResult {
  int code = -1;
  std::string out;
  std::string err;
};

CmdResult run_binary(const std::string& args) {
  std::filesystem::create_directories(kWorkDir);
  const std::filesystem::path out_path = kWorkDir / "proc_out.txt";
  const std::filesystem::path err_path = kWorkDir / "proc_err.txt";
  const std::string cmd = std::string(STATBUNDLE_CLI_PATH) + " " + args + " >" +
                          out_path.string() + " 2>" + err_path.string();
  const int raw = std::system(cmd.c_str());
  CmdResult r;
  r.code = (raw != -1 && WIFEXITED(raw)) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

const char* kEntropyConfig = R"({
  "schema_version": 1,
  "system": {"kind": "entropy_gradient_flow"},
  "initial": {"probabilities": [0.5666666666666667, 0.26666666666666666, 0.16666666666666666]},
  "time": {"stop": 2.0, "samples": 21}
})";

}  // namespace

TEST_CASE("parse_config fills defaults") {
  const RunConfig cfg = parse_config(kEntropyConfig);
  CHECK(cfg.system.kind == SystemKind::entropy_gradient_flow);
  CHECK(cfg.t_start == 0.0);
  CHECK(cfg.t_end == 2.0);
  CHECK(cfg.sample_count == 21);
  CHECK(cfg.integrator.method == Method::adaptive_embedded_rk);
  CHECK(cfg.integrator.rtol == near(1e-10, 1e-12));
  CHECK(cfg.integrator.projection == Projection::none);
  CHECK(!cfg.csv_path);
  CHECK(cfg.compare_bound == near(1e-6, 1e-12));
  CHECK(cfg.system.potential.name == "none");
  // Probability input is rescaled to mean-one components.
  CHECK(cfg.q0[0] == near(1.7, 1e-14));
  CHECK(cfg.q0[1] == near(0.8, 1e-14));
  CHECK(cfg.q0[2] == near(0.5, 1e-14));
}

TEST_CASE("parse_config keeps mean-one input verbatim") {
  const RunConfig cfg = parse_config(R"({
    "system": {"kind": "quadratic_lagrangian"},
    "initial": {"probabilities": [1.5, 0.9, 0.6], "fiber": [-0.1, -0.4, 0.5]},
    "time": {"stop": 1.0}
  })");
  CHECK(cfg.q0[0] == 1.5);
  CHECK(cfg.q0[1] == 0.9);
  CHECK(cfg.q0[2] == 0.6);
  CHECK(cfg.sample_count == 101);
  REQUIRE(bool(cfg.fiber));
  CHECK((*cfg.fiber)[2] == 0.5);
}

TEST_CASE("damped systems start at the schedule origin by default") {
  const RunConfig cfg = parse_config(R"({
    "system": {"kind": "damped_kl_lagrangian", "schedule": {"p": 2.0, "C": 0.5, "t0": 0.1},
               "potential": {"kind": "negentropy"}},
    "initial": {"probabilities": [0.5, 0.3, 0.2]},
    "time": {"stop": 5.0}
  })");
  CHECK(cfg.t_start == near(0.1, 1e-15));
}

TEST_CASE("parse_config errors name the offending field") {
  CHECK(contains(config_error_message("{ not json"), "not valid JSON"));
  CHECK(contains(config_error_message(R"({"system": {"kind": "entropy_gradient_flow"},
    "initial": {"probabilities": [0.5, 0.5]}, "time": {}})"),
                 "time.stop"));
  CHECK(contains(config_error_message(R"({"initial": {"probabilities": [0.5, 0.5]},
    "time": {"stop": 1.0}})"),
                 "system"));
  CHECK(contains(config_error_message(R"({"system": {"kind": "no_such_kind"},
    "initial": {"probabilities": [0.5, 0.5]}, "time": {"stop": 1.0}})"),
                 "system.kind"));
  CHECK(contains(config_error_message(R"({"system": {"kind": "entropy_gradient_flow"},
    "initial": {"probabilities": [0.5, 0.5]}, "time": {"stop": 1.0}, "bogus": 1})"),
                 "bogus"));
  CHECK(contains(config_error_message(R"({"schema_version": 2,
    "system": {"kind": "entropy_gradient_flow"},
    "initial": {"probabilities": [0.5, 0.5]}, "time": {"stop": 1.0}})"),
                 "schema_version"));
  CHECK(contains(config_error_message(R"({"system": {"kind": "entropy_gradient_flow"},
    "initial": {"probabilities": [0.6, 0.6]}, "time": {"stop": 1.0}})"),
                 "initial.probabilities"));
  CHECK(contains(config_error_message(R"({"system": {"kind": "entropy_gradient_flow"},
    "initial": {"probabilities": [0.5, 0.5]}, "time": {"stop": 1.0},
    "integrator": {"method": "euler"}})"),
                 "integrator.method"));
  CHECK(contains(config_error_message(R"({"system": {"kind": "kl_lagrangian",
      "potential": {"kind": "linear", "coefficients": [1.0, 2.0]}},
    "initial": {"probabilities": [0.5, 0.3, 0.2]}, "time": {"stop": 1.0}})"),
                 "system.potential.coefficients"));
  CHECK(contains(config_error_message(R"({"system": {"kind": "entropy_gradient_flow"},
    "initial": {"probabilities": [0.5, 0.5], "fiber": [1.0, -1.0, 0.0]},
    "time": {"stop": 1.0}})"),
                 "initial.fiber"));
}

TEST_CASE("csv writing round-trips the stored states bit for bit") {
  SystemSpec spec;
  spec.kind = SystemKind::quadratic_lagrangian;
  const Flow flow = make_flow(spec);
  const PhasePoint start{Density(Vec{1.5, 0.9, 0.6}), Vec{-0.03, -0.33, 0.57}};
  const Trajectory traj = integrate(flow, pack_state(flow, start), 0.0, 1.0,
                                    uniform_times(0.0, 1.0, 11), IntegratorConfig{});
  REQUIRE(traj.termination == Termination::completed);

  std::ostringstream csv;
  write_csv(csv, flow, traj);
  std::istringstream back(csv.str());
  const CsvTable table = read_csv(back);

  REQUIRE(table.header.size() == 1 + 6 + 3);
  CHECK(table.header[0] == "t");
  CHECK(table.header[1] == "q_1");
  CHECK(table.header[4] == "aux_1");
  CHECK(table.header[7] == "H");
  REQUIRE(table.rows.size() == traj.states.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    CHECK(table.rows[r][0] == traj.times[r]);
    for (std::size_t i = 0; i < 6; ++i) CHECK(table.rows[r][1 + i] == traj.states[r][i]);
    REQUIRE(bool(traj.diagnostics[r].energy));
    CHECK(table.rows[r][7] == *traj.diagnostics[r].energy);
  }
}

TEST_CASE("summary report is valid JSON with the expected fields") {
  SystemSpec spec;
  spec.kind = SystemKind::entropy_gradient_flow;
  const Flow flow = make_flow(spec);
  const PhasePoint start{Density(Vec{1.7, 0.8, 0.5}), {}};
  const Trajectory traj = integrate(flow, pack_state(flow, start), 0.0, 2.0,
                                    uniform_times(0.0, 2.0, 21), IntegratorConfig{});
  std::ostringstream out;
  write_summary(out, flow, traj, 0.0, 2.0);
  const json j = json::parse(out.str());
  CHECK(j.at("schema_version") == 1);
  CHECK(j.at("termination") == "completed");
  CHECK(j.at("samples") == 21);
  CHECK(j.at("final_state").at("q").size() == 3);
  CHECK(j.at("final_state").at("probabilities").size() == 3);
  CHECK(j.at("max_mass_drift").get<double>() < 1e-8);
}

TEST_CASE("svg output is a self-contained drawing") {
  SystemSpec spec;
  spec.kind = SystemKind::entropy_gradient_flow;
  const Flow flow = make_flow(spec);
  const PhasePoint start{Density(Vec{1.7, 0.8, 0.5}), {}};
  const Trajectory traj = integrate(flow, pack_state(flow, start), 0.0, 2.0,
                                    uniform_times(0.0, 2.0, 21), IntegratorConfig{});
  std::ostringstream out;
  write_svg(out, flow, traj);
  const std::string svg = out.str();
  CHECK(contains(svg, "<svg"));
  CHECK(contains(svg, "polyline"));
  CHECK(contains(svg, "polygon"));  // ternary panel at n = 3
  CHECK(!contains(svg, "href"));    // no external references
  CHECK(contains(svg, "</svg>"));
}

TEST_CASE("cmd_simulate rejects state fields the system does not use") {
  const auto path = write_temp("bad_fiber.json", R"({
    "system": {"kind": "entropy_gradient_flow"},
    "initial": {"probabilities": [0.5, 0.3, 0.2], "fiber": [0.1, -0.1, -0.1]},
    "time": {"stop": 1.0}
  })");
  std::ostringstream out, err;
  CHECK(cmd_simulate(path.string(), out, err) == kExitConfig);
  CHECK(contains(err.str(), "initial.fiber"));
}

TEST_CASE("cmd_simulate rejects an off-center start velocity") {
  const auto path = write_temp("offcenter.json", R"({
    "system": {"kind": "quadratic_lagrangian"},
    "initial": {"probabilities": [0.5, 0.3, 0.2], "fiber": [0.5, 0.5, 0.5]},
    "time": {"stop": 1.0}
  })");
  std::ostringstream out, err;
  CHECK(cmd_simulate(path.string(), out, err) == kExitConfig);
  CHECK(contains(err.str(), "initial.fiber"));
  CHECK(contains(err.str(), "off-center"));
}

TEST_CASE("cmd_simulate rejects a start outside the momentum cone") {
  const auto path = write_temp("cone.json", R"({
    "system": {"kind": "kl_hamiltonian", "potential": {"kind": "negentropy"}},
    "initial": {"probabilities": [0.3333333333333333, 0.3333333333333333, 0.3333333333333333],
                "momentum": [-2.0, 1.0, 1.0]},
    "time": {"stop": 1.0}
  })");
  std::ostringstream out, err;
  CHECK(cmd_simulate(path.string(), out, err) == kExitConfig);
  CHECK(contains(err.str(), "initial.momentum"));
  CHECK(contains(err.str(), "cone"));
}

TEST_CASE("cmd_simulate rejects an infeasible start near the boundary") {
  const auto path = write_temp("floor.json", R"({
    "system": {"kind": "entropy_gradient_flow"},
    "initial": {"probabilities": [1e-7, 0.4999999, 0.5]},
    "time": {"stop": 1.0}
  })");
  std::ostringstream out, err;
  CHECK(cmd_simulate(path.string(), out, err) == kExitConfig);
  CHECK(contains(err.str(), "initial.probabilities"));
  CHECK(contains(err.str(), "boundary_floor"));
}

TEST_CASE("cmd_simulate rejects a start time before the damping origin") {
  const auto path = write_temp("early.json", R"({
    "system": {"kind": "damped_kl_lagrangian", "schedule": {"p": 2.0, "C": 0.5, "t0": 0.1},
               "potential": {"kind": "negentropy"}},
    "initial": {"probabilities": [0.5, 0.3, 0.2]},
    "time": {"start": 0.05, "stop": 1.0}
  })");
  std::ostringstream out, err;
  CHECK(cmd_simulate(path.string(), out, err) == kExitConfig);
  CHECK(contains(err.str(), "time.start"));
}

TEST_CASE("cmd_verify runs a single suite in process") {
  std::ostringstream out, err;
  CHECK(cmd_verify(std::string("transports"), false, out, err) == kExitOk);
  CHECK(contains(out.str(), "[PASS] transports"));
  std::ostringstream out2, err2;
  CHECK(cmd_verify(std::string("no_such_suite"), false, out2, err2) == kExitConfig);
  CHECK(contains(err2.str(), "available suites"));
}

TEST_CASE("cmd_compare needs a start velocity in some form") {
  const auto path = write_temp("compare_empty.json", R"({
    "system": {"kind": "kl_lagrangian", "potential": {"kind": "negentropy"}},
    "initial": {"probabilities": [0.5, 0.3, 0.2]},
    "time": {"stop": 1.0}
  })");
  std::ostringstream out, err;
  CHECK(cmd_compare(path.string(), out, err) == kExitConfig);
  CHECK(contains(err.str(), "initial"));
}

// --- end-to-end runs of the installed binary --------------------------------

TEST_CASE("binary: simulate writes all artifacts and exits cleanly") {
  const auto csv = kWorkDir / "entropy.csv";
  const auto summary = kWorkDir / "entropy.json";
  const auto svg = kWorkDir / "entropy.svg";
  const std::string config = std::string(R"({
    "system": {"kind": "entropy_gradient_flow"},
    "initial": {"probabilities": [0.5666666666666667, 0.26666666666666666, 0.16666666666666666]},
    "time": {"stop": 2.0, "samples": 21},
    "output": {"csv": ")") + csv.string() + R"(", "summary": ")" + summary.string() +
                             R"(", "svg": ")" + svg.string() + R"("}
  })";
  const auto path = write_temp("run_entropy.json", config);
  const CmdResult r = run_binary("simulate " + path.string());
  CHECK(r.code == kExitOk);

  const json j = json::parse(slurp(summary));
  CHECK(j.at("termination") == "completed");
  CHECK(j.at("samples") == 21);

  std::ifstream csv_in(csv);
  const CsvTable table = read_csv(csv_in);
  CHECK(table.header.front() == "t");
  CHECK(table.rows.size() == 21);

  CHECK(contains(slurp(svg), "</svg>"));

  // The pipeline is deterministic: a second run reproduces the CSV bytes.
  const std::string first = slurp(csv);
  const CmdResult again = run_binary("simulate " + path.string());
  CHECK(again.code == kExitOk);
  CHECK(slurp(csv) == first);
}

TEST_CASE("binary: free motion reports a boundary stop with exit 0") {
  const auto path = write_temp("run_boundary.json", R"({
    "system": {"kind": "quadratic_lagrangian"},
    "initial": {"probabilities": [0.3333333333333333, 0.3333333333333333, 0.3333333333333333],
                "fiber": [-0.1, -0.4, 0.5]},
    "time": {"stop": 5.0, "samples": 26},
    "integrator": {"boundary_floor": 0.001}
  })");
  const CmdResult r = run_binary("simulate " + path.string());
  CHECK(r.code == kExitOk);
  const json j = json::parse(r.out);
  CHECK(j.at("termination") == "boundary");
  const double t_final = j.at("t_final").get<double>();
  CHECK(t_final > 3.5);
  CHECK(t_final < 4.0);
  CHECK(j.at("min_density").get<double>() >= 0.000999);
}

TEST_CASE("binary: step budget exhaustion exits with the numerical code") {
  const auto path = write_temp("run_budget.json", R"({
    "system": {"kind": "entropy_gradient_flow"},
    "initial": {"probabilities": [0.5666666666666667, 0.26666666666666666, 0.16666666666666666]},
    "time": {"stop": 2.0},
    "integrator": {"max_steps": 3}
  })");
  const CmdResult r = run_binary("simulate " + path.string());
  CHECK(r.code == kExitNumerical);
  CHECK(contains(r.err, "integration failed"));
}

TEST_CASE("binary: config errors exit with code 2 and name the field") {
  const auto bad = write_temp("malformed.json", "{ this is not json");
  CHECK(run_binary("simulate " + bad.string()).code == kExitConfig);

  const auto missing = write_temp("missing_stop.json", R"({
    "system": {"kind": "entropy_gradient_flow"},
    "initial": {"probabilities": [0.5, 0.5]},
    "time": {}
  })");
  const CmdResult r = run_binary("simulate " + missing.string());
  CHECK(r.code == kExitConfig);
  CHECK(contains(r.err, "time.stop"));

  CHECK(run_binary("simulate /no/such/config.json").code == kExitConfig);
  CHECK(run_binary("frobnicate").code == kExitConfig);
  CHECK(run_binary("--help").code == kExitOk);
}

TEST_CASE("binary: verify subcommand reports and exits by suite outcome") {
  const CmdResult r = run_binary("verify transports");
  CHECK(r.code == kExitOk);
  CHECK(contains(r.out, "[PASS] transports"));

  const CmdResult js = run_binary("verify --json transports");
  CHECK(js.code == kExitOk);
  const json doc = json::parse(js.out);
  CHECK(doc.at("pass") == true);
  CHECK(doc.at("suites").at(0).at("suite") == "transports");

  const CmdResult bad = run_binary("verify no_such_suite");
  CHECK(bad.code == kExitConfig);
  CHECK(contains(bad.err, "available suites"));
}

TEST_CASE("binary: compare holds the three formulations together") {
  const auto csv = kWorkDir / "compare.csv";
  const std::string config = std::string(R"({
    "system": {"kind": "kl_lagrangian", "a": 1.0, "b": 1.0, "c": 1.0,
               "potential": {"kind": "negentropy"}},
    "initial": {"probabilities": [0.5, 0.3, 0.2], "fiber": [-0.03, -0.33, 0.57]},
    "time": {"stop": 1.0, "samples": 21},
    "compare": {"bound": 1e-06},
    "output": {"csv": ")") + csv.string() + R"("}
  })";
  const auto path = write_temp("run_compare.json", config);
  const CmdResult r = run_binary("compare " + path.string());
  CHECK(r.code == kExitOk);
  CHECK(contains(r.out, "max pairwise deviation"));

  std::ifstream csv_in(csv);
  const CsvTable table = read_csv(csv_in);
  REQUIRE(table.header.size() == 4);
  CHECK(table.rows.size() == 21);
  for (const Vec& row : table.rows)
    for (std::size_t i = 1; i < 4; ++i) CHECK(row[i] < 1e-6);
}

TEST_CASE("binary: compare warns on inconsistent companion data but still reports") {
  const auto path = write_temp("run_compare_mismatch.json", R"({
    "system": {"kind": "kl_lagrangian", "potential": {"kind": "negentropy"}},
    "initial": {"probabilities": [0.5, 0.3, 0.2], "fiber": [-0.03, -0.33, 0.57],
                "momentum": [0.5, -0.3, -0.8]},
    "time": {"stop": 1.0, "samples": 11}
  })");
  const CmdResult r = run_binary("compare " + path.string());
  CHECK(r.code == kExitOk);
  CHECK(contains(r.err, "warning"));
}

TEST_CASE("binary: compare refuses non-KL systems") {
  const auto path = write_temp("run_compare_quadratic.json", R"({
    "system": {"kind": "quadratic_lagrangian"},
    "initial": {"probabilities": [0.5, 0.3, 0.2], "fiber": [-0.03, -0.33, 0.57]},
    "time": {"stop": 1.0}
  })");
  const CmdResult r = run_binary("compare " + path.string());
  CHECK(r.code == kExitConfig);
  CHECK(contains(r.err, "system.kind"));
}
