#include "statbundle/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <iostream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "statbundle/random.hpp"
#include "statbundle/verify.hpp"

namespace statbundle::cli {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw std::invalid_argument(field + ": " + what);
}

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string fmt3e(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

double max_abs_diff(const Vec& x, const Vec& y) {
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::fabs(x[i] - y[i]));
  return m;
}

// --- JSON field access, every error naming the offending field -------------

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* k) { return item.key() == k; });
    if (!known) fail(path.empty() ? item.key() : path + "." + item.key(), "unknown field");
  }
}

const json& need_object(const json& parent, const char* key, const std::string& path) {
  if (!parent.contains(key)) fail(path, "required object missing");
  const json& v = parent.at(key);
  if (!v.is_object()) fail(path, "must be an object");
  return v;
}

double need_number(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "must be a number");
  return v.get<double>();
}

double number_or(const json& obj, const char* key, const std::string& path, double fallback) {
  if (!obj.contains(key)) return fallback;
  return need_number(obj.at(key), path);
}

std::string need_string(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "must be a string");
  return v.get<std::string>();
}

Vec need_vector(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) fail(path, "must be a non-empty array of numbers");
  Vec out;
  out.reserve(v.size());
  for (const json& x : v) out.push_back(need_number(x, path));
  return out;
}

/**
 * Density-valued input: probabilities summing to one are scaled by the
 * component count; mean-one components pass through unchanged.
 */
Vec ingest_density(const json& v, const std::string& path) {
  Vec out = need_vector(v, path);
  if (out.size() < 2) fail(path, "needs at least two components");
  double sum = 0.0;
  for (const double x : out) {
    if (!std::isfinite(x) || x <= 0.0) fail(path, "components must be positive");
    sum += x;
  }
  const double n = static_cast<double>(out.size());
  if (std::fabs(sum - 1.0) <= kMassTolerance) {
    for (double& x : out) x *= n;
  } else if (std::fabs(sum / n - 1.0) > kMassTolerance) {
    fail(path, "must sum to 1 (probabilities) or to the component count (mean-one form); got sum " +
                   fmt3e(sum));
  }
  return out;
}

Potential parse_potential(const json& obj, const std::string& path, std::string& target_field) {
  check_keys(obj, path, {"kind", "coefficients", "target"});
  if (!obj.contains("kind")) fail(path + ".kind", "required");
  const std::string kind = need_string(obj.at("kind"), path + ".kind");
  const bool has_coeffs = obj.contains("coefficients");
  const bool has_target = obj.contains("target");
  if (kind == "negentropy" || kind == "none") {
    if (has_coeffs) fail(path + ".coefficients", "not used by potential kind " + kind);
    if (has_target) fail(path + ".target", "not used by potential kind " + kind);
    return kind == "negentropy" ? negentropy_potential() : zero_potential();
  }
  if (kind == "linear") {
    if (!has_coeffs) fail(path + ".coefficients", "required by potential kind linear");
    if (has_target) fail(path + ".target", "not used by potential kind linear");
    target_field = path + ".coefficients";
    return linear_potential(need_vector(obj.at("coefficients"), path + ".coefficients"));
  }
  if (kind == "kl_to_target") {
    if (!has_target) fail(path + ".target", "required by potential kind kl_to_target");
    if (has_coeffs) fail(path + ".coefficients", "not used by potential kind kl_to_target");
    target_field = path + ".target";
    return kl_to_target_potential(Density(ingest_density(obj.at("target"), path + ".target")));
  }
  fail(path + ".kind", "unknown potential kind (negentropy | linear | kl_to_target | none)");
}

bool is_damped(SystemKind kind) {
  return kind == SystemKind::damped_kl_lagrangian || kind == SystemKind::damped_kl_hamiltonian;
}

}  // namespace

Vec RunConfig::primary_aux() const {
  if (system.is_lagrangian()) return fiber.value_or(Vec(q0.size(), 0.0));
  if (system.is_hamiltonian()) return momentum.value_or(Vec(q0.size(), 0.0));
  if (system.kind == SystemKind::kl_replicator) return chi.value_or(q0);
  return {};
}

RunConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) fail("config", "top level must be a JSON object");
  check_keys(doc, "",
             {"schema_version", "system", "initial", "time", "integrator", "output", "compare"});
  if (doc.contains("schema_version")) {
    const json& v = doc.at("schema_version");
    if (!v.is_number_integer() || v.get<long long>() != 1)
      fail("schema_version", "this build reads schema version 1");
  }

  RunConfig cfg;

  const json& sys = need_object(doc, "system", "system");
  check_keys(sys, "system", {"kind", "mass", "kappa", "a", "b", "c", "schedule", "potential"});
  if (!sys.contains("kind")) fail("system.kind", "required");
  const std::string kind_name = need_string(sys.at("kind"), "system.kind");
  const std::optional<SystemKind> kind = system_kind_from_string(kind_name);
  if (!kind)
    fail("system.kind",
         "unknown system kind (quadratic_lagrangian | quadratic_hamiltonian | kl_lagrangian | "
         "kl_hamiltonian | kl_replicator | damped_kl_lagrangian | damped_kl_hamiltonian | "
         "entropy_gradient_flow)");
  cfg.system.kind = *kind;
  cfg.system.mass = number_or(sys, "mass", "system.mass", 1.0);
  cfg.system.kappa = number_or(sys, "kappa", "system.kappa", 0.0);
  cfg.system.a = number_or(sys, "a", "system.a", 1.0);
  cfg.system.b = number_or(sys, "b", "system.b", 1.0);
  cfg.system.c = number_or(sys, "c", "system.c", 1.0);
  if (sys.contains("schedule")) {
    const json& sched = sys.at("schedule");
    if (!sched.is_object()) fail("system.schedule", "must be an object");
    check_keys(sched, "system.schedule", {"p", "C", "t0"});
    cfg.system.schedule.p = number_or(sched, "p", "system.schedule.p", cfg.system.schedule.p);
    cfg.system.schedule.C = number_or(sched, "C", "system.schedule.C", cfg.system.schedule.C);
    cfg.system.schedule.t0 = number_or(sched, "t0", "system.schedule.t0", cfg.system.schedule.t0);
  }
  std::string potential_vector_field;
  if (sys.contains("potential")) {
    const json& pot = sys.at("potential");
    if (!pot.is_object()) fail("system.potential", "must be an object");
    cfg.system.potential = parse_potential(pot, "system.potential", potential_vector_field);
  } else {
    cfg.system.potential = zero_potential();
  }
  try {
    cfg.system.validate();
  } catch (const std::exception& e) {
    fail("system", e.what());
  }

  const json& init = need_object(doc, "initial", "initial");
  check_keys(init, "initial", {"probabilities", "fiber", "momentum", "chi_probabilities"});
  if (!init.contains("probabilities")) fail("initial.probabilities", "required");
  cfg.q0 = ingest_density(init.at("probabilities"), "initial.probabilities");
  const std::size_t n = cfg.q0.size();
  if (init.contains("fiber")) {
    cfg.fiber = need_vector(init.at("fiber"), "initial.fiber");
    if (cfg.fiber->size() != n) fail("initial.fiber", "length must match initial.probabilities");
  }
  if (init.contains("momentum")) {
    cfg.momentum = need_vector(init.at("momentum"), "initial.momentum");
    if (cfg.momentum->size() != n) fail("initial.momentum", "length must match initial.probabilities");
  }
  if (init.contains("chi_probabilities")) {
    cfg.chi = ingest_density(init.at("chi_probabilities"), "initial.chi_probabilities");
    if (cfg.chi->size() != n)
      fail("initial.chi_probabilities", "length must match initial.probabilities");
  }

  // Potentials built from vectors must match the state dimension.
  if (!potential_vector_field.empty()) {
    try {
      cfg.system.potential.value(Density::uniform(n));
    } catch (const std::exception&) {
      fail(potential_vector_field, "length must match initial.probabilities");
    }
  }

  const json& time = need_object(doc, "time", "time");
  check_keys(time, "time", {"start", "stop", "samples"});
  const double default_start = is_damped(cfg.system.kind) ? cfg.system.schedule.t0 : 0.0;
  cfg.t_start = number_or(time, "start", "time.start", default_start);
  if (!time.contains("stop")) fail("time.stop", "required");
  cfg.t_end = need_number(time.at("stop"), "time.stop");
  if (!(cfg.t_end > cfg.t_start)) fail("time.stop", "must exceed time.start");
  if (time.contains("samples")) {
    const json& v = time.at("samples");
    if (!v.is_number_integer() || v.get<long long>() < 2)
      fail("time.samples", "must be an integer >= 2");
    cfg.sample_count = v.get<std::size_t>();
  }

  if (doc.contains("integrator")) {
    const json& integ = doc.at("integrator");
    if (!integ.is_object()) fail("integrator", "must be an object");
    check_keys(integ, "integrator",
               {"method", "rtol", "atol", "step", "h_max", "h_min", "boundary_floor", "max_steps",
                "projection"});
    if (integ.contains("method")) {
      const std::string m = need_string(integ.at("method"), "integrator.method");
      if (m == "adaptive")
        cfg.integrator.method = Method::adaptive_embedded_rk;
      else if (m == "rk4")
        cfg.integrator.method = Method::rk4_fixed;
      else
        fail("integrator.method", "must be \"adaptive\" or \"rk4\"");
    }
    cfg.integrator.rtol = number_or(integ, "rtol", "integrator.rtol", cfg.integrator.rtol);
    cfg.integrator.atol = number_or(integ, "atol", "integrator.atol", cfg.integrator.atol);
    cfg.integrator.step = number_or(integ, "step", "integrator.step", cfg.integrator.step);
    cfg.integrator.h_max = number_or(integ, "h_max", "integrator.h_max", cfg.integrator.h_max);
    cfg.integrator.h_min = number_or(integ, "h_min", "integrator.h_min", cfg.integrator.h_min);
    cfg.integrator.boundary_floor =
        number_or(integ, "boundary_floor", "integrator.boundary_floor", cfg.integrator.boundary_floor);
    if (integ.contains("max_steps")) {
      const json& v = integ.at("max_steps");
      if (!v.is_number_integer() || v.get<long long>() < 1)
        fail("integrator.max_steps", "must be a positive integer");
      cfg.integrator.max_steps = v.get<std::size_t>();
    }
    if (integ.contains("projection")) {
      const std::string p = need_string(integ.at("projection"), "integrator.projection");
      if (p == "none")
        cfg.integrator.projection = Projection::none;
      else if (p == "renormalize")
        cfg.integrator.projection = Projection::renormalize;
      else
        fail("integrator.projection", "must be \"none\" or \"renormalize\"");
    }
    try {
      cfg.integrator.validate();
    } catch (const std::exception& e) {
      fail("integrator", e.what());
    }
  }

  if (doc.contains("output")) {
    const json& outp = doc.at("output");
    if (!outp.is_object()) fail("output", "must be an object");
    check_keys(outp, "output", {"csv", "summary", "svg"});
    if (outp.contains("csv")) cfg.csv_path = need_string(outp.at("csv"), "output.csv");
    if (outp.contains("summary")) cfg.summary_path = need_string(outp.at("summary"), "output.summary");
    if (outp.contains("svg")) cfg.svg_path = need_string(outp.at("svg"), "output.svg");
  }

  if (doc.contains("compare")) {
    const json& cmp = doc.at("compare");
    if (!cmp.is_object()) fail("compare", "must be an object");
    check_keys(cmp, "compare", {"bound"});
    cfg.compare_bound = number_or(cmp, "bound", "compare.bound", cfg.compare_bound);
    if (!(cfg.compare_bound > 0.0)) fail("compare.bound", "must be positive");
  }

  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

// --- artifacts --------------------------------------------------------------

void write_csv(std::ostream& out, const Flow& flow, const Trajectory& traj) {
  if (traj.states.empty()) {
    out << "t\n";
    return;
  }
  const std::size_t n = traj.states.front().size() / static_cast<std::size_t>(flow.slices);
  const bool has_aux = flow.slices == 2;
  out << 't';
  for (std::size_t i = 1; i <= n; ++i) out << ",q_" << i;
  if (has_aux)
    for (std::size_t i = 1; i <= n; ++i) out << ",aux_" << i;
  out << ",H,mass_drift,centering_drift\n";

  const std::size_t q_off = static_cast<std::size_t>(flow.q_slice) * n;
  const std::size_t aux_off = has_aux ? static_cast<std::size_t>(flow.aux_slice) * n : 0;
  for (std::size_t r = 0; r < traj.states.size(); ++r) {
    const Vec& y = traj.states[r];
    out << fmt17(traj.times[r]);
    for (std::size_t i = 0; i < n; ++i) out << ',' << fmt17(y[q_off + i]);
    if (has_aux)
      for (std::size_t i = 0; i < n; ++i) out << ',' << fmt17(y[aux_off + i]);
    const SampleDiagnostics& d = traj.diagnostics[r];
    out << ',' << (d.energy ? fmt17(*d.energy) : "nan");
    out << ',' << fmt17(d.mass_drift) << ',' << fmt17(d.centering_drift) << '\n';
  }
}

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  const auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::size_t pos = 0;
    while (true) {
      const std::size_t c = s.find(',', pos);
      if (c == std::string::npos) {
        cells.push_back(s.substr(pos));
        break;
      }
      cells.push_back(s.substr(pos, c - pos));
      pos = c + 1;
    }
    return cells;
  };
  if (!std::getline(in, line)) throw std::invalid_argument("csv: missing header line");
  table.header = split(line);
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line);
    if (cells.size() != table.header.size())
      throw std::invalid_argument("csv row " + std::to_string(row_no) + ": expected " +
                                  std::to_string(table.header.size()) + " cells");
    Vec row;
    row.reserve(cells.size());
    for (const std::string& cell : cells) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0')
        throw std::invalid_argument("csv row " + std::to_string(row_no) + ": non-numeric cell '" +
                                    cell + "'");
      row.push_back(v);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_summary(std::ostream& out, const Flow& flow, const Trajectory& traj, double t_start,
                   double t_end) {
  json j;
  j["schema_version"] = 1;
  j["system"] = flow.name;
  j["termination"] = to_string(traj.termination);
  if (!traj.message.empty()) j["message"] = traj.message;
  j["t_start"] = t_start;
  j["t_end_requested"] = t_end;
  j["t_final"] = traj.t_final;
  j["steps_accepted"] = traj.steps_accepted;
  j["steps_rejected"] = traj.steps_rejected;
  j["samples"] = traj.times.size();

  if (!traj.diagnostics.empty()) {
    double mass = 0.0, cent = 0.0, mind = std::numeric_limits<double>::infinity();
    for (const SampleDiagnostics& d : traj.diagnostics) {
      mass = std::max(mass, d.mass_drift);
      cent = std::max(cent, d.centering_drift);
      mind = std::min(mind, d.min_density);
    }
    j["max_mass_drift"] = mass;
    j["max_centering_drift"] = cent;
    j["min_density"] = mind;
    if (traj.diagnostics.front().energy) {
      const double e0 = *traj.diagnostics.front().energy;
      double drift = 0.0;
      for (const SampleDiagnostics& d : traj.diagnostics)
        if (d.energy) drift = std::max(drift, std::fabs(*d.energy - e0));
      j["energy"] = {{"initial", e0},
                     {"final", traj.diagnostics.back().energy.value_or(e0)},
                     {"max_abs_drift", drift}};
    }
  }

  const std::size_t n = traj.y_final.size() / static_cast<std::size_t>(flow.slices);
  const std::size_t q_off = static_cast<std::size_t>(flow.q_slice) * n;
  json fs;
  fs["t"] = traj.t_final;
  json qv = json::array(), pv = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    qv.push_back(traj.y_final[q_off + i]);
    pv.push_back(traj.y_final[q_off + i] / static_cast<double>(n));
  }
  fs["q"] = std::move(qv);
  fs["probabilities"] = std::move(pv);
  if (flow.slices == 2) {
    const std::size_t aux_off = static_cast<std::size_t>(flow.aux_slice) * n;
    json av = json::array();
    for (std::size_t i = 0; i < n; ++i) av.push_back(traj.y_final[aux_off + i]);
    fs["aux"] = std::move(av);
  }
  j["final_state"] = std::move(fs);
  out << j.dump(2) << '\n';
}

// --- subcommands ------------------------------------------------------------

namespace {

/** Kind-specific start checks with messages that name the config fields. */
void check_initial_fields(const RunConfig& cfg) {
  const SystemSpec& spec = cfg.system;
  const bool lag = spec.is_lagrangian();
  const bool ham = spec.is_hamiltonian();
  const bool rep = spec.kind == SystemKind::kl_replicator;
  const std::string kind_name = to_string(spec.kind);
  if (cfg.fiber && !lag) fail("initial.fiber", "not used by system kind " + kind_name);
  if (cfg.momentum && !ham) fail("initial.momentum", "not used by system kind " + kind_name);
  if (cfg.chi && !rep) fail("initial.chi_probabilities", "not used by system kind " + kind_name);

  const double floor = cfg.integrator.boundary_floor;
  if (*std::min_element(cfg.q0.begin(), cfg.q0.end()) <= floor)
    fail("initial.probabilities",
         "smallest component is at or below integrator.boundary_floor = " + fmt3e(floor));
  if (rep && cfg.chi && *std::min_element(cfg.chi->begin(), cfg.chi->end()) <= floor)
    fail("initial.chi_probabilities",
         "smallest component is at or below integrator.boundary_floor = " + fmt3e(floor));

  if (is_damped(spec.kind) && cfg.t_start < spec.schedule.t0 * (1.0 - 1e-12))
    fail("time.start", "must be >= system.schedule.t0 = " + fmt3e(spec.schedule.t0));

  if (lag || ham) {
    const Vec aux = cfg.primary_aux();
    const Density q(cfg.q0);
    const double resid = std::fabs(expectation(q, aux));
    const char* field = lag ? "initial.fiber" : "initial.momentum";
    if (resid > kCenterTolerance)
      fail(field, "off-center: |E_q[.]| = " + fmt3e(resid) + " exceeds " + fmt3e(kCenterTolerance));
    if (spec.kind == SystemKind::kl_hamiltonian ||
        spec.kind == SystemKind::damped_kl_hamiltonian) {
      const double c = spec.kind == SystemKind::kl_hamiltonian ? spec.c
                                                               : spec.schedule.c_of(cfg.t_start);
      for (const double e : aux)
        if (1.0 + e / c <= 0.0)
          fail("initial.momentum",
               "outside the admissible cone: 1 + eta/c must stay positive (c = " + fmt3e(c) + ")");
    }
  }
}

bool write_file_artifact(const std::string& path, const char* field,
                         const std::function<void(std::ostream&)>& writer) {
  std::ofstream f(path);
  if (!f) fail(field, "cannot open " + path + " for writing");
  writer(f);
  return bool(f);
}

}  // namespace

int cmd_simulate(const std::string& config_path, std::ostream& out, std::ostream& err) {
  try {
    const RunConfig cfg = load_config(config_path);
    check_initial_fields(cfg);
    const Flow flow = make_flow(cfg.system);
    const PhasePoint start =
        normalize_initial_state(cfg.system, cfg.t_start, PhasePoint{Density(cfg.q0), cfg.primary_aux()});
    const std::vector<double> times = uniform_times(cfg.t_start, cfg.t_end, cfg.sample_count);
    const Trajectory traj =
        integrate(flow, pack_state(flow, start), cfg.t_start, cfg.t_end, times, cfg.integrator);

    if (cfg.csv_path)
      write_file_artifact(*cfg.csv_path, "output.csv",
                          [&](std::ostream& f) { write_csv(f, flow, traj); });
    if (cfg.svg_path)
      write_file_artifact(*cfg.svg_path, "output.svg",
                          [&](std::ostream& f) { write_svg(f, flow, traj); });
    if (cfg.summary_path) {
      write_file_artifact(*cfg.summary_path, "output.summary", [&](std::ostream& f) {
        write_summary(f, flow, traj, cfg.t_start, cfg.t_end);
      });
      out << flow.name << ": " << to_string(traj.termination) << " at t = " << traj.t_final << " ("
          << traj.times.size() << " samples)\n";
    } else {
      write_summary(out, flow, traj, cfg.t_start, cfg.t_end);
    }

    if (traj.termination == Termination::completed || traj.termination == Termination::boundary)
      return kExitOk;
    err << "integration failed: " << to_string(traj.termination)
        << (traj.message.empty() ? "" : ": " + traj.message) << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
}

int cmd_verify(const std::optional<std::string>& suite, bool as_json, std::ostream& out,
               std::ostream& err) {
  const std::uint64_t seed = seed_from_env();
  std::vector<verify::SuiteResult> results;
  try {
    if (suite) {
      results.push_back(verify::run_suite(*suite, seed));
    } else {
      results = verify::run_all(seed);
    }
  } catch (const std::invalid_argument& e) {
    err << e.what() << "\navailable suites:";
    for (const std::string& name : verify::suite_names()) err << ' ' << name;
    err << '\n';
    return kExitConfig;
  }

  const bool all_pass = std::all_of(results.begin(), results.end(),
                                    [](const verify::SuiteResult& s) { return s.passed(); });

  if (as_json) {
    json doc = json::array();
    for (const verify::SuiteResult& s : results) {
      json checks = json::array();
      for (const verify::CheckResult& c : s.checks) {
        json jc = {{"name", c.name}, {"measured", c.measured}, {"bound", c.bound}, {"pass", c.pass}};
        if (!c.note.empty()) jc["note"] = c.note;
        checks.push_back(std::move(jc));
      }
      doc.push_back({{"suite", s.name}, {"pass", s.passed()}, {"checks", std::move(checks)}});
    }
    json wrapper = {{"schema_version", 1}, {"seed", seed}, {"pass", all_pass},
                    {"suites", std::move(doc)}};
    out << wrapper.dump(2) << '\n';
  } else {
    std::size_t passed = 0;
    for (const verify::SuiteResult& s : results) {
      passed += s.passed() ? 1 : 0;
      out << (s.passed() ? "[PASS] " : "[FAIL] ") << s.name << '\n';
      for (const verify::CheckResult& c : s.checks) {
        out << "    " << (c.pass ? "ok   " : "FAIL ") << c.name;
        for (std::size_t pad = c.name.size(); pad < 36; ++pad) out << ' ';
        out << " measured " << fmt3e(c.measured) << "  bound " << fmt3e(c.bound);
        if (!c.note.empty()) out << "  (" << c.note << ")";
        out << '\n';
      }
    }
    out << passed << '/' << results.size() << " suites passed (seed " << seed << ")\n";
  }
  return all_pass ? kExitOk : kExitVerification;
}

int cmd_compare(const std::string& config_path, std::ostream& out, std::ostream& err) {
  try {
    const RunConfig cfg = load_config(config_path);
    const SystemKind kind = cfg.system.kind;
    if (kind != SystemKind::kl_lagrangian && kind != SystemKind::kl_hamiltonian &&
        kind != SystemKind::kl_replicator)
      fail("system.kind",
           "compare needs a KL-family system (kl_lagrangian | kl_hamiltonian | kl_replicator)");

    const double a = cfg.system.a, b = cfg.system.b, c = cfg.system.c;
    const Potential& f = cfg.system.potential;
    const Density q0(cfg.q0);

    const auto make_fiber = [&](const Vec& raw, const char* field) -> FiberVector {
      try {
        return FiberVector(q0, raw);
      } catch (const std::exception& e) {
        fail(field, e.what());
      }
    };
    std::optional<FiberVector> vel, mom;
    std::optional<Density> comp;
    if (cfg.fiber) vel = make_fiber(*cfg.fiber, "initial.fiber");
    if (cfg.momentum) mom = make_fiber(*cfg.momentum, "initial.momentum");
    if (cfg.chi) comp = Density(*cfg.chi);

    const FiberVector v0 = [&]() -> FiberVector {
      if (vel) return *vel;
      if (mom) {
        try {
          return kl_legendre_inverse(a, c, q0, *mom);
        } catch (const std::exception& e) {
          fail("initial.momentum", e.what());
        }
      }
      if (comp) {
        const FiberVector s = chart_s(q0, *comp);
        Vec w(s.size());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = s[i] / a;
        return FiberVector(q0, std::move(w));
      }
      fail("initial", "compare needs one of fiber, momentum, or chi_probabilities");
    }();

    const FiberVector eta_exact = kl_fiber_gradient(a, c, q0, v0);
    Vec av(v0.size());
    for (std::size_t i = 0; i < av.size(); ++i) av[i] = a * v0[i];
    const Density chi_exact = chi_retraction(q0, FiberVector(q0, std::move(av)));
    const FiberVector eta0 = mom ? *mom : eta_exact;
    const Density chi0 = comp ? *comp : chi_exact;

    bool mismatched = false;
    if (mom && max_abs_diff(mom->values(), eta_exact.values()) > 1e-9) mismatched = true;
    if (comp && (vel || mom) && max_abs_diff(comp->values(), chi_exact.values()) > 1e-9)
      mismatched = true;
    if (mismatched)
      err << "warning: companion start data is not the image of the velocity start; deviations "
             "are reported but the bound is not enforced\n";

    const Flow el = kl_el_field(a, b, c, f);
    const Flow ham = kl_hamilton_field(a, b, c, f);
    const Flow rep = kl_replicator_field(a, b, f);
    const std::vector<double> times = uniform_times(cfg.t_start, cfg.t_end, cfg.sample_count);
    const Trajectory t_el = integrate(el, pack_state(el, PhasePoint{q0, v0.values()}), cfg.t_start,
                                      cfg.t_end, times, cfg.integrator);
    const Trajectory t_ham = integrate(ham, pack_state(ham, PhasePoint{q0, eta0.values()}),
                                       cfg.t_start, cfg.t_end, times, cfg.integrator);
    const Trajectory t_rep = integrate(rep, pack_state(rep, PhasePoint{q0, chi0.values()}),
                                       cfg.t_start, cfg.t_end, times, cfg.integrator);
    for (const auto* t : {&t_el, &t_ham, &t_rep}) {
      if (t->termination != Termination::completed) {
        err << "integration failed before the horizon: " << to_string(t->termination) << " at t = "
            << t->t_final << '\n';
        return kExitNumerical;
      }
    }

    const std::size_t n = cfg.q0.size();
    const auto q_of = [n](const Flow& flow, const Vec& y) {
      return std::span<const double>(y.data() + static_cast<std::size_t>(flow.q_slice) * n, n);
    };
    const auto span_diff = [](std::span<const double> x, std::span<const double> y) {
      double m = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::fabs(x[i] - y[i]));
      return m;
    };

    std::ostringstream csv;
    csv << "t,velocity_vs_momentum,velocity_vs_companion,momentum_vs_companion\n";
    double worst = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      const auto qe = q_of(el, t_el.states[i]);
      const auto qh = q_of(ham, t_ham.states[i]);
      const auto qr = q_of(rep, t_rep.states[i]);
      const double eh = span_diff(qe, qh), er = span_diff(qe, qr), hr = span_diff(qh, qr);
      worst = std::max({worst, eh, er, hr});
      csv << fmt17(times[i]) << ',' << fmt17(eh) << ',' << fmt17(er) << ',' << fmt17(hr) << '\n';
    }

    if (cfg.csv_path) {
      write_file_artifact(*cfg.csv_path, "output.csv",
                          [&](std::ostream& fstr) { fstr << csv.str(); });
      out << "max pairwise deviation " << fmt3e(worst) << " over " << times.size()
          << " samples (bound " << fmt3e(cfg.compare_bound) << ")\n";
    } else {
      out << csv.str();
      err << "max pairwise deviation " << fmt3e(worst) << " over " << times.size()
          << " samples (bound " << fmt3e(cfg.compare_bound) << ")\n";
    }

    if (mismatched || worst <= cfg.compare_bound) return kExitOk;
    err << "formulations deviate beyond compare.bound\n";
    return kExitVerification;
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
}

int run_cli(int argc, char** argv) {
  CLI::App app{"simplex dynamics toolkit: simulate, verify, and compare statistical-bundle flows"};
  app.require_subcommand(1);
  app.footer("The STATBUNDLE_SEED environment variable fixes the randomized verification instances.");

  std::string sim_path, cmp_path, suite_name;
  bool as_json = false;

  CLI::App* sim =
      app.add_subcommand("simulate", "integrate a configured system and write CSV/JSON/SVG artifacts");
  sim->add_option("config", sim_path, "JSON configuration file")->required();

  std::string suite_help = "optional suite filter; one of:";
  for (const std::string& name : verify::suite_names()) suite_help += " " + name;
  CLI::App* ver = app.add_subcommand("verify", "run the invariant suites and report measured values");
  ver->add_option("suite", suite_name, suite_help);
  ver->add_flag("--json", as_json, "emit a machine-readable report");

  CLI::App* cmp = app.add_subcommand(
      "compare", "integrate the velocity, momentum, and companion-density forms of one KL system");
  cmp->add_option("config", cmp_path, "JSON configuration file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (sim->parsed()) return cmd_simulate(sim_path, std::cout, std::cerr);
  if (ver->parsed())
    return cmd_verify(suite_name.empty() ? std::nullopt : std::optional<std::string>(suite_name),
                      as_json, std::cout, std::cerr);
  return cmd_compare(cmp_path, std::cout, std::cerr);
}

}  // namespace statbundle::cli
