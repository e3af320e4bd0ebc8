#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "statbundle/integrate.hpp"
#include "statbundle/mechanics.hpp"

namespace statbundle::cli {

// Process exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;            // run finished (or stopped at the simplex boundary)
inline constexpr int kExitNumerical = 1;     // integration failed (non-finite state, step budget)
inline constexpr int kExitConfig = 2;        // unreadable or invalid configuration
inline constexpr int kExitVerification = 3;  // a verification suite or comparison bound failed

/**
 * One JSON configuration document, decoded and type-checked. Density-valued
 * vectors (the base point, a companion density, a divergence target) accept
 * either probabilities summing to one, which are scaled by the component
 * count on load, or already-scaled mean-one components.
 */
struct RunConfig {
  SystemSpec system;
  Vec q0;                     // mean-one components after ingest scaling
  std::optional<Vec> fiber;   // velocity values (Lagrangian kinds)
  std::optional<Vec> momentum;  // momentum values (Hamiltonian kinds)
  std::optional<Vec> chi;     // companion density components, scaled like q0
  double t_start = 0.0;
  double t_end = 1.0;
  std::size_t sample_count = 101;
  IntegratorConfig integrator;
  std::optional<std::string> csv_path;
  std::optional<std::string> summary_path;
  std::optional<std::string> svg_path;
  double compare_bound = 1e-6;

  /** The companion block the configured kind integrates (empty for the gradient flow). */
  Vec primary_aux() const;
};

/** Decodes a config document. Throws std::invalid_argument naming the offending field. */
RunConfig parse_config(const std::string& json_text);

/** Reads and decodes a config file; file and parse problems surface the same way. */
RunConfig load_config(const std::string& path);

/**
 * Writes the trajectory as CSV with header
 * t,q_1..q_n[,aux_1..aux_n],H,mass_drift,centering_drift. State columns hold
 * the stored mean-one components at 17 significant digits, so re-ingesting
 * reproduces them bit for bit.
 */
void write_csv(std::ostream& out, const Flow& flow, const Trajectory& trajectory);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<Vec> rows;
};
/** Parses a CSV produced by write_csv (header line plus numeric rows). */
CsvTable read_csv(std::istream& in);

/** JSON run summary: termination, step counts, drift extrema, final state. */
void write_summary(std::ostream& out, const Flow& flow, const Trajectory& trajectory,
                   double t_start, double t_end);

/**
 * Self-contained SVG: component time series of the base density as
 * probabilities, plus a barycentric path panel when the state has three
 * components.
 */
void write_svg(std::ostream& out, const Flow& flow, const Trajectory& trajectory);

int cmd_simulate(const std::string& config_path, std::ostream& out, std::ostream& err);
int cmd_verify(const std::optional<std::string>& suite, bool as_json, std::ostream& out,
               std::ostream& err);
int cmd_compare(const std::string& config_path, std::ostream& out, std::ostream& err);

/** Argument parsing plus dispatch; used directly by the binary's main. */
int run_cli(int argc, char** argv);

}  // namespace statbundle::cli
