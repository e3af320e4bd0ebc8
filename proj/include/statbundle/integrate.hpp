#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "statbundle/mechanics.hpp"

namespace statbundle {

enum class Method {
  adaptive_embedded_rk,  // Dormand-Prince 5(4) with PI step control
  rk4_fixed,
};

enum class Projection {
  none,
  renormalize,  // rescale density blocks to mean one, recenter the fiber block
};

enum class Termination {
  completed,
  boundary,        // a density component reached the boundary floor
  max_steps,
  step_underflow,  // step control drove h below h_min without acceptance
  nonfinite,       // derivative or state stopped being finite
};

const char* to_string(Termination reason);

struct IntegratorConfig {
  Method method = Method::adaptive_embedded_rk;
  double rtol = 1e-10;
  double atol = 1e-12;
  /** Fixed step for rk4_fixed (rounded so the span divides evenly). */
  double step = 0.01;
  /** Largest accepted step; also bounds the dense-output interpolation error. */
  double h_max = 0.02;
  double h_min = 1e-12;
  double boundary_floor = 1e-6;
  std::size_t max_steps = 2'000'000;
  Projection projection = Projection::none;

  void validate() const;  // throws std::invalid_argument
};

/** Per-sample constraint monitors; energy is present when the flow defines one. */
struct SampleDiagnostics {
  double mass_drift = 0.0;       // |mean(q) - 1|
  double centering_drift = 0.0;  // |E_q[aux]|, or |mean(chi) - 1| for a companion density
  double min_density = 0.0;      // min over all density blocks
  std::optional<double> energy;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<SampleDiagnostics> diagnostics;
  Termination termination = Termination::completed;
  std::string message;
  std::size_t steps_accepted = 0;
  std::size_t steps_rejected = 0;
  /** Time and state actually reached (the crossing point on boundary exits). */
  double t_final = 0.0;
  Vec y_final;
};

/**
 * Integrates the flow from y0 over [t_start, t_end], emitting interpolated
 * samples at the requested times (cubic Hermite dense output on accepted
 * steps). Early terminations are reported in the trajectory, not thrown: the
 * boundary guard bisects the accepted step to the first time a density
 * component crosses the floor and ends the trajectory there.
 *
 * sample_times must be strictly increasing and contained in [t_start, t_end].
 */
Trajectory integrate(const Flow& flow, const Vec& y0, double t_start, double t_end,
                     const std::vector<double>& sample_times, const IntegratorConfig& config = {});

/** count evenly spaced times from t_start to t_end inclusive (count >= 2). */
std::vector<double> uniform_times(double t_start, double t_end, std::size_t count);

/**
 * Rescales every density block to mean one and recenters a fiber-type
 * companion block; idempotent. Throws std::domain_error when a density
 * component is not strictly positive.
 */
Vec project_state(const Flow& flow, Vec y);

/**
 * Trapezoidal quadrature of the flow's Lagrangian over the trajectory
 * samples. Throws std::invalid_argument when the flow has no Lagrangian
 * (Hamiltonian, replicator, and gradient-flow kinds).
 */
double action_integral(const Flow& flow, const Trajectory& trajectory);

}  // namespace statbundle
