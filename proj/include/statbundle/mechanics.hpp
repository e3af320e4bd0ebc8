#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "statbundle/calculus.hpp"
#include "statbundle/simplex.hpp"

namespace statbundle {

/**
 * Damping/forcing schedule for the accelerated flows, indexed by an exponent
 * p > 0 and an amplitude C > 0, usable for t >= t0 > 0:
 *
 *   alpha(t) = log p - log t,   beta(t) = p log t + log C,   gamma(t) = p log t.
 *
 * The ideal-scaling identities gamma'(t) = e^{alpha(t)} and beta'(t) =
 * e^{alpha(t)} hold exactly: all three quantities equal p/t.
 */
struct ScheduleABG {
  double p = 2.0;
  double C = 0.5;
  double t0 = 0.1;

  double alpha(double t) const;
  double beta(double t) const;
  double gamma(double t) const;

  /** e^{alpha(t)} = p/t, which equals both gamma'(t) and beta'(t). */
  double exp_alpha(double t) const;
  /** Chart scale a(t) = e^{-alpha(t)} = t/p. */
  double a_of(double t) const;
  /** Momentum scale c(t) = e^{gamma(t)} = t^p. */
  double c_of(double t) const;
  /** Friction coefficient e^{alpha(t)} - alpha'(t) = (p+1)/t. */
  double damping(double t) const;
  /** Velocity-side force coefficient e^{2 alpha(t) + beta(t)} = C p^2 t^{p-2}. */
  double forcing(double t) const;
  /** Momentum-side force coefficient e^{gamma(t)+alpha(t)+beta(t)} = C p t^{2p-1}. */
  double hamilton_forcing(double t) const;
  /** Energy scale e^{alpha(t)+gamma(t)} = p t^{p-1}. */
  double energy_scale(double t) const;

  /** Throws std::invalid_argument unless p, C, t0 are all positive. */
  void validate() const;
};

enum class SystemKind {
  quadratic_lagrangian,
  quadratic_hamiltonian,
  kl_lagrangian,
  kl_hamiltonian,
  kl_replicator,
  damped_kl_lagrangian,
  damped_kl_hamiltonian,
  entropy_gradient_flow,
};

const char* to_string(SystemKind kind);
std::optional<SystemKind> system_kind_from_string(const std::string& name);

/**
 * Parameters selecting one member of the mechanics family. The quadratic
 * family uses (mass, kappa) with the entropy as its built-in potential; the
 * KL family uses (a, b, c) and an explicit potential; the damped family uses
 * a ScheduleABG and a potential; the entropy gradient flow has no parameters.
 */
struct SystemSpec {
  SystemKind kind = SystemKind::kl_lagrangian;
  double mass = 1.0;
  double kappa = 0.0;
  double a = 1.0;
  double b = 1.0;
  double c = 1.0;
  ScheduleABG schedule;
  Potential potential;

  /** True for the kinds whose state carries a velocity fiber (q, v). */
  bool is_lagrangian() const;
  /** True for the kinds whose state carries a momentum fiber (q, eta). */
  bool is_hamiltonian() const;

  void validate() const;
};

/**
 * State of one system: the base density plus its companion variable, which is
 * a velocity v, a momentum eta, or a companion density chi depending on the
 * system kind. First-order flows leave aux empty.
 */
struct PhasePoint {
  Density q;
  Vec aux;
};

/**
 * A mechanics system flattened to an explicit first-order ODE on a state
 * vector made of `slices` contiguous blocks of equal length n (n is inferred
 * from the state size at evaluation time). The layout metadata tells the
 * integrator which block holds the base density and what the companion block
 * is, so it can monitor constraints and guard the simplex boundary.
 *
 * rhs never throws on numerically bad states: non-finite values propagate
 * into the derivative so adaptive integrators can reject the step. The
 * time-dependent kinds do throw when evaluated before their start time.
 */
struct Flow {
  SystemKind kind = SystemKind::entropy_gradient_flow;
  std::string name;
  int slices = 1;
  int q_slice = 0;
  int aux_slice = -1;        // -1 when the state is just the density
  bool aux_is_density = false;
  double start_floor = 0.0;  // earliest admissible time (damped kinds: t0)

  std::function<void(double, std::span<const double>, std::span<double>)> rhs;
  /** Energy read along the flow: conserved for autonomous Hamiltonian kinds,
      a diagnostic for the damped kinds, the entropy for the gradient flow. */
  std::function<double(double, std::span<const double>)> energy;
  /** Lagrangian value L(t, state); set only for the Lagrangian kinds. */
  std::function<double(double, std::span<const double>)> lagrangian;
};

/** Builds the flow for a validated SystemSpec. */
Flow make_flow(const SystemSpec& spec);

// Individual field builders (equivalent to make_flow on the matching kind).
Flow quadratic_el_field(double mass, double kappa);
Flow quadratic_hamilton_field(double mass, double kappa);
Flow kl_el_field(double a, double b, double c, Potential f);
Flow kl_hamilton_field(double a, double b, double c, Potential f);
Flow kl_replicator_field(double a, double b, Potential f);
Flow damped_kl_el_field(ScheduleABG schedule, Potential f);
Flow damped_kl_hamilton_field(ScheduleABG schedule, Potential f);
Flow entropy_flow_field();

/** Flattens a phase point into the flow's state layout. */
Vec pack_state(const Flow& flow, const PhasePoint& state);
/** Recovers a phase point from a flat state; validates the density block. */
PhasePoint unpack_state(const Flow& flow, std::span<const double> y);

/**
 * Checks a candidate initial state against the system's constraints (fiber
 * centering, momentum domain, companion density validity, start time) and
 * returns the cleaned state. Throws std::invalid_argument on violations.
 */
PhasePoint normalize_initial_state(const SystemSpec& spec, double t_start, const PhasePoint& state);

// Scalar values and fiber maps of the two Lagrangian families.

/** L(q, w) = (mass/2) E_q[w^2] - kappa E_q[log q]; the kinetic part is >= 0. */
double quadratic_lagrangian_value(double mass, double kappa, const Density& q, const FiberVector& w);
/** H(q, eta) = E_q[eta^2] / (2 mass) + kappa E_q[log q]. */
double quadratic_hamiltonian_value(double mass, double kappa, const Density& q,
                                   const FiberVector& eta);
/** L^{a,b,c}(q, w) = c (a^{-1} K_q(a w) - b f(q)). */
double kl_lagrangian_value(double a, double b, double c, const Density& q, const FiberVector& w,
                           const Potential& f);
/** H^{a,b,c}(q, eta) = c (a^{-1} E_q[(1 + eta/c) log(1 + eta/c)] + b f(q)). */
double kl_hamiltonian_value(double a, double b, double c, const Density& q, const FiberVector& eta,
                            const Potential& f);
/** Momentum map eta = c (e_q(a w)/q - 1); every output satisfies 1 + eta/c > 0. */
FiberVector kl_fiber_gradient(double a, double c, const Density& q, const FiberVector& w);
/**
 * Inverse momentum map w = a^{-1} (log(1 + eta/c) - E_q[log(1 + eta/c)]).
 * Throws std::domain_error unless 1 + eta/c > 0 componentwise.
 */
FiberVector kl_legendre_inverse(double a, double c, const Density& q, const FiberVector& eta);
/** Momentum of the damped family at time t: kl_fiber_gradient(t/p, t^p, q, w). */
FiberVector damped_momentum(const ScheduleABG& schedule, double t, const Density& q,
                            const FiberVector& w);
/** Energy of the replicator formulation: a^{-1} kl(chi, q) + b f(q). */
double replicator_energy(double a, double b, const Density& chi, const Density& q,
                         const Potential& f);

// Built-in potentials.

/** f(q) = E_q[log q] (the negative entropy); Grad f = log q - E_q[log q]. */
Potential negentropy_potential();
/** f(q) = E_q[coefficients]; Grad f = coefficients - E_q[coefficients]. */
Potential linear_potential(Vec coefficients);
/** f(q) = kl(q, target); Grad f = log(q/target) - E_q[log(q/target)]. */
Potential kl_to_target_potential(Density target);
/** f = 0 with zero gradient. */
Potential zero_potential();

}  // namespace statbundle
