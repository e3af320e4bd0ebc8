#include "statbundle/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "statbundle/calculus.hpp"
#include "statbundle/cumulant.hpp"
#include "statbundle/integrate.hpp"
#include "statbundle/linalg.hpp"
#include "statbundle/mechanics.hpp"
#include "statbundle/oracles.hpp"
#include "statbundle/random.hpp"
#include "statbundle/simplex.hpp"

namespace statbundle::verify {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt_g(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

double max_abs_diff(std::span<const double> x, std::span<const double> y) {
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::fabs(x[i] - y[i]));
  return m;
}

/** Plain upper-bound check: passes when measured is finite and <= bound. */
CheckResult bounded(std::string name, double measured, double bound, std::string note = {}) {
  CheckResult c;
  c.name = std::move(name);
  c.measured = measured;
  c.bound = bound;
  c.pass = std::isfinite(measured) && measured <= bound;
  c.note = std::move(note);
  return c;
}

/** Interval check: passes when measured lies in [lo, hi]. */
CheckResult within(std::string name, double measured, double lo, double hi, std::string note = {}) {
  CheckResult c;
  c.name = std::move(name);
  c.measured = measured;
  c.bound = hi;
  c.pass = std::isfinite(measured) && measured >= lo && measured <= hi;
  c.note = "target [" + fmt_g(lo) + ", " + fmt_g(hi) + "]" + (note.empty() ? "" : "; " + note);
  return c;
}

/** Strict-decrease check: passes when measured (a difference) is negative. */
CheckResult decrease(std::string name, double measured, std::string note = {}) {
  CheckResult c;
  c.name = std::move(name);
  c.measured = measured;
  c.bound = 0.0;
  c.pass = std::isfinite(measured) && measured < 0.0;
  c.note = std::move(note);
  return c;
}

FiberVector centered_at(const Density& q, Vec raw) {
  const double mean = expectation(q, raw);
  for (double& x : raw) x -= mean;
  return FiberVector(q, std::move(raw));
}

std::span<const double> q_block(const Flow& flow, const Vec& y) {
  const std::size_t n = y.size() / static_cast<std::size_t>(flow.slices);
  return {y.data() + static_cast<std::size_t>(flow.q_slice) * n, n};
}

std::span<const double> aux_block(const Flow& flow, const Vec& y) {
  const std::size_t n = y.size() / static_cast<std::size_t>(flow.slices);
  return {y.data() + static_cast<std::size_t>(flow.aux_slice) * n, n};
}

Trajectory run_flow(const Flow& flow, const PhasePoint& start, double t0, double t1,
                    std::size_t samples, IntegratorConfig cfg = {}) {
  return integrate(flow, pack_state(flow, start), t0, t1, uniform_times(t0, t1, samples), cfg);
}

/** Marks a check as failed with an explanatory note when a run ended early. */
bool completed_or_note(const Trajectory& traj, std::string& note) {
  if (traj.termination == Termination::completed) return true;
  note = std::string("terminated early: ") + to_string(traj.termination) + " at t=" + fmt_g(traj.t_final);
  return false;
}

// ---------------------------------------------------------------------------
// transports: affine transport algebra on random fibers.
// ---------------------------------------------------------------------------

SuiteResult suite_transports(std::uint64_t seed) {
  std::mt19937_64 rng(seed + 0x71);
  const int instances = 1000;
  double semi_e = 0.0, semi_m = 0.0, pair_cons = 0.0, round_e = 0.0, round_m = 0.0;
  for (int it = 0; it < instances; ++it) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng() % 7);
    const Density p = random_density(rng, n);
    const Density q = random_density(rng, n);
    const Density r = random_density(rng, n);
    const FiberVector v = random_fiber(rng, p);
    const FiberVector eta = random_fiber(rng, p);

    semi_e = std::max(semi_e, max_abs_diff(e_transport(e_transport(v, q), r).values(),
                                           e_transport(v, r).values()));
    semi_m = std::max(semi_m, max_abs_diff(m_transport(m_transport(eta, q), r).values(),
                                           m_transport(eta, r).values()));
    pair_cons = std::max(pair_cons, std::fabs(pairing(m_transport(eta, q), e_transport(v, q)) -
                                              pairing(eta, v)));
    round_e = std::max(round_e, max_abs_diff(e_transport(e_transport(v, q), p).values(), v.values()));
    round_m = std::max(round_m, max_abs_diff(m_transport(m_transport(eta, q), p).values(), eta.values()));
  }
  const std::string note = "1000 instances, n in 2..8";
  SuiteResult s;
  s.name = "transports";
  s.checks.push_back(bounded("semigroup_exp", semi_e, 1e-12, note));
  s.checks.push_back(bounded("semigroup_mix", semi_m, 1e-12, note));
  s.checks.push_back(bounded("pairing_conserved", pair_cons, 1e-12, note));
  s.checks.push_back(bounded("roundtrip_exp", round_e, 1e-12, note));
  s.checks.push_back(bounded("roundtrip_mix", round_m, 1e-12, note));
  return s;
}

// ---------------------------------------------------------------------------
// cumulant: differentials of the log-normalizer against finite differences.
// ---------------------------------------------------------------------------

SuiteResult suite_cumulant(std::uint64_t seed) {
  std::mt19937_64 rng(seed + 0xc3);
  const int instances = 200;
  double worst_d1 = 0.0, worst_d2 = 0.0, worst_d3 = 0.0, worst_cov = 0.0;
  for (int it = 0; it < instances; ++it) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng() % 7);
    const Density p = random_density(rng, n);
    const FiberVector u = random_fiber(rng, p, 0.7);
    const FiberVector h = random_fiber(rng, p);
    const FiberVector h2 = random_fiber(rng, p);

    const auto K = [&](double s) {
      Vec w(u.size());
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = u[i] + s * h[i];
      return cumulant(p, FiberVector(p, std::move(w))).value;
    };

    const double e1 = 1e-5;
    worst_d1 = std::max(worst_d1,
                        std::fabs(cumulant_d1(p, u, h) - (K(e1) - K(-e1)) / (2.0 * e1)));

    const double e2 = 1e-4;
    worst_d2 = std::max(worst_d2, std::fabs(cumulant_d2(p, u, h, h) -
                                            (K(e2) - 2.0 * K(0.0) + K(-e2)) / (e2 * e2)));

    const double e3 = 1e-3;
    worst_d3 = std::max(
        worst_d3, std::fabs(cumulant_d3(p, u, h, h, h) -
                            (K(2.0 * e3) - 2.0 * K(e3) + 2.0 * K(-e3) - K(-2.0 * e3)) /
                                (2.0 * e3 * e3 * e3)));

    // Second differential at u = 0 equals the covariance by direct summation.
    const FiberVector zero(p, Vec(n, 0.0));
    double m1 = 0.0, m2 = 0.0, m12 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      m1 += p[i] * h[i];
      m2 += p[i] * h2[i];
      m12 += p[i] * h[i] * h2[i];
    }
    const double dn = static_cast<double>(n);
    const double cov = m12 / dn - (m1 / dn) * (m2 / dn);
    worst_cov = std::max(worst_cov, std::fabs(cumulant_d2(p, zero, h, h2) - cov));
  }
  const std::string note = "200 instances, n in 2..8";
  SuiteResult s;
  s.name = "cumulant";
  s.checks.push_back(bounded("d1_vs_fd", worst_d1, 1e-8, note));
  s.checks.push_back(bounded("d2_vs_fd", worst_d2, 1e-6, note));
  s.checks.push_back(bounded("d3_vs_fd", worst_d3, 1e-4, note));
  s.checks.push_back(bounded("d2_at_zero_is_covariance", worst_cov, 1e-12, note));
  return s;
}

// ---------------------------------------------------------------------------
// fisher: information matrix against the chart pullback of the second
// differential of the log-normalizer.
// ---------------------------------------------------------------------------

SuiteResult suite_fisher(std::uint64_t seed) {
  std::mt19937_64 rng(seed + 0xf1);
  const int instances = 100;
  double worst = 0.0;
  for (int it = 0; it < instances; ++it) {
    const std::size_t n = 2 + static_cast<std::size_t>(it % 3);
    const ThetaCoordinates theta = random_theta(rng, n);
    const Density q = density_from_theta(theta);
    const double dn = static_cast<double>(n);

    // Pushforward of d/d theta_i into the fiber at q: the curve moves
    // probability mass from the last component to component i.
    std::vector<FiberVector> basis;
    basis.reserve(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      Vec u(n, 0.0);
      u[i] = dn / q[i];
      u[n - 1] = -dn / q[n - 1];
      basis.push_back(centered_at(q, std::move(u)));
    }

    const FiberVector zero(q, Vec(n, 0.0));
    const linalg::Matrix F = fisher_matrix(theta);
    for (std::size_t i = 0; i + 1 < n; ++i)
      for (std::size_t j = 0; j + 1 < n; ++j)
        worst = std::max(worst, std::fabs(cumulant_d2(q, zero, basis[i], basis[j]) - F(i, j)));
  }
  SuiteResult s;
  s.name = "fisher";
  s.checks.push_back(bounded("matrix_vs_chart_pullback", worst, 1e-8, "100 instances, n in 2..4"));
  return s;
}

// ---------------------------------------------------------------------------
// covariant: the two connections are conjugate for the duality pairing, and
// the metric acceleration is their mean.
// ---------------------------------------------------------------------------

SuiteResult suite_covariant(std::uint64_t seed) {
  std::mt19937_64 rng(seed + 0xd4);
  std::uniform_real_distribution<double> coeff(-0.4, 0.4);
  double worst_duality = 0.0;
  for (int it = 0; it < 25; ++it) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng() % 4);
    const Density q0 = random_density(rng, n, 0.5);
    const FiberVector w0 = random_fiber(rng, q0, 0.4);
    const SphereGeodesic curve(q0, w0);

    Vec v0r(n), v1r(n), z0r(n), z1r(n);
    for (std::size_t i = 0; i < n; ++i) {
      v0r[i] = coeff(rng);
      v1r[i] = coeff(rng);
      z0r[i] = coeff(rng);
      z1r[i] = coeff(rng);
    }

    const auto v_field = [&](const CurveJet2& jet, double t) {
      Vec raw(n);
      for (std::size_t i = 0; i < n; ++i) raw[i] = v0r[i] + t * v1r[i];
      return centered_at(jet.q(), std::move(raw));
    };
    const auto eta_field = [&](const CurveJet2& jet, double t) {
      Vec raw(n);
      for (std::size_t i = 0; i < n; ++i) raw[i] = z0r[i] + t * z1r[i];
      return centered_at(jet.q(), std::move(raw));
    };

    for (const double t : {0.15, 0.3, 0.45}) {
      const CurveJet2 jet = curve.jet(t);
      const Density& q = jet.q();
      const FiberVector star = velocity(jet);
      const FiberVector v = v_field(jet, t);
      const FiberVector eta = eta_field(jet, t);

      // Raw time derivative of the centered momentum field: the centering
      // term moves with the base density, d/dt E_q[z] = E_q[star z] + E_q[zdot].
      Vec z(n), star_z(n);
      for (std::size_t i = 0; i < n; ++i) {
        z[i] = z0r[i] + t * z1r[i];
        star_z[i] = star[i] * z[i];
      }
      const double sdot = expectation(q, star_z) + expectation(q, z1r);
      Vec etadot(n);
      for (std::size_t i = 0; i < n; ++i) etadot[i] = z1r[i] - sdot;

      const FiberVector dv = exp_covariant_derivative(q, v1r);
      const FiberVector deta = mix_covariant_derivative(q, star, eta.values(), etadot);

      const double eps = 1e-5;
      const CurveJet2 jp = curve.jet(t + eps);
      const CurveJet2 jm = curve.jet(t - eps);
      const double fd = (pairing(eta_field(jp, t + eps), v_field(jp, t + eps)) -
                         pairing(eta_field(jm, t - eps), v_field(jm, t - eps))) /
                        (2.0 * eps);
      worst_duality = std::max(worst_duality, std::fabs(fd - pairing(deta, v) - pairing(eta, dv)));
    }
  }

  std::mt19937_64 rng2(seed + 0xd5);
  double worst_mean = 0.0;
  for (int it = 0; it < 200; ++it) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng2() % 7);
    const Density q = random_density(rng2, n);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Vec qd(n), qdd(n);
    double md = 0.0, mdd = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      qd[i] = dist(rng2);
      qdd[i] = dist(rng2);
      md += qd[i];
      mdd += qdd[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      qd[i] -= md / static_cast<double>(n);
      qdd[i] -= mdd / static_cast<double>(n);
    }
    const CurveJet2 jet(q, qd, qdd);
    const FiberVector ae = exp_acceleration(jet);
    const FiberVector am = mix_acceleration(jet);
    const FiberVector ar = riemannian_acceleration(jet);
    for (std::size_t i = 0; i < n; ++i)
      worst_mean = std::max(worst_mean, std::fabs(ae[i] + am[i] - 2.0 * ar[i]));
  }

  SuiteResult s;
  s.name = "covariant";
  s.checks.push_back(bounded("pairing_product_rule", worst_duality, 1e-8,
                             "75 field evaluations along closed-form curves"));
  s.checks.push_back(bounded("metric_is_mean_connection", worst_mean, 1e-12, "200 random jets"));
  return s;
}

// ---------------------------------------------------------------------------
// gradients: natural gradients against finite differences and the pairing
// characterization.
// ---------------------------------------------------------------------------

SuiteResult suite_gradients(std::uint64_t seed) {
  std::mt19937_64 rng(seed + 0x9a);
  const auto entropy_fn = [](const Density& q) { return entropy(q); };

  double worst_entropy = 0.0, worst_pairing = 0.0;
  for (int it = 0; it < 30; ++it) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng() % 4);
    const Density q = random_density(rng, n);
    const FiberVector g = natural_grad_entropy(q);
    worst_entropy =
        std::max(worst_entropy, max_abs_diff(g.values(), fd_natural_gradient(entropy_fn, q).values()));

    const FiberVector h = random_fiber(rng, q);
    const double eps = 1e-5;
    const auto along = [&](double sgn) {
      Vec u(n);
      for (std::size_t i = 0; i < n; ++i) u[i] = sgn * eps * h[i];
      return entropy(patch_e(q, FiberVector(q, std::move(u))));
    };
    const double fd = (along(1.0) - along(-1.0)) / (2.0 * eps);
    worst_pairing = std::max(worst_pairing, std::fabs(fd - pairing(g, h)));
  }

  double worst_potential = 0.0;
  for (int it = 0; it < 10; ++it) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng() % 4);
    const Density q = random_density(rng, n);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Vec coeffs(n);
    for (double& x : coeffs) x = dist(rng);
    const Potential pots[] = {negentropy_potential(), linear_potential(coeffs),
                              kl_to_target_potential(random_density(rng, n))};
    for (const Potential& f : pots)
      worst_potential = std::max(
          worst_potential, max_abs_diff(f.grad(q).values(), fd_natural_gradient(f.value, q).values()));
  }

  const Density target = random_density(rng, 4);
  const double stationary = fiber_norm(kl_to_target_potential(target).grad(target));

  SuiteResult s;
  s.name = "gradients";
  s.checks.push_back(bounded("entropy_grad_vs_fd", worst_entropy, 1e-6, "30 instances"));
  s.checks.push_back(bounded("pairing_is_directional_derivative", worst_pairing, 1e-8, "30 instances"));
  s.checks.push_back(bounded("potential_grads_vs_fd", worst_potential, 1e-6,
                             "entropy-type, linear, and divergence-to-target potentials"));
  s.checks.push_back(bounded("divergence_grad_zero_at_target", stationary, 1e-12));
  return s;
}

// ---------------------------------------------------------------------------
// geodesic: free kinetic flow against the closed-form squared-circle curve.
// ---------------------------------------------------------------------------

SuiteResult suite_geodesic(std::uint64_t) {
  const Density q0({1.0, 1.0, 1.0});
  const FiberVector w0(q0, {-0.1, -0.4, 0.5});
  const SphereGeodesic oracle(q0, w0);

  const Flow flow = quadratic_el_field(1.0, 0.0);
  IntegratorConfig cfg;
  cfg.boundary_floor = 1e-3;
  const Trajectory traj = run_flow(flow, PhasePoint{q0, w0.values()}, 0.0, 5.0, 126, cfg);

  double worst_q = kInf, worst_v = kInf, worst_riem = kInf;
  const bool exited = traj.termination == Termination::boundary;
  if (exited && !traj.times.empty()) {
    worst_q = worst_v = 0.0;
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
      const CurveJet2 jet = oracle.jet(traj.times[i]);
      worst_q = std::max(worst_q, max_abs_diff(q_block(flow, traj.states[i]), jet.q().values()));
      worst_v = std::max(worst_v, max_abs_diff(aux_block(flow, traj.states[i]), velocity(jet).values()));
    }
    worst_riem = 0.0;
    for (const double t : uniform_times(0.0, traj.t_final, 50))
      worst_riem = std::max(worst_riem, fiber_norm(riemannian_acceleration(oracle.jet(t))));
  }

  SuiteResult s;
  s.name = "geodesic";
  CheckResult exit_check;
  exit_check.name = "stops_at_floor_0.001";
  exit_check.measured = exited ? 0.0 : 1.0;
  exit_check.bound = 0.5;
  exit_check.pass = exited;
  exit_check.note = exited ? "first crossing at t=" + fmt_g(traj.t_final)
                           : std::string("termination: ") + to_string(traj.termination);
  s.checks.push_back(exit_check);
  s.checks.push_back(bounded("density_vs_closed_form", worst_q, 1e-6,
                             "sampled every 0.04 until the floor crossing"));
  s.checks.push_back(bounded("velocity_vs_closed_form", worst_v, 1e-4));
  s.checks.push_back(bounded("metric_acceleration_of_oracle", worst_riem, 1e-10,
                             "50 times along the closed-form curve"));
  return s;
}

// ---------------------------------------------------------------------------
// expfamily: exponential-tilt curves are flat for the exponential connection
// and advance by the retraction.
// ---------------------------------------------------------------------------

SuiteResult suite_expfamily(std::uint64_t seed) {
  std::mt19937_64 rng(seed + 0xef);
  double worst_acc = 0.0, worst_shift = 0.0;
  for (int it = 0; it < 20; ++it) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng() % 5);
    const Density p = random_density(rng, n);
    const FiberVector u = random_fiber(rng, p, 0.8);
    for (int k = 0; k < 50; ++k) {
      const double t = -2.0 + 4.0 * static_cast<double>(k) / 49.0;
      const CurveJet2 jet = exp_family_geodesic(p, u, t);
      worst_acc = std::max(worst_acc, fiber_norm(exp_acceleration(jet)));
      worst_shift = std::max(worst_shift, max_abs_diff(chi_retraction(jet.q(), velocity(jet)).values(),
                                                       exp_family_geodesic(p, u, t + 1.0).q().values()));
    }
  }
  SuiteResult s;
  s.name = "expfamily";
  const std::string note = "20 instances x 50 times in [-2, 2]";
  s.checks.push_back(bounded("exp_acceleration_vanishes", worst_acc, 1e-10, note));
  s.checks.push_back(bounded("retraction_shifts_time_by_one", worst_shift, 1e-10, note));
  return s;
}

// ---------------------------------------------------------------------------
// conservation: autonomous Hamiltonian flows hold their energy.
// ---------------------------------------------------------------------------

CheckResult energy_drift_check(std::string name, const Flow& flow, const PhasePoint& start) {
  IntegratorConfig cfg;  // rtol 1e-10, atol 1e-12
  const Trajectory traj = run_flow(flow, start, 0.0, 1.0, 101, cfg);
  std::string note = "relative to the initial value over t in [0, 1]";
  if (!completed_or_note(traj, note)) return bounded(std::move(name), kInf, 1e-8, note);
  const double h0 = traj.diagnostics.front().energy.value();
  double drift = 0.0;
  for (const SampleDiagnostics& d : traj.diagnostics)
    drift = std::max(drift, std::fabs(d.energy.value() - h0));
  return bounded(std::move(name), drift / std::fabs(h0), 1e-8, note);
}

SuiteResult suite_conservation(std::uint64_t) {
  const Density q0({1.5, 0.9, 0.6});
  const Vec eta0{-0.03, -0.33, 0.57};
  SuiteResult s;
  s.name = "conservation";
  s.checks.push_back(energy_drift_check("quadratic_hamiltonian_energy",
                                        quadratic_hamilton_field(1.0, 0.5), PhasePoint{q0, eta0}));
  s.checks.push_back(
      energy_drift_check("kl_hamiltonian_energy",
                         kl_hamilton_field(1.0, 1.0, 1.0, negentropy_potential()), PhasePoint{q0, eta0}));
  return s;
}

// ---------------------------------------------------------------------------
// equivalence: velocity, momentum, and companion-density formulations trace
// the same base trajectory.
// ---------------------------------------------------------------------------

SuiteResult suite_equivalence(std::uint64_t) {
  const Density q0({1.0, 1.0, 1.0});
  const FiberVector v0(q0, {-0.1, -0.4, 0.5});
  const Potential f = negentropy_potential();

  const Flow el = kl_el_field(1.0, 1.0, 1.0, f);
  const Flow ham = kl_hamilton_field(1.0, 1.0, 1.0, f);
  const Flow rep = kl_replicator_field(1.0, 1.0, f);

  const FiberVector eta0 = kl_fiber_gradient(1.0, 1.0, q0, v0);
  const Density chi0 = chi_retraction(q0, v0);

  IntegratorConfig cfg;
  const std::size_t count = 51;
  const Trajectory t_el = run_flow(el, PhasePoint{q0, v0.values()}, 0.0, 1.0, count, cfg);
  const Trajectory t_ham = run_flow(ham, PhasePoint{q0, eta0.values()}, 0.0, 1.0, count, cfg);
  const Trajectory t_rep = run_flow(rep, PhasePoint{q0, chi0.values()}, 0.0, 1.0, count, cfg);

  double d_el_ham = kInf, d_el_rep = kInf, d_ham_rep = kInf;
  std::string note = "51 samples over t in [0, 1], a=b=c=1";
  if (completed_or_note(t_el, note) && completed_or_note(t_ham, note) &&
      completed_or_note(t_rep, note)) {
    d_el_ham = d_el_rep = d_ham_rep = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      const auto qe = q_block(el, t_el.states[i]);
      const auto qh = q_block(ham, t_ham.states[i]);
      const auto qr = q_block(rep, t_rep.states[i]);
      d_el_ham = std::max(d_el_ham, max_abs_diff(qe, qh));
      d_el_rep = std::max(d_el_rep, max_abs_diff(qe, qr));
      d_ham_rep = std::max(d_ham_rep, max_abs_diff(qh, qr));
    }
  }

  SuiteResult s;
  s.name = "equivalence";
  s.checks.push_back(bounded("velocity_vs_momentum", d_el_ham, 1e-6, note));
  s.checks.push_back(bounded("velocity_vs_companion", d_el_rep, 1e-6, note));
  s.checks.push_back(bounded("momentum_vs_companion", d_ham_rep, 1e-6, note));
  return s;
}

// ---------------------------------------------------------------------------
// entropyflow: the entropy ascent field against its closed form.
// ---------------------------------------------------------------------------

SuiteResult suite_entropyflow(std::uint64_t) {
  const Density q0({1.7, 0.8, 0.5});
  const Flow flow = entropy_flow_field();
  IntegratorConfig cfg;
  const Trajectory traj = run_flow(flow, PhasePoint{q0, {}}, 0.0, 2.0, 41, cfg);

  double worst = kInf, backslide = kInf;
  std::string note = "41 samples over t in [0, 2]";
  if (completed_or_note(traj, note)) {
    worst = 0.0;
    for (std::size_t i = 0; i < traj.times.size(); ++i)
      worst = std::max(worst, max_abs_diff(traj.states[i],
                                           entropy_flow_closed_form(q0, traj.times[i]).values()));
    backslide = 0.0;
    for (std::size_t i = 1; i < traj.diagnostics.size(); ++i)
      backslide = std::max(backslide, traj.diagnostics[i - 1].energy.value() -
                                          traj.diagnostics[i].energy.value());
  }

  SuiteResult s;
  s.name = "entropyflow";
  s.checks.push_back(bounded("trajectory_vs_closed_form", worst, 1e-8, note));
  s.checks.push_back(bounded("entropy_monotone", backslide, 1e-12, "largest decrease between samples"));
  return s;
}

// ---------------------------------------------------------------------------
// damped: the time-rescaled flow descends its objective while holding the
// bundle constraints, and the two damped formulations agree.
// ---------------------------------------------------------------------------

SuiteResult suite_damped(std::uint64_t) {
  const ScheduleABG sched{2.0, 0.5, 0.1};
  const Potential f = negentropy_potential();
  const Density q0 = Density::from_probabilities({0.5, 0.3, 0.2});
  const FiberVector v0 = centered_at(q0, {-0.03, -0.33, 0.57});
  const double t0 = sched.t0, t1 = 5.0;

  const Flow el = damped_kl_el_field(sched, f);
  IntegratorConfig cfg;
  const std::size_t count = 99;
  const Trajectory t_el = run_flow(el, PhasePoint{q0, v0.values()}, t0, t1, count, cfg);

  SuiteResult s;
  s.name = "damped";

  double mass_rate = kInf, centering = kInf, f_end = kInf;
  std::string note = "p=2, C=0.5, t in [0.1, 5]";
  if (completed_or_note(t_el, note)) {
    mass_rate = centering = 0.0;
    for (std::size_t i = 0; i < t_el.times.size(); ++i) {
      const double window = std::max(1.0, t_el.times[i] - t0);
      mass_rate = std::max(mass_rate, t_el.diagnostics[i].mass_drift / window);
      centering = std::max(centering, t_el.diagnostics[i].centering_drift);
    }
    f_end = f.value(Density(Vec(q_block(el, t_el.states.back()).begin(),
                                q_block(el, t_el.states.back()).end())));
  }
  s.checks.push_back(bounded("mass_drift_per_unit_time", mass_rate, 1e-9, note));
  s.checks.push_back(bounded("velocity_centering", centering, 1e-9, note));

  const double f_start = f.value(q0);
  s.checks.push_back(decrease("objective_decreased", f_end - f_start,
                              "final " + fmt_g(f_end) + " vs initial " + fmt_g(f_start)));

  // The undamped flow from the same data, run for the same flow time.
  const Flow plain = kl_el_field(1.0, 1.0, 1.0, f);
  const Trajectory t_plain = run_flow(plain, PhasePoint{q0, v0.values()}, 0.0, t1 - t0, 2, cfg);
  double f_plain = kInf;
  std::string plain_note;
  if (completed_or_note(t_plain, plain_note))
    f_plain = f.value(Density(Vec(q_block(plain, t_plain.states.back()).begin(),
                                  q_block(plain, t_plain.states.back()).end())));
  s.checks.push_back(decrease("beats_undamped_flow", f_end - f_plain,
                              "damped " + fmt_g(f_end) + " vs undamped " + fmt_g(f_plain) +
                                  " after equal flow time"));

  const Flow ham = damped_kl_hamilton_field(sched, f);
  const FiberVector eta0 = damped_momentum(sched, t0, q0, v0);
  const Trajectory t_ham = run_flow(ham, PhasePoint{q0, eta0.values()}, t0, t1, count, cfg);
  double dev = kInf;
  std::string ham_note = "momentum start mapped from the velocity start";
  if (t_el.termination == Termination::completed && completed_or_note(t_ham, ham_note)) {
    dev = 0.0;
    for (std::size_t i = 0; i < count; ++i)
      dev = std::max(dev, max_abs_diff(q_block(el, t_el.states[i]), q_block(ham, t_ham.states[i])));
  }
  s.checks.push_back(bounded("momentum_matches_velocity_form", dev, 1e-6, ham_note));
  return s;
}

// ---------------------------------------------------------------------------
// limits: the small-chart-scale limit of the kinetic term and of the full
// Lagrangian gradient.
// ---------------------------------------------------------------------------

SuiteResult suite_limits(std::uint64_t seed) {
  std::mt19937_64 rng(seed + 0x1c);
  const double b = 0.7, c = 2.0, step = 1e-3;
  const Potential none = zero_potential();

  const auto kinetic_norm = [&](double a, const Density& q, const FiberVector& w) {
    const auto F = [&](const Density& qt) {
      return kl_lagrangian_value(a, b, c, qt, e_transport(w, qt), none);
    };
    return fiber_norm(fd_natural_gradient(F, q, step));
  };

  double worst_small = 0.0, worst_mid = 0.0, sum_lo = 0.0, sum_hi = 0.0;
  double worst_full = 0.0;
  const int instances = 20;
  for (int it = 0; it < instances; ++it) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng() % 3);
    const Density q = random_density(rng, n);
    const FiberVector w = random_fiber(rng, q, 0.5);

    worst_small = std::max(worst_small, kinetic_norm(1e-6, q, w));
    worst_mid = std::max(worst_mid, kinetic_norm(1e-4, q, w));
    // Decay rate measured between scales where the difference quotients are
    // well above rounding noise.
    sum_lo += kinetic_norm(1e-5, q, w);
    sum_hi += kinetic_norm(1e-3, q, w);

    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Vec coeffs(n);
    for (double& x : coeffs) x = dist(rng);
    const Potential f = (it % 3 == 0) ? linear_potential(coeffs) : negentropy_potential();
    const double a = 1e-6;
    const auto F = [&](const Density& qt) {
      return kl_lagrangian_value(a, b, 1.0 / b, qt, e_transport(w, qt), f);
    };
    const FiberVector g = fd_natural_gradient(F, q, step);
    const FiberVector gf = f.grad(q);
    Vec resid(n);
    for (std::size_t i = 0; i < n; ++i) resid[i] = g[i] + gf[i];
    worst_full = std::max(worst_full, fiber_norm(centered_at(q, std::move(resid))));
  }

  SuiteResult s;
  s.name = "limits";
  s.checks.push_back(bounded("kinetic_grad_at_1e-6", worst_small / c, 1e-5,
                             "norm scaled by c over 20 instances"));
  s.checks.push_back(bounded("kinetic_grad_at_1e-4", worst_mid / c, 1e-3,
                             "same construction at the larger chart scale"));
  s.checks.push_back(within("kinetic_grad_linear_decay", sum_hi / sum_lo, 60.0, 140.0,
                            "mean norm ratio between chart scales 1e-3 and 1e-5"));
  s.checks.push_back(bounded("full_grad_plus_potential_grad", worst_full, 1e-4,
                             "c = 1/b makes the limit the pure descent direction"));
  return s;
}

// ---------------------------------------------------------------------------
// integrator: fixed-step fourth-order convergence against both closed forms.
// ---------------------------------------------------------------------------

SuiteResult suite_integrator(std::uint64_t) {
  const double hs[] = {0.1, 0.05, 0.025};

  const Density q0({1.0, 1.0, 1.0});
  const FiberVector w0(q0, {-0.1, -0.4, 0.5});
  const SphereGeodesic oracle(q0, w0);
  const Flow free_flow = quadratic_el_field(1.0, 0.0);
  const std::vector<double> sphere_times = uniform_times(0.0, 1.6, 9);

  double sphere_err[3] = {};
  for (int k = 0; k < 3; ++k) {
    IntegratorConfig cfg;
    cfg.method = Method::rk4_fixed;
    cfg.step = hs[k];
    const Trajectory traj = integrate(free_flow, pack_state(free_flow, PhasePoint{q0, w0.values()}),
                                      0.0, 1.6, sphere_times, cfg);
    double err = 0.0;
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
      const CurveJet2 jet = oracle.jet(traj.times[i]);
      err = std::max(err, max_abs_diff(q_block(free_flow, traj.states[i]), jet.q().values()));
      err = std::max(err, max_abs_diff(aux_block(free_flow, traj.states[i]), velocity(jet).values()));
    }
    sphere_err[k] = err;
  }

  const Density e0({1.7, 0.8, 0.5});
  const Flow ent = entropy_flow_field();
  const std::vector<double> ent_times = uniform_times(0.0, 2.0, 11);
  double ent_err[3] = {};
  for (int k = 0; k < 3; ++k) {
    IntegratorConfig cfg;
    cfg.method = Method::rk4_fixed;
    cfg.step = hs[k];
    const Trajectory traj = integrate(ent, e0.values(), 0.0, 2.0, ent_times, cfg);
    double err = 0.0;
    for (std::size_t i = 0; i < traj.times.size(); ++i)
      err = std::max(err, max_abs_diff(traj.states[i],
                                       entropy_flow_closed_form(e0, traj.times[i]).values()));
    ent_err[k] = err;
  }

  SuiteResult s;
  s.name = "integrator";
  s.checks.push_back(within("free_flow_halving_0.1_to_0.05", sphere_err[0] / sphere_err[1], 12.0, 20.0));
  s.checks.push_back(
      within("free_flow_halving_0.05_to_0.025", sphere_err[1] / sphere_err[2], 12.0, 20.0));
  s.checks.push_back(within("entropy_flow_halving_0.1_to_0.05", ent_err[0] / ent_err[1], 12.0, 20.0));
  s.checks.push_back(
      within("entropy_flow_halving_0.05_to_0.025", ent_err[1] / ent_err[2], 12.0, 20.0));
  return s;
}

using SuiteFn = SuiteResult (*)(std::uint64_t);

const std::vector<std::pair<std::string, SuiteFn>>& registry() {
  static const std::vector<std::pair<std::string, SuiteFn>> table = {
      {"transports", suite_transports}, {"cumulant", suite_cumulant},
      {"fisher", suite_fisher},         {"covariant", suite_covariant},
      {"gradients", suite_gradients},   {"geodesic", suite_geodesic},
      {"expfamily", suite_expfamily},   {"conservation", suite_conservation},
      {"equivalence", suite_equivalence}, {"entropyflow", suite_entropyflow},
      {"damped", suite_damped},         {"limits", suite_limits},
      {"integrator", suite_integrator},
  };
  return table;
}

}  // namespace

bool SuiteResult::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

const CheckResult& SuiteResult::worst() const {
  if (checks.empty()) throw std::logic_error("SuiteResult::worst: empty suite");
  const CheckResult* pick = &checks.front();
  double ratio = -1.0;
  for (const CheckResult& c : checks) {
    const double r = !c.pass ? kInf : (c.bound > 0.0 ? c.measured / c.bound : 0.0);
    if (r > ratio) {
      ratio = r;
      pick = &c;
    }
  }
  return *pick;
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, fn] : registry()) out.push_back(name);
    return out;
  }();
  return names;
}

SuiteResult run_suite(const std::string& name, std::uint64_t seed) {
  for (const auto& [key, fn] : registry())
    if (key == name) return fn(seed);
  throw std::invalid_argument("unknown verification suite: " + name);
}

std::vector<SuiteResult> run_all(std::uint64_t seed) {
  std::vector<SuiteResult> out;
  out.reserve(registry().size());
  for (const auto& [name, fn] : registry()) out.push_back(fn(seed));
  return out;
}

}  // namespace statbundle::verify
