#include "statbundle/mechanics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>

#include "statbundle/cumulant.hpp"

namespace statbundle {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void fill_nan(std::span<double> out) {
  std::fill(out.begin(), out.end(), kNaN);
}

double expect_raw(std::span<const double> q, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) s += q[i] * x[i];
  return s / static_cast<double>(q.size());
}

/** log E_q[exp u] on raw blocks; non-finite inputs yield a non-finite result. */
double log_mean_exp_raw(std::span<const double> q, std::span<const double> u) {
  double shift = -std::numeric_limits<double>::infinity();
  for (double v : u) {
    if (v > shift) shift = v;
  }
  if (!std::isfinite(shift)) return kNaN;
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) s += q[i] * std::exp(u[i] - shift);
  return shift + std::log(s / static_cast<double>(q.size()));
}

/**
 * Centered potential gradient evaluated on a raw density block. Returns false
 * when the block is not a valid density (the caller then emits NaN so an
 * adaptive integrator rejects the trial step).
 */
bool potential_grad_raw(const Potential& f, std::span<const double> q, Vec& out) {
  try {
    Density qd(Vec(q.begin(), q.end()));
    out = f.grad(qd).values();
    return true;
  } catch (...) {
    return false;
  }
}

double potential_value_raw(const Potential& f, std::span<const double> q) {
  try {
    return f.value(Density(Vec(q.begin(), q.end())));
  } catch (...) {
    return kNaN;
  }
}

void require_same_base(const Density& q, const FiberVector& v, const char* what) {
  if (v.base().values() != q.values()) {
    throw std::invalid_argument(std::string(what) + ": fiber vector is attached at a different density");
  }
}

void require_positive(double x, const char* name) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw std::invalid_argument(std::string(name) + " must be positive and finite");
  }
}

Vec scaled(const Vec& x, double s) {
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = s * x[i];
  return out;
}

void require_exponent_bound(const Vec& u, const char* what) {
  for (double v : u) {
    if (!(std::abs(v) <= kMaxExponent)) {
      throw std::domain_error(std::string(what) + ": exponent exceeds the overflow guard");
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// ScheduleABG

double ScheduleABG::alpha(double t) const { return std::log(p) - std::log(t); }
double ScheduleABG::beta(double t) const { return p * std::log(t) + std::log(C); }
double ScheduleABG::gamma(double t) const { return p * std::log(t); }
double ScheduleABG::exp_alpha(double t) const { return p / t; }
double ScheduleABG::a_of(double t) const { return t / p; }
double ScheduleABG::c_of(double t) const { return std::pow(t, p); }
double ScheduleABG::damping(double t) const { return (p + 1.0) / t; }
double ScheduleABG::forcing(double t) const { return C * p * p * std::pow(t, p - 2.0); }
double ScheduleABG::hamilton_forcing(double t) const { return C * p * std::pow(t, 2.0 * p - 1.0); }
double ScheduleABG::energy_scale(double t) const { return p * std::pow(t, p - 1.0); }

void ScheduleABG::validate() const {
  require_positive(p, "schedule exponent p");
  require_positive(C, "schedule amplitude C");
  require_positive(t0, "schedule start time t0");
}

// ---------------------------------------------------------------------------
// SystemKind / SystemSpec

const char* to_string(SystemKind kind) {
  switch (kind) {
    case SystemKind::quadratic_lagrangian: return "quadratic_lagrangian";
    case SystemKind::quadratic_hamiltonian: return "quadratic_hamiltonian";
    case SystemKind::kl_lagrangian: return "kl_lagrangian";
    case SystemKind::kl_hamiltonian: return "kl_hamiltonian";
    case SystemKind::kl_replicator: return "kl_replicator";
    case SystemKind::damped_kl_lagrangian: return "damped_kl_lagrangian";
    case SystemKind::damped_kl_hamiltonian: return "damped_kl_hamiltonian";
    case SystemKind::entropy_gradient_flow: return "entropy_gradient_flow";
  }
  return "unknown";
}

std::optional<SystemKind> system_kind_from_string(const std::string& name) {
  static const std::pair<const char*, SystemKind> table[] = {
      {"quadratic_lagrangian", SystemKind::quadratic_lagrangian},
      {"quadratic_hamiltonian", SystemKind::quadratic_hamiltonian},
      {"kl_lagrangian", SystemKind::kl_lagrangian},
      {"kl_hamiltonian", SystemKind::kl_hamiltonian},
      {"kl_replicator", SystemKind::kl_replicator},
      {"damped_kl_lagrangian", SystemKind::damped_kl_lagrangian},
      {"damped_kl_hamiltonian", SystemKind::damped_kl_hamiltonian},
      {"entropy_gradient_flow", SystemKind::entropy_gradient_flow},
  };
  for (const auto& [key, kind] : table) {
    if (name == key) return kind;
  }
  return std::nullopt;
}

bool SystemSpec::is_lagrangian() const {
  return kind == SystemKind::quadratic_lagrangian || kind == SystemKind::kl_lagrangian ||
         kind == SystemKind::damped_kl_lagrangian;
}

bool SystemSpec::is_hamiltonian() const {
  return kind == SystemKind::quadratic_hamiltonian || kind == SystemKind::kl_hamiltonian ||
         kind == SystemKind::damped_kl_hamiltonian;
}

void SystemSpec::validate() const {
  const bool uses_potential = kind == SystemKind::kl_lagrangian || kind == SystemKind::kl_hamiltonian ||
                              kind == SystemKind::kl_replicator ||
                              kind == SystemKind::damped_kl_lagrangian ||
                              kind == SystemKind::damped_kl_hamiltonian;
  switch (kind) {
    case SystemKind::quadratic_lagrangian:
    case SystemKind::quadratic_hamiltonian:
      require_positive(mass, "mass");
      if (!(kappa >= 0.0) || !std::isfinite(kappa)) {
        throw std::invalid_argument("kappa must be nonnegative and finite");
      }
      break;
    case SystemKind::kl_lagrangian:
    case SystemKind::kl_hamiltonian:
      require_positive(a, "parameter a");
      require_positive(b, "parameter b");
      require_positive(c, "parameter c");
      break;
    case SystemKind::kl_replicator:
      require_positive(a, "parameter a");
      require_positive(b, "parameter b");
      break;
    case SystemKind::damped_kl_lagrangian:
    case SystemKind::damped_kl_hamiltonian:
      schedule.validate();
      break;
    case SystemKind::entropy_gradient_flow:
      break;
  }
  if (uses_potential && (!potential.value || !potential.grad)) {
    throw std::invalid_argument("system kind requires a potential with value and gradient");
  }
}

// ---------------------------------------------------------------------------
// Field builders

Flow quadratic_el_field(double mass, double kappa) {
  require_positive(mass, "mass");
  Flow flow;
  flow.kind = SystemKind::quadratic_lagrangian;
  flow.name = to_string(flow.kind);
  flow.slices = 2;
  flow.q_slice = 0;
  flow.aux_slice = 1;
  const double ratio = kappa / mass;
  flow.rhs = [ratio, kappa](double, std::span<const double> y, std::span<double> dy) {
    const std::size_t n = y.size() / 2;
    const auto q = y.first(n);
    const auto v = y.subspan(n);
    double eb = 0.0;  // E_q[v^2/2 - ratio log q]
    for (std::size_t i = 0; i < n; ++i) {
      const double bi = 0.5 * v[i] * v[i] - (kappa == 0.0 ? 0.0 : ratio * std::log(q[i]));
      eb += q[i] * bi;
    }
    eb /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      dy[i] = q[i] * v[i];
      const double ai = 0.5 * v[i] * v[i] + (kappa == 0.0 ? 0.0 : ratio * std::log(q[i]));
      dy[n + i] = -ai - eb;
    }
  };
  flow.energy = [mass, kappa](double, std::span<const double> y) {
    const std::size_t n = y.size() / 2;
    const auto q = y.first(n);
    const auto v = y.subspan(n);
    double kin = 0.0, pot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      kin += q[i] * v[i] * v[i];
      if (kappa != 0.0) pot += q[i] * std::log(q[i]);
    }
    return 0.5 * mass * kin / static_cast<double>(n) + kappa * pot / static_cast<double>(n);
  };
  flow.lagrangian = [mass, kappa](double, std::span<const double> y) {
    const std::size_t n = y.size() / 2;
    const auto q = y.first(n);
    const auto v = y.subspan(n);
    double kin = 0.0, pot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      kin += q[i] * v[i] * v[i];
      if (kappa != 0.0) pot += q[i] * std::log(q[i]);
    }
    return 0.5 * mass * kin / static_cast<double>(n) - kappa * pot / static_cast<double>(n);
  };
  return flow;
}

Flow quadratic_hamilton_field(double mass, double kappa) {
  require_positive(mass, "mass");
  Flow flow;
  flow.kind = SystemKind::quadratic_hamiltonian;
  flow.name = to_string(flow.kind);
  flow.slices = 2;
  flow.q_slice = 0;
  flow.aux_slice = 1;
  flow.rhs = [mass, kappa](double, std::span<const double> y, std::span<double> dy) {
    const std::size_t n = y.size() / 2;
    const auto q = y.first(n);
    const auto eta = y.subspan(n);
    double ee2 = 0.0, elq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ee2 += q[i] * eta[i] * eta[i];
      if (kappa != 0.0) elq += q[i] * std::log(q[i]);
    }
    ee2 /= static_cast<double>(n);
    elq /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      dy[i] = q[i] * eta[i] / mass;
      double force = 0.0;
      if (kappa != 0.0) force = kappa * (std::log(q[i]) - elq);
      dy[n + i] = -(eta[i] * eta[i] + ee2) / (2.0 * mass) - force;
    }
  };
  flow.energy = [mass, kappa](double, std::span<const double> y) {
    const std::size_t n = y.size() / 2;
    const auto q = y.first(n);
    const auto eta = y.subspan(n);
    double kin = 0.0, pot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      kin += q[i] * eta[i] * eta[i];
      if (kappa != 0.0) pot += q[i] * std::log(q[i]);
    }
    return kin / (2.0 * mass * static_cast<double>(n)) + kappa * pot / static_cast<double>(n);
  };
  return flow;
}

Flow kl_el_field(double a, double b, double c, Potential f) {
  require_positive(a, "parameter a");
  require_positive(b, "parameter b");
  require_positive(c, "parameter c");
  Flow flow;
  flow.kind = SystemKind::kl_lagrangian;
  flow.name = to_string(flow.kind);
  flow.slices = 2;
  flow.q_slice = 0;
  flow.aux_slice = 1;
  flow.rhs = [a, b, f](double, std::span<const double> y, std::span<double> dy) {
    const std::size_t n = y.size() / 2;
    const auto q = y.first(n);
    const auto v = y.subspan(n);
    Vec g;
    if (!potential_grad_raw(f, q, g)) {
      fill_nan(dy);
      return;
    }
    Vec u(n);
    for (std::size_t i = 0; i < n; ++i) u[i] = a * v[i];
    const double K = log_mean_exp_raw(q, u);
    Vec tilt(n), tg(n);
    for (std::size_t i = 0; i < n; ++i) {
      tilt[i] = std::exp(K - u[i]);  // e^{K_q(av)} e^{-a v}
      tg[i] = tilt[i] * g[i];
    }
    const double et = expect_raw(q, tilt);
    const double etg = expect_raw(q, tg);
    double ev2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) ev2 += q[i] * v[i] * v[i];
    ev2 /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      dy[i] = q[i] * v[i];
      dy[n + i] = -v[i] / a - ev2 - (tilt[i] - et) / (a * a) - (b / a) * (tg[i] - etg);
    }
  };
  flow.energy = [a, b, c, f](double, std::span<const double> y) {
    const std::size_t n = y.size() / 2;
    const auto q = y.first(n);
    const auto v = y.subspan(n);
    Vec u(n);
    for (std::size_t i = 0; i < n; ++i) u[i] = a * v[i];
    const double K = log_mean_exp_raw(q, u);
    double dual = 0.0;  // kl(e_q(av), q) = E_q[e^{av-K} (av - K)]
    for (std::size_t i = 0; i < n; ++i) dual += q[i] * std::exp(u[i] - K) * (u[i] - K);
    dual /= static_cast<double>(n);
    return c * (dual / a + b * potential_value_raw(f, q));
  };
  flow.lagrangian = [a, b, c, f](double, std::span<const double> y) {
    const std::size_t n = y.size() / 2;
    const auto q = y.first(n);
    const auto v = y.subspan(n);
    Vec u(n);
    for (std::size_t i = 0; i < n; ++i) u[i] = a * v[i];
    const double K = log_mean_exp_raw(q, u);
    return c * (K / a - b * potential_value_raw(f, q));
  };
  return flow;
}

Flow kl_hamilton_field(double a, double b, double c, Potential f) {
  require_positive(a, "parameter a");
  require_positive(b, "parameter b");
  require_positive(c, "parameter c");
  Flow flow;
  flow.kind = SystemKind::kl_hamiltonian;
  flow.name = to_string(flow.kind);
  flow.slices = 2;
  flow.q_slice = 0;
  flow.aux_slice = 1;
  flow.rhs = [a, b, c, f](double, std::span<const double> y, std::span<double> dy) {
    const std::size_t n = y.size() / 2;
    const auto q = y.first(n);
    const auto eta = y.subspan(n);
    Vec g;
    if (!potential_grad_raw(f, q, g)) {
      fill_nan(dy);
      return;
    }
    Vec phi(n), ell(n);
    for (std::size_t i = 0; i < n; ++i) {
      phi[i] = 1.0 + eta[i] / c;
      ell[i] = std::log(phi[i]);
    }
    const double eell = expect_raw(q, ell);
    for (std::size_t i = 0; i < n; ++i) {
      const double centered = ell[i] - eell;
      dy[i] = q[i] * centered / a;
      dy[n + i] = eta[i] / a - (c / a) * phi[i] * centered - c * b * g[i];
    }
  };
  flow.energy = [a, b, c, f](double, std::span<const double> y) {
    const std::size_t n = y.size() / 2;
    const auto q = y.first(n);
    const auto eta = y.subspan(n);
    double dual = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double phi = 1.0 + eta[i] / c;
      dual += q[i] * phi * std::log(phi);
    }
    dual /= static_cast<double>(n);
    return c * (dual / a + b * potential_value_raw(f, q));
  };
  return flow;
}

Flow kl_replicator_field(double a, double b, Potential f) {
  require_positive(a, "parameter a");
  require_positive(b, "parameter b");
  Flow flow;
  flow.kind = SystemKind::kl_replicator;
  flow.name = to_string(flow.kind);
  flow.slices = 2;
  flow.q_slice = 1;   // state is (chi, q)
  flow.aux_slice = 0;
  flow.aux_is_density = true;
  flow.rhs = [a, b, f](double, std::span<const double> y, std::span<double> dy) {
    const std::size_t n = y.size() / 2;
    const auto chi = y.first(n);
    const auto q = y.subspan(n);
    Vec g;
    if (!potential_grad_raw(f, q, g)) {
      fill_nan(dy);
      return;
    }
    Vec r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = std::log(chi[i] / q[i]);
    const double er = expect_raw(q, r);
    for (std::size_t i = 0; i < n; ++i) {
      dy[i] = (chi[i] - q[i]) / a - b * q[i] * g[i];
      dy[n + i] = q[i] * (r[i] - er) / a;
    }
  };
  flow.energy = [a, b, f](double, std::span<const double> y) {
    const std::size_t n = y.size() / 2;
    const auto chi = y.first(n);
    const auto q = y.subspan(n);
    double dual = 0.0;  // kl(chi, q)
    for (std::size_t i = 0; i < n; ++i) dual += chi[i] * std::log(chi[i] / q[i]);
    dual /= static_cast<double>(n);
    return dual / a + b * potential_value_raw(f, q);
  };
  return flow;
}

Flow damped_kl_el_field(ScheduleABG schedule, Potential f) {
  schedule.validate();
  Flow flow;
  flow.kind = SystemKind::damped_kl_lagrangian;
  flow.name = to_string(flow.kind);
  flow.slices = 2;
  flow.q_slice = 0;
  flow.aux_slice = 1;
  flow.start_floor = schedule.t0;
  flow.rhs = [schedule, f](double t, std::span<const double> y, std::span<double> dy) {
    if (t < schedule.t0 * (1.0 - 1e-12)) {
      throw std::domain_error("damped field evaluated before its start time t0");
    }
    const std::size_t n = y.size() / 2;
    const auto q = y.first(n);
    const auto v = y.subspan(n);
    Vec g;
    if (!potential_grad_raw(f, q, g)) {
      fill_nan(dy);
      return;
    }
    const double at = schedule.a_of(t);
    Vec u(n);
    for (std::size_t i = 0; i < n; ++i) u[i] = at * v[i];
    const double K = log_mean_exp_raw(q, u);
    Vec tg(n);
    for (std::size_t i = 0; i < n; ++i) tg[i] = std::exp(K - u[i]) * g[i];
    const double etg = expect_raw(q, tg);
    double ev2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) ev2 += q[i] * v[i] * v[i];
    ev2 /= static_cast<double>(n);
    const double damp = schedule.damping(t);
    const double force = schedule.forcing(t);
    for (std::size_t i = 0; i < n; ++i) {
      dy[i] = q[i] * v[i];
      dy[n + i] = -damp * v[i] - ev2 - force * (tg[i] - etg);
    }
  };
  flow.energy = [schedule, f](double t, std::span<const double> y) {
    const std::size_t n = y.size() / 2;
    const auto q = y.first(n);
    const auto v = y.subspan(n);
    const double at = schedule.a_of(t);
    Vec u(n);
    for (std::size_t i = 0; i < n; ++i) u[i] = at * v[i];
    const double K = log_mean_exp_raw(q, u);
    double dual = 0.0;
    for (std::size_t i = 0; i < n; ++i) dual += q[i] * std::exp(u[i] - K) * (u[i] - K);
    dual /= static_cast<double>(n);
    return schedule.energy_scale(t) * dual + schedule.hamilton_forcing(t) * potential_value_raw(f, q);
  };
  flow.lagrangian = [schedule, f](double t, std::span<const double> y) {
    const std::size_t n = y.size() / 2;
    const auto q = y.first(n);
    const auto v = y.subspan(n);
    const double at = schedule.a_of(t);
    Vec u(n);
    for (std::size_t i = 0; i < n; ++i) u[i] = at * v[i];
    const double K = log_mean_exp_raw(q, u);
    return schedule.energy_scale(t) * K - schedule.hamilton_forcing(t) * potential_value_raw(f, q);
  };
  return flow;
}

Flow damped_kl_hamilton_field(ScheduleABG schedule, Potential f) {
  schedule.validate();
  Flow flow;
  flow.kind = SystemKind::damped_kl_hamiltonian;
  flow.name = to_string(flow.kind);
  flow.slices = 2;
  flow.q_slice = 0;
  flow.aux_slice = 1;
  flow.start_floor = schedule.t0;
  flow.rhs = [schedule, f](double t, std::span<const double> y, std::span<double> dy) {
    if (t < schedule.t0 * (1.0 - 1e-12)) {
      throw std::domain_error("damped field evaluated before its start time t0");
    }
    const std::size_t n = y.size() / 2;
    const auto q = y.first(n);
    const auto eta = y.subspan(n);
    Vec g;
    if (!potential_grad_raw(f, q, g)) {
      fill_nan(dy);
      return;
    }
    const double inv_a = schedule.exp_alpha(t);
    const double ct = schedule.c_of(t);
    const double cb = schedule.hamilton_forcing(t);
    Vec phi(n), ell(n);
    for (std::size_t i = 0; i < n; ++i) {
      phi[i] = 1.0 + eta[i] / ct;
      ell[i] = std::log(phi[i]);
    }
    const double eell = expect_raw(q, ell);
    for (std::size_t i = 0; i < n; ++i) {
      const double centered = ell[i] - eell;
      dy[i] = inv_a * q[i] * centered;
      dy[n + i] = inv_a * eta[i] - inv_a * ct * phi[i] * centered - cb * g[i];
    }
  };
  flow.energy = [schedule, f](double t, std::span<const double> y) {
    const std::size_t n = y.size() / 2;
    const auto q = y.first(n);
    const auto eta = y.subspan(n);
    const double ct = schedule.c_of(t);
    double dual = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double phi = 1.0 + eta[i] / ct;
      dual += q[i] * phi * std::log(phi);
    }
    dual /= static_cast<double>(n);
    return schedule.energy_scale(t) * dual + schedule.hamilton_forcing(t) * potential_value_raw(f, q);
  };
  return flow;
}

Flow entropy_flow_field() {
  Flow flow;
  flow.kind = SystemKind::entropy_gradient_flow;
  flow.name = to_string(flow.kind);
  flow.slices = 1;
  flow.q_slice = 0;
  flow.aux_slice = -1;
  flow.rhs = [](double, std::span<const double> y, std::span<double> dy) {
    const std::size_t n = y.size();
    Vec lq(n);
    for (std::size_t i = 0; i < n; ++i) lq[i] = std::log(y[i]);
    const double elq = expect_raw(y, lq);
    for (std::size_t i = 0; i < n; ++i) dy[i] = -y[i] * (lq[i] - elq);
  };
  flow.energy = [](double, std::span<const double> y) {
    double s = 0.0;
    for (double q : y) s += q * std::log(q);
    return -s / static_cast<double>(y.size());
  };
  return flow;
}

Flow make_flow(const SystemSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case SystemKind::quadratic_lagrangian:
      return quadratic_el_field(spec.mass, spec.kappa);
    case SystemKind::quadratic_hamiltonian:
      return quadratic_hamilton_field(spec.mass, spec.kappa);
    case SystemKind::kl_lagrangian:
      return kl_el_field(spec.a, spec.b, spec.c, spec.potential);
    case SystemKind::kl_hamiltonian:
      return kl_hamilton_field(spec.a, spec.b, spec.c, spec.potential);
    case SystemKind::kl_replicator:
      return kl_replicator_field(spec.a, spec.b, spec.potential);
    case SystemKind::damped_kl_lagrangian:
      return damped_kl_el_field(spec.schedule, spec.potential);
    case SystemKind::damped_kl_hamiltonian:
      return damped_kl_hamilton_field(spec.schedule, spec.potential);
    case SystemKind::entropy_gradient_flow:
      return entropy_flow_field();
  }
  throw std::invalid_argument("unknown system kind");
}

// ---------------------------------------------------------------------------
// State packing

Vec pack_state(const Flow& flow, const PhasePoint& state) {
  const std::size_t n = state.q.size();
  if (flow.aux_slice < 0) {
    if (!state.aux.empty()) {
      throw std::invalid_argument("first-order flow takes no companion variable");
    }
    return state.q.values();
  }
  if (state.aux.size() != n) {
    throw std::invalid_argument("companion variable length differs from the density length");
  }
  Vec y(2 * n);
  std::copy(state.q.values().begin(), state.q.values().end(),
            y.begin() + static_cast<std::ptrdiff_t>(flow.q_slice) * static_cast<std::ptrdiff_t>(n));
  std::copy(state.aux.begin(), state.aux.end(),
            y.begin() + static_cast<std::ptrdiff_t>(flow.aux_slice) * static_cast<std::ptrdiff_t>(n));
  return y;
}

PhasePoint unpack_state(const Flow& flow, std::span<const double> y) {
  if (flow.slices <= 0 || y.size() % static_cast<std::size_t>(flow.slices) != 0) {
    throw std::invalid_argument("state length is not a multiple of the slice count");
  }
  const std::size_t n = y.size() / static_cast<std::size_t>(flow.slices);
  const auto qb = y.subspan(static_cast<std::size_t>(flow.q_slice) * n, n);
  Vec aux;
  if (flow.aux_slice >= 0) {
    const auto ab = y.subspan(static_cast<std::size_t>(flow.aux_slice) * n, n);
    aux.assign(ab.begin(), ab.end());
  }
  return PhasePoint{Density(Vec(qb.begin(), qb.end())), std::move(aux)};
}

PhasePoint normalize_initial_state(const SystemSpec& spec, double t_start, const PhasePoint& state) {
  spec.validate();
  const bool damped =
      spec.kind == SystemKind::damped_kl_lagrangian || spec.kind == SystemKind::damped_kl_hamiltonian;
  if (damped && t_start < spec.schedule.t0 * (1.0 - 1e-12)) {
    throw std::invalid_argument("start time lies before the schedule's t0");
  }
  const bool uses_potential = spec.kind != SystemKind::quadratic_lagrangian &&
                              spec.kind != SystemKind::quadratic_hamiltonian &&
                              spec.kind != SystemKind::entropy_gradient_flow;
  if (uses_potential) {
    try {
      (void)spec.potential.value(state.q);
      (void)spec.potential.grad(state.q);
    } catch (const std::exception& e) {
      throw std::invalid_argument(std::string("potential rejects the initial density: ") + e.what());
    }
  }

  if (spec.kind == SystemKind::entropy_gradient_flow) {
    if (!state.aux.empty()) {
      throw std::invalid_argument("entropy_gradient_flow takes no companion variable");
    }
    return PhasePoint{state.q, {}};
  }
  if (spec.kind == SystemKind::kl_replicator) {
    try {
      Density chi(state.aux);  // validates positivity and mass
      return PhasePoint{state.q, chi.values()};
    } catch (const std::exception& e) {
      throw std::invalid_argument(std::string("companion density is invalid: ") + e.what());
    }
  }

  FiberVector aux(state.q, state.aux);  // validates length and centering
  if (spec.is_hamiltonian() && spec.kind != SystemKind::quadratic_hamiltonian) {
    const double c_now =
        spec.kind == SystemKind::kl_hamiltonian ? spec.c : spec.schedule.c_of(t_start);
    for (double e : aux.values()) {
      if (!(1.0 + e / c_now > 0.0)) {
        throw std::invalid_argument("momentum lies outside the admissible cone 1 + eta/c > 0");
      }
    }
  }
  return PhasePoint{state.q, aux.values()};
}

// ---------------------------------------------------------------------------
// Scalar values and fiber maps

double quadratic_lagrangian_value(double mass, double kappa, const Density& q, const FiberVector& w) {
  require_positive(mass, "mass");
  require_same_base(q, w, "quadratic_lagrangian_value");
  double kin = 0.0, pot = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    kin += q[i] * w[i] * w[i];
    if (kappa != 0.0) pot += q[i] * std::log(q[i]);
  }
  const double n = static_cast<double>(q.size());
  return 0.5 * mass * kin / n - kappa * pot / n;
}

double quadratic_hamiltonian_value(double mass, double kappa, const Density& q,
                                   const FiberVector& eta) {
  require_positive(mass, "mass");
  require_same_base(q, eta, "quadratic_hamiltonian_value");
  double kin = 0.0, pot = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    kin += q[i] * eta[i] * eta[i];
    if (kappa != 0.0) pot += q[i] * std::log(q[i]);
  }
  const double n = static_cast<double>(q.size());
  return kin / (2.0 * mass * n) + kappa * pot / n;
}

double kl_lagrangian_value(double a, double b, double c, const Density& q, const FiberVector& w,
                           const Potential& f) {
  require_positive(a, "parameter a");
  require_positive(c, "parameter c");
  require_same_base(q, w, "kl_lagrangian_value");
  const Vec u = scaled(w.values(), a);
  require_exponent_bound(u, "kl_lagrangian_value");
  const double K = detail::log_mean_exp(q.values(), u);
  return c * (K / a - b * f.value(q));
}

double kl_hamiltonian_value(double a, double b, double c, const Density& q, const FiberVector& eta,
                            const Potential& f) {
  require_positive(a, "parameter a");
  require_positive(c, "parameter c");
  require_same_base(q, eta, "kl_hamiltonian_value");
  double dual = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double phi = 1.0 + eta[i] / c;
    if (!(phi > 0.0)) {
      throw std::domain_error("kl_hamiltonian_value: momentum outside the cone 1 + eta/c > 0");
    }
    dual += q[i] * phi * std::log(phi);
  }
  dual /= static_cast<double>(q.size());
  return c * (dual / a + b * f.value(q));
}

FiberVector kl_fiber_gradient(double a, double c, const Density& q, const FiberVector& w) {
  require_positive(a, "parameter a");
  require_positive(c, "parameter c");
  require_same_base(q, w, "kl_fiber_gradient");
  const Vec u = scaled(w.values(), a);
  require_exponent_bound(u, "kl_fiber_gradient");
  const double K = detail::log_mean_exp(q.values(), u);
  Vec eta(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) eta[i] = c * std::expm1(u[i] - K);
  return FiberVector(q, std::move(eta));
}

FiberVector kl_legendre_inverse(double a, double c, const Density& q, const FiberVector& eta) {
  require_positive(a, "parameter a");
  require_positive(c, "parameter c");
  require_same_base(q, eta, "kl_legendre_inverse");
  Vec ell(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double ratio = eta[i] / c;
    if (!(1.0 + ratio > 0.0)) {
      throw std::domain_error("kl_legendre_inverse: momentum outside the cone 1 + eta/c > 0");
    }
    ell[i] = std::log1p(ratio);
  }
  const double mean = expectation(q, ell);
  Vec w(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) w[i] = (ell[i] - mean) / a;
  return FiberVector(q, std::move(w));
}

FiberVector damped_momentum(const ScheduleABG& schedule, double t, const Density& q,
                            const FiberVector& w) {
  schedule.validate();
  if (t < schedule.t0 * (1.0 - 1e-12)) {
    throw std::invalid_argument("damped_momentum: time lies before the schedule's t0");
  }
  return kl_fiber_gradient(schedule.a_of(t), schedule.c_of(t), q, w);
}

double replicator_energy(double a, double b, const Density& chi, const Density& q,
                         const Potential& f) {
  require_positive(a, "parameter a");
  return kl(chi, q) / a + b * f.value(q);
}

// ---------------------------------------------------------------------------
// Built-in potentials

Potential negentropy_potential() {
  Potential pot;
  pot.name = "negentropy";
  pot.value = [](const Density& q) { return -entropy(q); };
  pot.grad = [](const Density& q) {
    Vec lq(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) lq[i] = std::log(q[i]);
    const double mean = expectation(q, lq);
    for (double& v : lq) v -= mean;
    return FiberVector(q, std::move(lq));
  };
  return pot;
}

Potential linear_potential(Vec coefficients) {
  Potential pot;
  pot.name = "linear";
  auto coeffs = std::make_shared<const Vec>(std::move(coefficients));
  pot.value = [coeffs](const Density& q) {
    if (q.size() != coeffs->size()) {
      throw std::invalid_argument("linear potential: coefficient length differs from the density");
    }
    return expectation(q, *coeffs);
  };
  pot.grad = [coeffs](const Density& q) {
    if (q.size() != coeffs->size()) {
      throw std::invalid_argument("linear potential: coefficient length differs from the density");
    }
    const double mean = expectation(q, *coeffs);
    Vec g(coeffs->size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = (*coeffs)[i] - mean;
    return FiberVector(q, std::move(g));
  };
  return pot;
}

Potential kl_to_target_potential(Density target) {
  Potential pot;
  pot.name = "kl_to_target";
  auto tgt = std::make_shared<const Density>(std::move(target));
  pot.value = [tgt](const Density& q) {
    if (q.size() != tgt->size()) {
      throw std::invalid_argument("kl_to_target potential: target length differs from the density");
    }
    return kl(q, *tgt);
  };
  pot.grad = [tgt](const Density& q) {
    if (q.size() != tgt->size()) {
      throw std::invalid_argument("kl_to_target potential: target length differs from the density");
    }
    Vec r(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) r[i] = std::log(q[i] / (*tgt)[i]);
    const double mean = expectation(q, r);
    for (double& v : r) v -= mean;
    return FiberVector(q, std::move(r));
  };
  return pot;
}

Potential zero_potential() {
  Potential pot;
  pot.name = "none";
  pot.value = [](const Density&) { return 0.0; };
  pot.grad = [](const Density& q) { return FiberVector(q, Vec(q.size(), 0.0)); };
  return pot;
}

}  // namespace statbundle
