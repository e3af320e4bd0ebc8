#include "statbundle/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace statbundle {

namespace {

// Dormand-Prince 5(4) tableau (FSAL: the last stage is the next first stage).
constexpr double kC2 = 1.0 / 5.0, kC3 = 3.0 / 10.0, kC4 = 4.0 / 5.0, kC5 = 8.0 / 9.0;
constexpr double kA21 = 1.0 / 5.0;
constexpr double kA31 = 3.0 / 40.0, kA32 = 9.0 / 40.0;
constexpr double kA41 = 44.0 / 45.0, kA42 = -56.0 / 15.0, kA43 = 32.0 / 9.0;
constexpr double kA51 = 19372.0 / 6561.0, kA52 = -25360.0 / 2187.0, kA53 = 64448.0 / 6561.0,
                 kA54 = -212.0 / 729.0;
constexpr double kA61 = 9017.0 / 3168.0, kA62 = -355.0 / 33.0, kA63 = 46732.0 / 5247.0,
                 kA64 = 49.0 / 176.0, kA65 = -5103.0 / 18656.0;
constexpr double kB1 = 35.0 / 384.0, kB3 = 500.0 / 1113.0, kB4 = 125.0 / 192.0,
                 kB5 = -2187.0 / 6784.0, kB6 = 11.0 / 84.0;
// Difference between the fifth- and fourth-order weights.
constexpr double kE1 = 71.0 / 57600.0, kE3 = -71.0 / 16695.0, kE4 = 71.0 / 1920.0,
                 kE5 = -17253.0 / 339200.0, kE6 = 22.0 / 525.0, kE7 = -1.0 / 40.0;

struct Layout {
  std::size_t n = 0;
  std::size_t q_off = 0;
  bool has_aux = false;
  std::size_t aux_off = 0;
  bool aux_is_density = false;
};

Layout make_layout(const Flow& flow, std::size_t dim) {
  if (flow.slices <= 0 || dim == 0 || dim % static_cast<std::size_t>(flow.slices) != 0) {
    throw std::invalid_argument("state length is not a multiple of the flow's slice count");
  }
  Layout out;
  out.n = dim / static_cast<std::size_t>(flow.slices);
  out.q_off = static_cast<std::size_t>(flow.q_slice) * out.n;
  out.has_aux = flow.aux_slice >= 0;
  out.aux_off = out.has_aux ? static_cast<std::size_t>(flow.aux_slice) * out.n : 0;
  out.aux_is_density = flow.aux_is_density;
  return out;
}

double block_min(const Vec& y, std::size_t off, std::size_t n) {
  double m = y[off];
  for (std::size_t i = 1; i < n; ++i) m = std::min(m, y[off + i]);
  return m;
}

double block_mean(const Vec& y, std::size_t off, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += y[off + i];
  return s / static_cast<double>(n);
}

double min_density(const Layout& layout, const Vec& y) {
  double m = block_min(y, layout.q_off, layout.n);
  if (layout.has_aux && layout.aux_is_density) {
    m = std::min(m, block_min(y, layout.aux_off, layout.n));
  }
  return m;
}

SampleDiagnostics diagnostics_at(const Flow& flow, const Layout& layout, double t, const Vec& y) {
  SampleDiagnostics d;
  d.mass_drift = std::abs(block_mean(y, layout.q_off, layout.n) - 1.0);
  if (layout.has_aux) {
    if (layout.aux_is_density) {
      d.centering_drift = std::abs(block_mean(y, layout.aux_off, layout.n) - 1.0);
    } else {
      double s = 0.0;
      for (std::size_t i = 0; i < layout.n; ++i) s += y[layout.q_off + i] * y[layout.aux_off + i];
      d.centering_drift = std::abs(s / static_cast<double>(layout.n));
    }
  }
  d.min_density = min_density(layout, y);
  if (flow.energy) {
    d.energy = flow.energy(t, std::span<const double>(y));
  }
  return d;
}

void hermite_eval(const Vec& y0, const Vec& f0, const Vec& y1, const Vec& f1, double h,
                  double theta, Vec& out) {
  const double t2 = theta * theta;
  const double t3 = t2 * theta;
  const double h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
  const double h10 = t3 - 2.0 * t2 + theta;
  const double h01 = -2.0 * t3 + 3.0 * t2;
  const double h11 = t3 - t2;
  for (std::size_t i = 0; i < y0.size(); ++i) {
    out[i] = h00 * y0[i] + h * h10 * f0[i] + h01 * y1[i] + h * h11 * f1[i];
  }
}

bool all_finite(const Vec& y) {
  for (double v : y) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

/** Shared state of one integration run. */
struct Driver {
  const Flow& flow;
  Layout layout;
  IntegratorConfig cfg;
  const std::vector<double>& samples;
  std::size_t next_sample = 0;
  Trajectory traj;
  Vec interp;  // scratch for dense output

  Driver(const Flow& flow_in, const IntegratorConfig& cfg_in, const std::vector<double>& samples_in,
         std::size_t dim)
      : flow(flow_in), layout(make_layout(flow_in, dim)), cfg(cfg_in), samples(samples_in),
        interp(dim) {}

  void emit(double t, const Vec& y) {
    if (!traj.times.empty() && !(t > traj.times.back())) return;
    traj.times.push_back(t);
    traj.states.push_back(y);
    traj.diagnostics.push_back(diagnostics_at(flow, layout, t, y));
  }

  void finish(Termination reason, double t, const Vec& y, std::string message) {
    traj.termination = reason;
    traj.t_final = t;
    traj.y_final = y;
    traj.message = std::move(message);
  }

  /** First theta in [lo, hi] where the interpolated minimum density crosses
      the floor; assumes no crossing at lo and a crossing at or before hi. */
  double bisect_floor(const Vec& y0, const Vec& f0, const Vec& y1, const Vec& f1, double h,
                      double lo, double hi) {
    for (int iter = 0; iter < 80; ++iter) {
      const double mid = 0.5 * (lo + hi);
      hermite_eval(y0, f0, y1, f1, h, mid, interp);
      if (min_density(layout, interp) >= cfg.boundary_floor) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return lo;
  }

  /**
   * Boundary guard plus dense-output emission for the accepted step
   * [t, t+h]. Returns false when the trajectory terminated at the floor.
   */
  bool process_step(double t, double h, const Vec& y0, const Vec& f0, const Vec& y1,
                    const Vec& f1) {
    double theta_limit = 1.0;
    bool crossed = false;
    if (min_density(layout, y1) < cfg.boundary_floor) {
      theta_limit = bisect_floor(y0, f0, y1, f1, h, 0.0, 1.0);
      crossed = true;
    }
    double theta_prev = 0.0;
    const double t_scale = std::max(1.0, std::abs(t) + std::abs(h));
    while (next_sample < samples.size()) {
      const double ts = samples[next_sample];
      if (ts > t + theta_limit * h + 1e-14 * t_scale) break;
      double theta = (ts - t) / h;
      theta = std::clamp(theta, 0.0, theta_limit);
      hermite_eval(y0, f0, y1, f1, h, theta, interp);
      if (min_density(layout, interp) < cfg.boundary_floor) {
        // The interpolant dips below the floor before the endpoint does.
        theta_limit = bisect_floor(y0, f0, y1, f1, h, theta_prev, theta);
        crossed = true;
        break;
      }
      emit(ts, interp);
      ++next_sample;
      theta_prev = theta;
    }
    if (crossed) {
      hermite_eval(y0, f0, y1, f1, h, theta_limit, interp);
      const double t_cross = t + theta_limit * h;
      emit(t_cross, interp);
      finish(Termination::boundary, t_cross, interp,
             "density component reached the boundary floor");
      return false;
    }
    return true;
  }
};

void rhs_eval(const Flow& flow, double t, const Vec& y, Vec& dy) {
  flow.rhs(t, std::span<const double>(y), std::span<double>(dy));
}

Trajectory run_adaptive(const Flow& flow, const Vec& y0, double t_start, double t_end,
                        const std::vector<double>& samples, const IntegratorConfig& cfg) {
  const std::size_t dim = y0.size();
  Driver drv(flow, cfg, samples, dim);

  Vec y = y0, y5(dim);
  Vec k1(dim), k2(dim), k3(dim), k4(dim), k5(dim), k6(dim), k7(dim), ytmp(dim), yerr(dim);
  double t = t_start;
  double err_prev = 1.0;

  if (min_density(drv.layout, y) < cfg.boundary_floor) {
    drv.emit(t, y);
    drv.finish(Termination::boundary, t, y, "initial state already at the boundary floor");
    return std::move(drv.traj);
  }
  while (drv.next_sample < samples.size() && samples[drv.next_sample] <= t_start) {
    drv.emit(t_start, y);
    ++drv.next_sample;
  }

  rhs_eval(flow, t, y, k1);
  double h = std::min(cfg.h_max, t_end - t_start);

  const double span_tiny = 1e-14 * std::max(1.0, std::abs(t_end));
  while (true) {
    if (t_end - t <= span_tiny) {
      while (drv.next_sample < samples.size()) {
        drv.emit(samples[drv.next_sample], y);
        ++drv.next_sample;
      }
      drv.finish(Termination::completed, t, y, "reached the end of the time span");
      break;
    }
    if (drv.traj.steps_accepted + drv.traj.steps_rejected >= cfg.max_steps) {
      drv.finish(Termination::max_steps, t, y, "step budget exhausted");
      break;
    }
    h = std::min(h, t_end - t);

    // Stages 2..6, the order-5 combination, and the FSAL stage.
    for (std::size_t i = 0; i < dim; ++i) ytmp[i] = y[i] + h * kA21 * k1[i];
    rhs_eval(flow, t + kC2 * h, ytmp, k2);
    for (std::size_t i = 0; i < dim; ++i) ytmp[i] = y[i] + h * (kA31 * k1[i] + kA32 * k2[i]);
    rhs_eval(flow, t + kC3 * h, ytmp, k3);
    for (std::size_t i = 0; i < dim; ++i) {
      ytmp[i] = y[i] + h * (kA41 * k1[i] + kA42 * k2[i] + kA43 * k3[i]);
    }
    rhs_eval(flow, t + kC4 * h, ytmp, k4);
    for (std::size_t i = 0; i < dim; ++i) {
      ytmp[i] = y[i] + h * (kA51 * k1[i] + kA52 * k2[i] + kA53 * k3[i] + kA54 * k4[i]);
    }
    rhs_eval(flow, t + kC5 * h, ytmp, k5);
    for (std::size_t i = 0; i < dim; ++i) {
      ytmp[i] =
          y[i] + h * (kA61 * k1[i] + kA62 * k2[i] + kA63 * k3[i] + kA64 * k4[i] + kA65 * k5[i]);
    }
    rhs_eval(flow, t + h, ytmp, k6);
    for (std::size_t i = 0; i < dim; ++i) {
      y5[i] = y[i] + h * (kB1 * k1[i] + kB3 * k3[i] + kB4 * k4[i] + kB5 * k5[i] + kB6 * k6[i]);
    }
    rhs_eval(flow, t + h, y5, k7);

    double err_sq = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double ei =
          h * (kE1 * k1[i] + kE3 * k3[i] + kE4 * k4[i] + kE5 * k5[i] + kE6 * k6[i] + kE7 * k7[i]);
      const double scale = cfg.atol + cfg.rtol * std::max(std::abs(y[i]), std::abs(y5[i]));
      err_sq += (ei / scale) * (ei / scale);
    }
    const double err = std::sqrt(err_sq / static_cast<double>(dim));

    if (!std::isfinite(err)) {
      ++drv.traj.steps_rejected;
      h *= 0.5;
      if (h < cfg.h_min) {
        drv.finish(Termination::nonfinite, t, y, "derivative stopped being finite");
        break;
      }
      continue;
    }
    if (err > 1.0) {
      ++drv.traj.steps_rejected;
      h *= std::clamp(0.9 * std::pow(err, -0.2), 0.1, 1.0);
      if (h < cfg.h_min) {
        drv.finish(Termination::step_underflow, t, y, "step size underflowed the minimum");
        break;
      }
      continue;
    }

    ++drv.traj.steps_accepted;
    if (!drv.process_step(t, h, y, k1, y5, k7)) break;
    t += h;
    if (cfg.projection == Projection::renormalize) {
      y5 = project_state(flow, y5);
      rhs_eval(flow, t, y5, k7);
    }
    y.swap(y5);
    k1.swap(k7);

    const double factor =
        std::clamp(0.9 * std::pow(std::max(err, 1e-16), -0.17) * std::pow(err_prev, 0.04), 0.2, 5.0);
    h = std::min(h * factor, cfg.h_max);
    err_prev = std::max(err, 1e-16);
  }
  return std::move(drv.traj);
}

Trajectory run_rk4(const Flow& flow, const Vec& y0, double t_start, double t_end,
                   const std::vector<double>& samples, const IntegratorConfig& cfg) {
  const std::size_t dim = y0.size();
  Driver drv(flow, cfg, samples, dim);

  const double span = t_end - t_start;
  const std::size_t n_steps =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(span / cfg.step)));
  const double h = span / static_cast<double>(n_steps);

  Vec y = y0, ynew(dim);
  Vec k1(dim), k2(dim), k3(dim), k4(dim), knext(dim), ytmp(dim);

  if (min_density(drv.layout, y) < cfg.boundary_floor) {
    drv.emit(t_start, y);
    drv.finish(Termination::boundary, t_start, y, "initial state already at the boundary floor");
    return std::move(drv.traj);
  }
  while (drv.next_sample < samples.size() && samples[drv.next_sample] <= t_start) {
    drv.emit(t_start, y);
    ++drv.next_sample;
  }

  rhs_eval(flow, t_start, y, k1);
  bool terminated = false;
  for (std::size_t step = 0; step < n_steps; ++step) {
    if (step >= cfg.max_steps) {
      drv.finish(Termination::max_steps, t_start + static_cast<double>(step) * h, y,
                 "step budget exhausted");
      terminated = true;
      break;
    }
    const double t = t_start + static_cast<double>(step) * h;
    const double t_next = (step + 1 == n_steps) ? t_end : t_start + static_cast<double>(step + 1) * h;

    for (std::size_t i = 0; i < dim; ++i) ytmp[i] = y[i] + 0.5 * h * k1[i];
    rhs_eval(flow, t + 0.5 * h, ytmp, k2);
    for (std::size_t i = 0; i < dim; ++i) ytmp[i] = y[i] + 0.5 * h * k2[i];
    rhs_eval(flow, t + 0.5 * h, ytmp, k3);
    for (std::size_t i = 0; i < dim; ++i) ytmp[i] = y[i] + h * k3[i];
    rhs_eval(flow, t_next, ytmp, k4);
    for (std::size_t i = 0; i < dim; ++i) {
      ynew[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    if (!all_finite(ynew)) {
      drv.finish(Termination::nonfinite, t, y, "state stopped being finite");
      terminated = true;
      break;
    }
    rhs_eval(flow, t_next, ynew, knext);

    drv.traj.steps_accepted += 1;
    if (!drv.process_step(t, t_next - t, y, k1, ynew, knext)) {
      terminated = true;
      break;
    }
    if (cfg.projection == Projection::renormalize) {
      ynew = project_state(flow, ynew);
      rhs_eval(flow, t_next, ynew, knext);
    }
    y.swap(ynew);
    k1.swap(knext);
  }
  if (!terminated) {
    while (drv.next_sample < samples.size()) {
      drv.emit(samples[drv.next_sample], y);
      ++drv.next_sample;
    }
    drv.finish(Termination::completed, t_end, y, "reached the end of the time span");
  }
  return std::move(drv.traj);
}

}  // namespace

const char* to_string(Termination reason) {
  switch (reason) {
    case Termination::completed: return "completed";
    case Termination::boundary: return "boundary";
    case Termination::max_steps: return "max_steps";
    case Termination::step_underflow: return "step_underflow";
    case Termination::nonfinite: return "nonfinite";
  }
  return "unknown";
}

void IntegratorConfig::validate() const {
  auto positive = [](double x, const char* name) {
    if (!(x > 0.0) || !std::isfinite(x)) {
      throw std::invalid_argument(std::string(name) + " must be positive and finite");
    }
  };
  positive(rtol, "rtol");
  positive(atol, "atol");
  positive(step, "step");
  positive(h_max, "h_max");
  positive(h_min, "h_min");
  if (h_min > h_max) throw std::invalid_argument("h_min exceeds h_max");
  if (!(boundary_floor > 0.0) || !(boundary_floor < 1.0)) {
    throw std::invalid_argument("boundary_floor must lie in (0, 1)");
  }
  if (max_steps == 0) throw std::invalid_argument("max_steps must be positive");
}

Trajectory integrate(const Flow& flow, const Vec& y0, double t_start, double t_end,
                     const std::vector<double>& sample_times, const IntegratorConfig& config) {
  config.validate();
  if (!flow.rhs) throw std::invalid_argument("flow has no right-hand side");
  if (!(t_end > t_start)) throw std::invalid_argument("time span must have t_end > t_start");
  if (t_start < flow.start_floor * (1.0 - 1e-12)) {
    throw std::invalid_argument("t_start lies before the flow's start time");
  }
  if (!all_finite(y0)) throw std::invalid_argument("initial state must be finite");
  const double tiny = 1e-12 * std::max({1.0, std::abs(t_start), std::abs(t_end)});
  for (std::size_t i = 0; i < sample_times.size(); ++i) {
    if (sample_times[i] < t_start - tiny || sample_times[i] > t_end + tiny) {
      throw std::invalid_argument("sample times must lie within the time span");
    }
    if (i > 0 && !(sample_times[i] > sample_times[i - 1])) {
      throw std::invalid_argument("sample times must be strictly increasing");
    }
  }
  if (config.method == Method::rk4_fixed) {
    return run_rk4(flow, y0, t_start, t_end, sample_times, config);
  }
  return run_adaptive(flow, y0, t_start, t_end, sample_times, config);
}

std::vector<double> uniform_times(double t_start, double t_end, std::size_t count) {
  if (count < 2) throw std::invalid_argument("uniform_times needs at least two samples");
  if (!(t_end > t_start)) throw std::invalid_argument("uniform_times needs t_end > t_start");
  std::vector<double> out(count);
  const double dt = (t_end - t_start) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) out[i] = t_start + static_cast<double>(i) * dt;
  out.back() = t_end;
  return out;
}

Vec project_state(const Flow& flow, Vec y) {
  const Layout layout = make_layout(flow, y.size());
  auto rescale = [&](std::size_t off) {
    for (std::size_t i = 0; i < layout.n; ++i) {
      if (!(y[off + i] > 0.0)) {
        throw std::domain_error("project_state: non-positive density component");
      }
    }
    const double mean = block_mean(y, off, layout.n);
    for (std::size_t i = 0; i < layout.n; ++i) y[off + i] /= mean;
  };
  rescale(layout.q_off);
  if (layout.has_aux) {
    if (layout.aux_is_density) {
      rescale(layout.aux_off);
    } else {
      double s = 0.0;
      for (std::size_t i = 0; i < layout.n; ++i) s += y[layout.q_off + i] * y[layout.aux_off + i];
      s /= static_cast<double>(layout.n);
      for (std::size_t i = 0; i < layout.n; ++i) y[layout.aux_off + i] -= s;
    }
  }
  return y;
}

double action_integral(const Flow& flow, const Trajectory& trajectory) {
  if (!flow.lagrangian) {
    throw std::invalid_argument("action_integral requires a Lagrangian-kind flow");
  }
  if (trajectory.times.size() < 2) {
    throw std::invalid_argument("action_integral needs at least two samples");
  }
  double action = 0.0;
  double prev_t = trajectory.times[0];
  double prev_l = flow.lagrangian(prev_t, std::span<const double>(trajectory.states[0]));
  for (std::size_t i = 1; i < trajectory.times.size(); ++i) {
    const double t = trajectory.times[i];
    const double l = flow.lagrangian(t, std::span<const double>(trajectory.states[i]));
    action += 0.5 * (prev_l + l) * (t - prev_t);
    prev_t = t;
    prev_l = l;
  }
  return action;
}

}  // namespace statbundle
