#pragma once

#include "statbundle/calculus.hpp"
#include "statbundle/simplex.hpp"

namespace statbundle {

/**
 * Closed-form solution of the free kinetic flow (no potential) started at
 * (q0, w0). Componentwise
 *
 *   q(t) = q0 * D(t)^2,  D(t) = cos(sigma t / 2) + w0 sin(sigma t / 2) / sigma,
 *
 * with sigma^2 = E_{q0}[w0^2]. The square root of q/n traces a great circle
 * with angular speed sigma/2, so the velocity at t = 0 is exactly w0 and the
 * speed E_q[(qdot/q)^2] = sigma^2 is conserved. The curve is a metric
 * geodesic: its Riemannian acceleration vanishes identically, and
 * qddot/q - (1/2)(qdot/q)^2 equals the constant -sigma^2/2. Valid until the
 * first component of q reaches zero.
 */
class SphereGeodesic {
 public:
  SphereGeodesic(Density q0, FiberVector w0);

  double sigma() const { return sigma_; }

  /** Jet (q, qdot, qddot) at time t; throws once the path has left the open simplex. */
  CurveJet2 jet(double t) const;

  /** Density component values at time t (may be nonpositive past the first exit). */
  Vec raw_values(double t) const;

 private:
  Density q0_;
  Vec w0_;
  double sigma_;
};

/**
 * Closed-form solution of the entropy ascent field qdot = -q (log q - E_q[log q]):
 * the normalized power curve q(t) proportional to q0^(exp(-t)).
 */
Density entropy_flow_closed_form(const Density& q0, double t);

/**
 * Jet of the exponential-family curve t -> e_p(t u). Its exponential-connection
 * acceleration vanishes identically, and the curve advances by the retraction:
 * chi_retraction(q(t), velocity(t)) = q(t + 1).
 */
CurveJet2 exp_family_geodesic(const Density& p, const FiberVector& u, double t);

}  // namespace statbundle
