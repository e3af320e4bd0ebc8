#pragma once

#include <functional>
#include <string>

#include "statbundle/simplex.hpp"

namespace statbundle {

/**
 * Second-order jet of a curve of densities: position q(t) together with the
 * raw derivatives qdot(t), qddot(t). Both derivative vectors must sum to zero
 * (within kCenterTolerance on their mean) since the total mass is constant.
 */
class CurveJet2 {
 public:
  CurveJet2(Density q, Vec qdot, Vec qddot);

  const Density& q() const { return q_; }
  const Vec& qdot() const { return qdot_; }
  const Vec& qddot() const { return qddot_; }

 private:
  Density q_;
  Vec qdot_;
  Vec qddot_;
};

/** Velocity of the curve, qdot/q, as a fiber vector at q. */
FiberVector velocity(const CurveJet2& jet);

/**
 * Covariant derivative in the exponential connection of a fiber field w(t)
 * along a curve through q: wdot - E_q[wdot].
 */
FiberVector exp_covariant_derivative(const Density& q, const Vec& wdot);

/**
 * Covariant derivative in the mixture connection of a momentum field eta(t)
 * along a curve with velocity star_q: etadot + star_q * eta. Rejects inputs
 * whose result is off-center beyond tolerance, which signals an inconsistent
 * (q, star_q, eta, etadot) quadruple.
 */
FiberVector mix_covariant_derivative(const Density& q, const FiberVector& star_q, const Vec& eta,
                                     const Vec& etadot);

/** Acceleration in the exponential connection: qddot/q - ((qdot/q)^2 - E_q[(qdot/q)^2]). */
FiberVector exp_acceleration(const CurveJet2& jet);

/** Acceleration in the mixture connection: qddot/q. */
FiberVector mix_acceleration(const CurveJet2& jet);

/** Metric (Levi-Civita) acceleration: the mean of the two connection accelerations. */
FiberVector riemannian_acceleration(const CurveJet2& jet);

/**
 * Retraction chi = e_q(w): the density whose exponential chart at q is the
 * given fiber vector. For a curve with w = velocity, chi plays the role of a
 * one-step-ahead exponential prediction.
 */
Density chi_retraction(const Density& q, const FiberVector& w);

/** Natural gradient of the entropy q -> -E_q[log q]: -(log q - E_q[log q]). */
FiberVector natural_grad_entropy(const Density& q);

/**
 * Natural gradient of a scalar functional by central finite differences along
 * exponential-patch perturbations: the n-1 centered indicator fibers b_i form
 * a basis, the directional derivatives dF[b_i] are estimated with step `step`,
 * and the gradient solves the Gram system <g, b_i>_q = dF[b_i].
 */
FiberVector fd_natural_gradient(const std::function<double(const Density&)>& functional, const Density& q,
                                double step = 1e-5);

/** Scalar functional of the density together with its natural gradient. */
struct Potential {
  std::string name;
  std::function<double(const Density&)> value;
  std::function<FiberVector(const Density&)> grad;
};

}  // namespace statbundle
