#include "statbundle/oracles.hpp"

#include <cmath>
#include <stdexcept>

namespace statbundle {

SphereGeodesic::SphereGeodesic(Density q0, FiberVector w0) : q0_(q0), w0_(w0.values()), sigma_(0.0) {
  if (w0.base().values() != q0_.values())
    throw std::invalid_argument("SphereGeodesic: velocity not attached at the initial density");
  sigma_ = fiber_norm(w0);
}

Vec SphereGeodesic::raw_values(double t) const {
  const std::size_t n = q0_.size();
  Vec q(n);
  if (sigma_ == 0.0) {
    q = q0_.values();
    return q;
  }
  const double c = std::cos(0.5 * sigma_ * t);
  const double s = std::sin(0.5 * sigma_ * t) / sigma_;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = c + w0_[i] * s;
    q[i] = q0_[i] * d * d;
  }
  return q;
}

CurveJet2 SphereGeodesic::jet(double t) const {
  const std::size_t n = q0_.size();
  if (sigma_ == 0.0) return CurveJet2(q0_, Vec(n, 0.0), Vec(n, 0.0));
  const double c = std::cos(0.5 * sigma_ * t);
  const double s = std::sin(0.5 * sigma_ * t);
  Vec q(n), qdot(n), qddot(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = c + w0_[i] * s / sigma_;
    const double ddot = 0.5 * (-sigma_ * s + w0_[i] * c);
    q[i] = q0_[i] * d * d;
    qdot[i] = 2.0 * q0_[i] * d * ddot;
    qddot[i] = 2.0 * q0_[i] * (ddot * ddot - 0.25 * sigma_ * sigma_ * d * d);
  }
  return CurveJet2(Density(std::move(q)), std::move(qdot), std::move(qddot));
}

Density entropy_flow_closed_form(const Density& q0, double t) {
  const std::size_t n = q0.size();
  const double decay = std::exp(-t);
  Vec logq(n);
  double shift = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    logq[i] = decay * std::log(q0[i]);
    shift = std::max(shift, logq[i]);
  }
  double sum = 0.0;
  Vec q(n);
  for (std::size_t i = 0; i < n; ++i) {
    q[i] = std::exp(logq[i] - shift);
    sum += q[i];
  }
  const double scale = static_cast<double>(n) / sum;
  for (double& x : q) x *= scale;
  return Density(std::move(q));
}

CurveJet2 exp_family_geodesic(const Density& p, const FiberVector& u, double t) {
  Vec scaled(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) scaled[i] = t * u[i];
  const Density q = patch_e(p, FiberVector(p, std::move(scaled)));

  const double mean = expectation(q, u.values());
  Vec star(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) star[i] = u[i] - mean;
  double var = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) var += q[i] * star[i] * star[i];
  var /= static_cast<double>(q.size());

  Vec qdot(q.size()), qddot(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    qdot[i] = q[i] * star[i];
    qddot[i] = q[i] * (star[i] * star[i] - var);
  }
  return CurveJet2(q, std::move(qdot), std::move(qddot));
}

}  // namespace statbundle
