#include "statbundle/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace statbundle {

namespace {

void check_finite(const Vec& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite component");
}

}  // namespace

Density::Density(Vec values) : values_(std::move(values)) {
  if (values_.size() < 2) throw std::invalid_argument("Density: need at least two sample points");
  check_finite(values_, "Density");
  double sum = 0.0;
  for (double x : values_) {
    if (x <= kPositivityFloor) throw std::domain_error("Density: component at or below positivity floor");
    sum += x;
  }
  const double mean = sum / static_cast<double>(values_.size());
  if (std::fabs(mean - 1.0) > kMassTolerance)
    throw std::invalid_argument("Density: components must average to one (sum to n)");
}

Density Density::uniform(std::size_t n) { return Density(Vec(n, 1.0)); }

Density Density::from_probabilities(const Vec& p) {
  const double n = static_cast<double>(p.size());
  Vec scaled(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) scaled[i] = n * p[i];
  return Density(std::move(scaled));
}

Vec Density::probabilities() const {
  const double n = static_cast<double>(values_.size());
  Vec p(values_.size());
  for (std::size_t i = 0; i < values_.size(); ++i) p[i] = values_[i] / n;
  return p;
}

FiberVector::FiberVector(Density base, Vec values) : base_(std::move(base)), values_(std::move(values)) {
  if (values_.size() != base_.size()) throw std::invalid_argument("FiberVector: size mismatch with base");
  check_finite(values_, "FiberVector");
  const double mean = expectation(base_, values_);
  if (std::fabs(mean) > kCenterTolerance)
    throw std::invalid_argument("FiberVector: values are not centered at the base density");
  for (double& x : values_) x -= mean;
}

BundleState::BundleState(Density q_in, Vec v_in) : q(q_in), v(std::move(q_in), std::move(v_in)) {}

double expectation(const Density& q, std::span<const double> f) {
  if (f.size() != q.size()) throw std::invalid_argument("expectation: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += q[i] * f[i];
  return s / static_cast<double>(f.size());
}

double pairing(const FiberVector& eta, const FiberVector& v) {
  if (eta.base().values() != v.base().values())
    throw std::invalid_argument("pairing: fiber vectors attached at different densities");
  const Density& q = eta.base();
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) s += q[i] * eta[i] * v[i];
  return s / static_cast<double>(q.size());
}

double fiber_norm(const FiberVector& v) { return std::sqrt(pairing(v, v)); }

FiberVector e_transport(const FiberVector& v, const Density& to) {
  if (v.size() != to.size()) throw std::invalid_argument("e_transport: size mismatch");
  const double mean = expectation(to, v.values());
  Vec out(v.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] - mean;
  return FiberVector(to, std::move(out));
}

FiberVector m_transport(const FiberVector& eta, const Density& to) {
  if (eta.size() != to.size()) throw std::invalid_argument("m_transport: size mismatch");
  const Density& p = eta.base();
  Vec out(eta.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = p[i] / to[i] * eta[i];
  return FiberVector(to, std::move(out));
}

FiberVector chart_s(const Density& p, const Density& q) {
  if (p.size() != q.size()) throw std::invalid_argument("chart_s: size mismatch");
  Vec d(p.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::log(q[i] / p[i]);
  const double mean = expectation(p, d);
  for (double& x : d) x -= mean;
  return FiberVector(p, std::move(d));
}

Density patch_e(const Density& p, const FiberVector& u) {
  if (u.base().values() != p.values())
    throw std::invalid_argument("patch_e: fiber vector not attached at the given density");
  double umax = 0.0;
  for (double x : u.values()) umax = std::max(umax, std::fabs(x));
  if (umax > kMaxExponent) throw std::domain_error("patch_e: exponent exceeds overflow guard");
  const double k = detail::log_mean_exp(p.values(), u.values());
  Vec out(p.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = p[i] * std::exp(u[i] - k);
  return Density(std::move(out));
}

FiberVector mixture_coordinate(const Density& p, const Density& q) {
  if (p.size() != q.size()) throw std::invalid_argument("mixture_coordinate: size mismatch");
  Vec out(p.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = q[i] / p[i] - 1.0;
  return FiberVector(p, std::move(out));
}

ThetaCoordinates::ThetaCoordinates(Vec theta) : theta_(std::move(theta)) {
  if (theta_.empty()) throw std::invalid_argument("ThetaCoordinates: need at least one coordinate");
  check_finite(theta_, "ThetaCoordinates");
  double sum = 0.0;
  for (double t : theta_) {
    if (t <= 0.0) throw std::domain_error("ThetaCoordinates: coordinates must be positive");
    sum += t;
  }
  if (sum >= 1.0) throw std::domain_error("ThetaCoordinates: coordinates must sum below one");
}

linalg::Matrix fisher_matrix(const ThetaCoordinates& theta) {
  const Vec& th = theta.values();
  const std::size_t m = th.size();
  double rest = 1.0;
  for (double t : th) rest -= t;
  linalg::Matrix fi(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) fi(i, j) = (i == j ? 1.0 / th[i] : 0.0) + 1.0 / rest;
  return fi;
}

Density density_from_theta(const ThetaCoordinates& theta) {
  const Vec& th = theta.values();
  Vec p(th.size() + 1);
  double rest = 1.0;
  for (std::size_t i = 0; i < th.size(); ++i) {
    p[i] = th[i];
    rest -= th[i];
  }
  p.back() = rest;
  return Density::from_probabilities(p);
}

ThetaCoordinates theta_from_density(const Density& q) {
  const Vec p = q.probabilities();
  return ThetaCoordinates(Vec(p.begin(), p.end() - 1));
}

namespace detail {

double log_mean_exp(const Vec& p, const Vec& u) {
  double shift = u[0];
  for (double x : u) shift = std::max(shift, x);
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += p[i] * std::exp(u[i] - shift);
  return shift + std::log(s / static_cast<double>(u.size()));
}

}  // namespace detail

}  // namespace statbundle
