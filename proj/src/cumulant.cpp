#include "statbundle/cumulant.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace statbundle {

namespace {

void require_same_base(const FiberVector& v, const Density& p, const char* what) {
  if (v.base().values() != p.values())
    throw std::invalid_argument(std::string(what) + ": fiber vector not attached at the given density");
}

// x log x extended by continuity with value 0 at x = 0.
double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

}  // namespace

CumulantResult cumulant(const Density& p, const FiberVector& u) {
  require_same_base(u, p, "cumulant");
  return {detail::log_mean_exp(p.values(), u.values()), patch_e(p, u)};
}

double cumulant_d1(const Density& p, const FiberVector& u, const FiberVector& h) {
  require_same_base(u, p, "cumulant_d1");
  require_same_base(h, p, "cumulant_d1");
  const Density tilted = patch_e(p, u);
  return expectation(tilted, h.values());
}

double cumulant_d2(const Density& p, const FiberVector& u, const FiberVector& h1, const FiberVector& h2) {
  require_same_base(u, p, "cumulant_d2");
  require_same_base(h1, p, "cumulant_d2");
  require_same_base(h2, p, "cumulant_d2");
  const Density tilted = patch_e(p, u);
  const double m1 = expectation(tilted, h1.values());
  const double m2 = expectation(tilted, h2.values());
  double s = 0.0;
  for (std::size_t i = 0; i < tilted.size(); ++i) s += tilted[i] * (h1[i] - m1) * (h2[i] - m2);
  return s / static_cast<double>(tilted.size());
}

double cumulant_d3(const Density& p, const FiberVector& u, const FiberVector& h1, const FiberVector& h2,
                   const FiberVector& h3) {
  require_same_base(u, p, "cumulant_d3");
  require_same_base(h1, p, "cumulant_d3");
  require_same_base(h2, p, "cumulant_d3");
  require_same_base(h3, p, "cumulant_d3");
  const Density tilted = patch_e(p, u);
  const double m1 = expectation(tilted, h1.values());
  const double m2 = expectation(tilted, h2.values());
  const double m3 = expectation(tilted, h3.values());
  double s = 0.0;
  for (std::size_t i = 0; i < tilted.size(); ++i) s += tilted[i] * (h1[i] - m1) * (h2[i] - m2) * (h3[i] - m3);
  return s / static_cast<double>(tilted.size());
}

double kl(const Density& q, const Density& r) {
  if (q.size() != r.size()) throw std::invalid_argument("kl: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) s += q[i] * std::log(q[i] / r[i]);
  return s / static_cast<double>(q.size());
}

double entropy(const Density& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) s += q[i] * std::log(q[i]);
  return -s / static_cast<double>(q.size());
}

double dual_kl_of_momentum(const FiberVector& eta) {
  const Density& q = eta.base();
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double ratio = 1.0 + eta[i];
    if (ratio <= 0.0) throw std::domain_error("dual_kl_of_momentum: momentum leaves the admissible region");
    s += q[i] * xlogx(ratio);
  }
  return s / static_cast<double>(q.size());
}

double renyi_term(const Density& q, const Density& r, double a) {
  if (q.size() != r.size()) throw std::invalid_argument("renyi_term: size mismatch");
  if (a == 0.0) throw std::invalid_argument("renyi_term: order must be nonzero");
  Vec scaled(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) scaled[i] = a * std::log(r[i] / q[i]);
  return detail::log_mean_exp(q.values(), scaled) / a;
}

}  // namespace statbundle
