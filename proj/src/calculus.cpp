#include "statbundle/calculus.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "statbundle/linalg.hpp"

namespace statbundle {

namespace {

void check_mass_rate(const Vec& rate, std::size_t n, const char* what) {
  if (rate.size() != n) throw std::invalid_argument(std::string(what) + ": size mismatch");
  double s = 0.0;
  for (double x : rate) {
    if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite component");
    s += x;
  }
  if (std::fabs(s / static_cast<double>(n)) > kCenterTolerance)
    throw std::invalid_argument(std::string(what) + ": derivative does not preserve total mass");
}

}  // namespace

CurveJet2::CurveJet2(Density q, Vec qdot, Vec qddot)
    : q_(std::move(q)), qdot_(std::move(qdot)), qddot_(std::move(qddot)) {
  check_mass_rate(qdot_, q_.size(), "CurveJet2 qdot");
  check_mass_rate(qddot_, q_.size(), "CurveJet2 qddot");
}

FiberVector velocity(const CurveJet2& jet) {
  Vec v(jet.q().size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = jet.qdot()[i] / jet.q()[i];
  return FiberVector(jet.q(), std::move(v));
}

FiberVector exp_covariant_derivative(const Density& q, const Vec& wdot) {
  if (wdot.size() != q.size()) throw std::invalid_argument("exp_covariant_derivative: size mismatch");
  const double mean = expectation(q, wdot);
  Vec out(wdot.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = wdot[i] - mean;
  return FiberVector(q, std::move(out));
}

FiberVector mix_covariant_derivative(const Density& q, const FiberVector& star_q, const Vec& eta,
                                     const Vec& etadot) {
  if (star_q.base().values() != q.values())
    throw std::invalid_argument("mix_covariant_derivative: velocity not attached at the given density");
  if (eta.size() != q.size() || etadot.size() != q.size())
    throw std::invalid_argument("mix_covariant_derivative: size mismatch");
  Vec out(q.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = etadot[i] + star_q[i] * eta[i];
  return FiberVector(q, std::move(out));  // rejects off-center results
}

FiberVector exp_acceleration(const CurveJet2& jet) {
  const Density& q = jet.q();
  Vec sq(q.size()), out(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) sq[i] = jet.qdot()[i] / q[i];
  double mean_sq2 = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) mean_sq2 += q[i] * sq[i] * sq[i];
  mean_sq2 /= static_cast<double>(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = jet.qddot()[i] / q[i] - (sq[i] * sq[i] - mean_sq2);
  return FiberVector(q, std::move(out));
}

FiberVector mix_acceleration(const CurveJet2& jet) {
  const Density& q = jet.q();
  Vec out(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = jet.qddot()[i] / q[i];
  return FiberVector(q, std::move(out));
}

FiberVector riemannian_acceleration(const CurveJet2& jet) {
  const FiberVector e = exp_acceleration(jet);
  const FiberVector m = mix_acceleration(jet);
  Vec out(e.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * (e[i] + m[i]);
  return FiberVector(jet.q(), std::move(out));
}

Density chi_retraction(const Density& q, const FiberVector& w) { return patch_e(q, w); }

FiberVector natural_grad_entropy(const Density& q) {
  Vec g(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) g[i] = std::log(q[i]);
  const double mean = expectation(q, g);
  for (double& x : g) x = -(x - mean);
  return FiberVector(q, std::move(g));
}

FiberVector fd_natural_gradient(const std::function<double(const Density&)>& functional, const Density& q,
                                double step) {
  if (!(step > 0.0)) throw std::invalid_argument("fd_natural_gradient: step must be positive");
  const std::size_t n = q.size();
  const std::size_t m = n - 1;

  std::vector<FiberVector> basis;
  basis.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    Vec b(n, 0.0);
    b[i] = 1.0;
    const double mean = q[i] / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) b[j] -= mean;
    basis.emplace_back(q, std::move(b));
  }

  Vec rhs(m);
  for (std::size_t i = 0; i < m; ++i) {
    Vec plus(n), minus(n);
    for (std::size_t j = 0; j < n; ++j) {
      plus[j] = step * basis[i][j];
      minus[j] = -step * basis[i][j];
    }
    const double fp = functional(patch_e(q, FiberVector(q, std::move(plus))));
    const double fm = functional(patch_e(q, FiberVector(q, std::move(minus))));
    rhs[i] = (fp - fm) / (2.0 * step);
  }

  linalg::Matrix gram(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i; j < m; ++j) gram(i, j) = gram(j, i) = pairing(basis[i], basis[j]);
  const Vec coeff = linalg::solve(gram, rhs);

  Vec g(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) g[j] += coeff[i] * basis[i][j];
  return FiberVector(q, std::move(g));
}

}  // namespace statbundle
