#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "statbundle/linalg.hpp"

namespace statbundle {

using Vec = std::vector<double>;

// Numerical policy shared across the library.
inline constexpr double kPositivityFloor = 1e-300;  // smallest admissible density component
inline constexpr double kMassTolerance = 1e-6;      // |mean(q) - 1| accepted at construction
inline constexpr double kCenterTolerance = 1e-9;    // |E_q[v]| accepted before rejection
inline constexpr double kMaxExponent = 500.0;       // bound on |u| inside exponential patches

/**
 * Strictly positive density on a finite sample space of n points, stored in the
 * mean-one convention: the components sum to n, i.e. they are n times the
 * corresponding probabilities. Expectations are E_q[f] = (1/n) sum_x f(x) q(x).
 *
 * Construction validates positivity (components above kPositivityFloor) and
 * total mass (|mean - 1| <= kMassTolerance); values are stored as given, so
 * mass drift of evolving states remains observable.
 */
class Density {
 public:
  explicit Density(Vec values);

  /** Density with all components equal to one. */
  static Density uniform(std::size_t n);

  /** Scale a probability vector (components summing to one) by n. */
  static Density from_probabilities(const Vec& p);

  std::size_t size() const { return values_.size(); }
  const Vec& values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  /** Components divided by n; sums to one up to the stored mass drift. */
  Vec probabilities() const;

 private:
  Vec values_;
};

/**
 * Element of the fiber attached at a density q: a vector of values with
 * E_q[v] = 0. Serves both as a tangent direction (velocity) and, through the
 * duality pairing, as a momentum. Construction subtracts the residual mean
 * when |E_q[v]| <= kCenterTolerance and rejects anything farther off-center.
 */
class FiberVector {
 public:
  FiberVector(Density base, Vec values);

  const Density& base() const { return base_; }
  const Vec& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  Density base_;
  Vec values_;
};

/** A density together with a fiber vector attached at it. */
struct BundleState {
  Density q;
  FiberVector v;

  BundleState(Density q_in, Vec v_in);
};

/** E_q[f] = (1/n) sum_x f(x) q(x). */
double expectation(const Density& q, std::span<const double> f);

/** Duality pairing <eta, v>_q = E_q[eta v]; both arguments must share a base. */
double pairing(const FiberVector& eta, const FiberVector& v);

/** Norm induced by the pairing, sqrt(E_q[v^2]). */
double fiber_norm(const FiberVector& v);

/** Exponential transport to the fiber at `to`: v - E_to[v]. */
FiberVector e_transport(const FiberVector& v, const Density& to);

/** Mixture transport to the fiber at `to`: (p/to) v, where p is the base of v. */
FiberVector m_transport(const FiberVector& eta, const Density& to);

/** Exponential chart of q centered at p: log(q/p) - E_p[log(q/p)], a fiber vector at p. */
FiberVector chart_s(const Density& p, const Density& q);

/**
 * Exponential patch e_p(u) = exp(u - K_p(u)) p for a fiber vector u at p,
 * where K_p(u) = log E_p[exp u]. Rejects max|u| > kMaxExponent.
 */
Density patch_e(const Density& p, const FiberVector& u);

/** Mixture chart of q centered at p: q/p - 1, a fiber vector at p. */
FiberVector mixture_coordinate(const Density& p, const Density& q);

/**
 * Open coordinates for the probability simplex: the first n-1 probabilities,
 * each positive with sum strictly below one.
 */
class ThetaCoordinates {
 public:
  explicit ThetaCoordinates(Vec theta);

  const Vec& values() const { return theta_; }
  std::size_t size() const { return theta_.size(); }
  /** Number of sample points, n = size() + 1. */
  std::size_t ambient_size() const { return theta_.size() + 1; }

 private:
  Vec theta_;
};

/**
 * Fisher information matrix in theta coordinates,
 * I(theta)_{ij} = delta_{ij}/theta_i + 1/theta_n with theta_n = 1 - sum theta.
 * Equals the inverse of diag(theta) - theta theta^T.
 */
linalg::Matrix fisher_matrix(const ThetaCoordinates& theta);

Density density_from_theta(const ThetaCoordinates& theta);
ThetaCoordinates theta_from_density(const Density& q);

namespace detail {
/** log E_p[exp u], evaluated with a max-shift so large |u| cannot overflow. */
double log_mean_exp(const Vec& p, const Vec& u);
}  // namespace detail

}  // namespace statbundle
