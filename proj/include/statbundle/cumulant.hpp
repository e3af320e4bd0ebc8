#pragma once

#include "statbundle/simplex.hpp"

namespace statbundle {

/** Value of the log-normalizer together with the tilted density it normalizes. */
struct CumulantResult {
  double value;    // K_p(u) = log E_p[exp u]
  Density tilted;  // exp(u - value) p
};

/**
 * Log-normalizer K_p(u) = log E_p[exp u] of the exponential tilt of p along a
 * fiber vector u at p. Strictly convex in u, with K_p(0) = 0. Rejects
 * max|u| > kMaxExponent, matching patch_e.
 */
CumulantResult cumulant(const Density& p, const FiberVector& u);

/** First differential of K_p at u in direction h: E_{e_p(u)}[h]. */
double cumulant_d1(const Density& p, const FiberVector& u, const FiberVector& h);

/** Second differential: covariance of h1, h2 under the tilted density e_p(u). */
double cumulant_d2(const Density& p, const FiberVector& u, const FiberVector& h1, const FiberVector& h2);

/** Third differential: third central cross-moment of h1, h2, h3 under e_p(u). */
double cumulant_d3(const Density& p, const FiberVector& u, const FiberVector& h1, const FiberVector& h2,
                   const FiberVector& h3);

/** Relative entropy D(q, r) = E_q[log(q/r)]; nonnegative, zero iff q = r. */
double kl(const Density& q, const Density& r);

/**
 * Entropy relative to the uniform density, H(q) = -E_q[log q]; zero at the
 * uniform density and negative elsewhere, with kl(q, uniform) = -H(q).
 */
double entropy(const Density& q);

/**
 * Relative entropy expressed through a momentum-side coordinate eta at q:
 * E_q[(1 + eta) log(1 + eta)]. Equals kl(r, q) when eta = r/q - 1. Requires
 * 1 + eta > 0 componentwise.
 */
double dual_kl_of_momentum(const FiberVector& eta);

/**
 * Scaled log-moment a^{-1} log E_q[(r/q)^a] for a != 0. Satisfies
 * a^{-1} K_q(a s_q(r)) = renyi_term(q, r, a) + kl(q, r).
 */
double renyi_term(const Density& q, const Density& r, double a);

}  // namespace statbundle
