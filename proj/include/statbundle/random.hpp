#pragma once

#include <cstdint>
#include <cstdlib>
#include <random>

#include "statbundle/simplex.hpp"

namespace statbundle {

/**
 * Deterministic seed for randomized property checks: the value of the
 * STATBUNDLE_SEED environment variable when set and parseable, otherwise the
 * supplied fallback.
 */
inline std::uint64_t seed_from_env(std::uint64_t fallback = 20260819ull) {
  if (const char* s = std::getenv("STATBUNDLE_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (end != s && *end == '\0') return v;
  }
  return fallback;
}

/** Random density with log-components uniform in [-spread, spread], rescaled to mass n. */
inline Density random_density(std::mt19937_64& rng, std::size_t n, double spread = 1.0) {
  std::uniform_real_distribution<double> dist(-spread, spread);
  Vec v(n);
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(dist(rng));
    sum += x;
  }
  const double scale = static_cast<double>(n) / sum;
  for (double& x : v) x *= scale;
  return Density(std::move(v));
}

/** Random fiber vector at q with components uniform in [-spread, spread] before centering. */
inline FiberVector random_fiber(std::mt19937_64& rng, const Density& q, double spread = 1.0) {
  std::uniform_real_distribution<double> dist(-spread, spread);
  Vec v(q.size());
  for (double& x : v) x = dist(rng);
  const double mean = expectation(q, v);
  for (double& x : v) x -= mean;
  return FiberVector(q, std::move(v));
}

/** Random simplex coordinates bounded away from the boundary. */
inline ThetaCoordinates random_theta(std::mt19937_64& rng, std::size_t n) {
  std::exponential_distribution<double> dist(1.0);
  Vec p(n);
  double sum = 0.0;
  for (double& x : p) {
    x = dist(rng);
    sum += x;
  }
  const double margin = 0.08;
  Vec theta(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i)
    theta[i] = (p[i] / sum + margin) / (1.0 + margin * static_cast<double>(n));
  return ThetaCoordinates(std::move(theta));
}

}  // namespace statbundle
