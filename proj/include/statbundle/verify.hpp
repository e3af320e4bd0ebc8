#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace statbundle::verify {

/**
 * One measured property. `measured` is the worst value observed over the
 * check's instances and `bound` the tolerance it was held against; `pass` is
 * authoritative (a few checks are interval or sign conditions rather than
 * plain upper bounds).
 */
struct CheckResult {
  std::string name;
  double measured = 0.0;
  double bound = 0.0;
  bool pass = false;
  std::string note;
};

struct SuiteResult {
  std::string name;
  std::vector<CheckResult> checks;

  bool passed() const;
  /** The check with the largest measured/bound ratio (tie: first failing). */
  const CheckResult& worst() const;
};

/** All suite names in execution order. */
const std::vector<std::string>& suite_names();

/** Runs one suite. Throws std::invalid_argument for an unknown name. */
SuiteResult run_suite(const std::string& name, std::uint64_t seed);

/** Runs every suite sequentially with the same seed. */
std::vector<SuiteResult> run_all(std::uint64_t seed);

}  // namespace statbundle::verify
