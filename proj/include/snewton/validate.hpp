#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace snewton {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Self-contained correctness checks, each a few hundred milliseconds:
// rank-one update chains against direct inversion, model gradients against
// central finite differences, the recursive weighted average against its
// closed form, and the curvature growth diagnostic on a well-behaved
// logistic run. Exceptions inside a check are reported as failures.
std::vector<CheckResult> run_validation_suite(std::uint64_t seed);

}  // namespace snewton
