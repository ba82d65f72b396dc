#pragma once

// Invariant battery run by `amps selftest`.

#include <cstdint>
#include <string>
#include <vector>

namespace amps {

struct SuiteResult {
  std::string name;
  bool passed = false;
  /// Number of individual checks performed.
  std::size_t checks = 0;
  /// First failure, empty on success.
  std::string detail;
  double seconds = 0.0;
};

std::vector<SuiteResult> run_selftest(std::uint64_t seed = 0);

}  // namespace amps
