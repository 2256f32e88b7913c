#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "mmt/tensor.hpp"

namespace mmt {

/// Partition of the P contrasts into available and missing sets. Indices are
/// 0-based internally; the CLI converts from the 1-based user convention.
struct ContrastScenario {
  std::vector<int64_t> available;
  std::vector<int64_t> missing;
  int64_t n_contrasts = 0;

  static ContrastScenario from_available(const std::vector<int64_t>& available, int64_t P);

  void validate() const;
  int64_t n_available() const { return static_cast<int64_t>(available.size()); }
  int64_t n_missing() const { return static_cast<int64_t>(missing.size()); }

  /// Availability bitstring in contrast index order, e.g. "101".
  std::string bitstring() const;
};

/// All 2^P - 2 valid scenarios, ordered by availability bitmask.
std::vector<ContrastScenario> all_scenarios(int64_t P);
/// The P single-missing scenarios, ordered by missing contrast.
std::vector<ContrastScenario> single_missing_scenarios(int64_t P);

}  // namespace mmt
