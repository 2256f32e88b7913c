#include "mmt/scenario.hpp"

namespace mmt {

ContrastScenario ContrastScenario::from_available(const std::vector<int64_t>& available,
                                                  int64_t P) {
  ContrastScenario s;
  s.n_contrasts = P;
  s.available = available;
  std::sort(s.available.begin(), s.available.end());
  for (int64_t c = 0; c < P; ++c)
    if (!std::binary_search(s.available.begin(), s.available.end(), c)) s.missing.push_back(c);
  s.available = available;  // preserve caller order
  s.validate();
  return s;
}

void ContrastScenario::validate() const {
  if (n_contrasts < 2) throw ValidationError("scenario needs at least 2 contrasts");
  std::vector<bool> seen(static_cast<size_t>(n_contrasts), false);
  for (int64_t c : available) {
    if (c < 0 || c >= n_contrasts)
      throw ValidationError("available contrast index " + std::to_string(c) + " out of range");
    if (seen[c]) throw ValidationError("duplicate available contrast " + std::to_string(c));
    seen[c] = true;
  }
  for (int64_t c : missing) {
    if (c < 0 || c >= n_contrasts)
      throw ValidationError("missing contrast index " + std::to_string(c) + " out of range");
    if (seen[c])
      throw ValidationError("contrast " + std::to_string(c) + " both available and missing");
    seen[c] = true;
  }
  for (bool b : seen)
    if (!b) throw ValidationError("scenario does not cover all contrasts");
  if (available.empty()) throw ValidationError("scenario with no available contrasts");
  if (missing.empty()) throw ValidationError("scenario with no missing contrasts");
}

std::string ContrastScenario::bitstring() const {
  std::string bits(static_cast<size_t>(n_contrasts), '0');
  for (int64_t c : available) bits[static_cast<size_t>(c)] = '1';
  return bits;
}

std::vector<ContrastScenario> all_scenarios(int64_t P) {
  std::vector<ContrastScenario> out;
  for (int64_t mask = 1; mask < (int64_t{1} << P) - 1; ++mask) {
    std::vector<int64_t> avail;
    for (int64_t c = 0; c < P; ++c)
      if (mask & (int64_t{1} << c)) avail.push_back(c);
    out.push_back(ContrastScenario::from_available(avail, P));
  }
  return out;
}

std::vector<ContrastScenario> single_missing_scenarios(int64_t P) {
  std::vector<ContrastScenario> out;
  for (int64_t miss = 0; miss < P; ++miss) {
    std::vector<int64_t> avail;
    for (int64_t c = 0; c < P; ++c)
      if (c != miss) avail.push_back(c);
    out.push_back(ContrastScenario::from_available(avail, P));
  }
  return out;
}

}  // namespace mmt
