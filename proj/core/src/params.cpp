#include "mmt/params.hpp"

#include <cmath>

namespace mmt {

namespace {
// fan_in/fan_out: 2D weights are [in, out]; conv kernels are [Co, Ci, kh, kw].
std::pair<int64_t, int64_t> fans(const Shape& s) {
  if (s.size() == 2) return {s[0], s[1]};
  if (s.size() == 4) return {s[1] * s[2] * s[3], s[0] * s[2] * s[3]};
  int64_t n = numel(s);
  return {n, n};
}
}  // namespace

void init_tensor(Tensor& t, Init init, Rng& rng) {
  switch (init) {
    case Init::Zero:
      break;
    case Init::One:
      for (double& v : t.data()) v = 1.0;
      break;
    case Init::XavierUniform: {
      auto [fin, fout] = fans(t.shape());
      double limit = std::sqrt(6.0 / static_cast<double>(fin + fout));
      for (double& v : t.data()) v = rng.uniform(-limit, limit);
      break;
    }
    case Init::Normal02:
      for (double& v : t.data()) v = rng.normal(0.0, 0.02);
      break;
  }
}

Tensor ParamRegistry::add(const std::string& name, Shape shape, Init init, Rng& rng) {
  if (has(name)) throw ValidationError("duplicate parameter name: " + name);
  Tensor t(std::move(shape));
  init_tensor(t, init, rng);
  t.set_requires_grad(true);
  items_.emplace_back(name, t);
  return t;
}

Tensor& ParamRegistry::at(const std::string& name) {
  for (auto& [n, t] : items_)
    if (n == name) return t;
  throw ValidationError("unknown parameter: " + name);
}

const Tensor& ParamRegistry::at(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return t;
  throw ValidationError("unknown parameter: " + name);
}

bool ParamRegistry::has(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return true;
  return false;
}

int64_t ParamRegistry::total_params() const {
  int64_t n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

void ParamRegistry::zero_grad() {
  for (auto& [name, t] : items_) t.zero_grad();
}

}  // namespace mmt
