#pragma once

#include <utility>

#include "mmt/tensor.hpp"

namespace mmt {

enum class Init { Zero, One, XavierUniform, Normal02 };

/// Named learnable tensors in deterministic insertion order; the optimizer,
/// checkpoints, and the parameter-count assertion all iterate this.
class ParamRegistry {
 public:
  Tensor add(const std::string& name, Shape shape, Init init, Rng& rng);

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const;

  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  size_t size() const { return items_.size(); }

  int64_t total_params() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

void init_tensor(Tensor& t, Init init, Rng& rng);

}  // namespace mmt
