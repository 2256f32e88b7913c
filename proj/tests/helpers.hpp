// Shared test utilities: central finite-difference gradient checking and
// random tensor construction.
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "mmt/ops.hpp"
#include "mmt/tensor.hpp"

namespace testutil {

inline mmt::Tensor random_tensor(mmt::Shape shape, mmt::Rng& rng, double lo = -1.0,
                                 double hi = 1.0) {
  mmt::Tensor t(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// Checks d(scalar F(inputs))/d(inputs) against central differences.
/// F must rebuild its graph from the given tensors on every call.
inline void check_gradients(const std::function<mmt::Tensor(const std::vector<mmt::Tensor>&)>& f,
                            std::vector<mmt::Tensor> inputs, double h = 1e-5,
                            double tol = 1e-6, int64_t max_probes_per_input = 0) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();  // tensors share storage with the caller; drop stale grads
  }

  std::vector<std::vector<double>> analytic;
  {
    mmt::Tape tape;
    mmt::Tensor out = f(inputs);
    REQUIRE(out.numel() == 1);
    tape.backward(out);
    for (auto& t : inputs)
      analytic.push_back(t.has_grad() ? t.grad() : std::vector<double>(t.numel(), 0.0));
  }

  for (size_t i = 0; i < inputs.size(); ++i) {
    mmt::Tensor& t = inputs[i];
    const int64_t n = t.numel();
    const int64_t stride =
        (max_probes_per_input > 0 && n > max_probes_per_input) ? n / max_probes_per_input : 1;
    for (int64_t j = 0; j < n; j += stride) {
      const double orig = t.data()[j];
      t.data()[j] = orig + h;
      const double fp = f(inputs).item();
      t.data()[j] = orig - h;
      const double fm = f(inputs).item();
      t.data()[j] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[i][j];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      INFO("input ", i, " element ", j, " analytic ", a, " numeric ", numeric);
      CHECK(std::abs(a - numeric) / denom < tol);
    }
  }
}

}  // namespace testutil
