#pragma once

#include "mmt/tensor.hpp"

namespace mmt::ops {

// Elementwise with numpy-style broadcasting (trailing alignment, extent-1 expands).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

// Batched matrix product [..,m,k] x [..,k,n] -> [..,m,n]; batch dims broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor softmax(const Tensor& x, int axis);
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double alpha);
Tensor gelu(const Tensor& x);

// x [N,Ci,H,W], w [Co,Ci,kh,kw], bias [Co] (may be empty tensor for none).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);

Tensor concat(const std::vector<Tensor>& parts, int axis);
std::vector<Tensor> split(const Tensor& x, int axis, const std::vector<int64_t>& sizes);

Tensor reshape(const Tensor& x, Shape new_shape);
Tensor permute(const Tensor& x, const std::vector<int>& perm);

// Row gather on x viewed as [R, last_dim]; out rows follow `map`. Gradients
// scatter-add, so maps need not be permutations.
Tensor index_rows(const Tensor& x, std::vector<int64_t> map, Shape out_shape);
// Element gather on flat storage.
Tensor index_elements(const Tensor& x, std::vector<int64_t> map, Shape out_shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor l1_loss(const Tensor& a, const Tensor& b);
Tensor mse_loss(const Tensor& a, const Tensor& b);

// x [.., d] times w [d, n] plus optional bias [n].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

}  // namespace mmt::ops
