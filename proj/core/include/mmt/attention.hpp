#pragma once

#include "mmt/geometry.hpp"
#include "mmt/ops.hpp"

namespace mmt {

/// Fused-head projections: wq/wk/wv/wo are [d, d] with h heads of width d/h.
struct MhaParams {
  Tensor wq, bq;
  Tensor wk, bk;
  Tensor wv, bv;
  Tensor wo, bo;
  int64_t heads = 1;

  int64_t d_model() const { return wq.dim(0); }
  int64_t d_head() const { return d_model() / heads; }
};

/// Learnable table indexed by spatial relative offset, one column per head.
/// The bias never depends on contrast identity: token pairs at the same
/// spatial offset share a table row across all contrast pairs.
struct RelPosBias {
  Tensor table;  // [(2*w_h-1)*(2*w_w-1), heads]
  int64_t w_h = 0;
  int64_t w_w = 0;

  // Bias tensor [heads, Mq*w_h*w_w, Mk*w_h*w_w] gathered from the table
  // (differentiable into the table).
  Tensor materialize(int64_t m_q, int64_t m_k, int64_t heads) const;
};

struct AttentionOut {
  Tensor output;
  Tensor weights;  // post-softmax [.., n_q, n_k]
};

/// softmax(Q K^T / sqrt(d_k) + bias + mask) V. bias/mask may be empty tensors;
/// both broadcast against the [.., n_q, n_k] logits. Multiplies inside this
/// call are counted by flops::CountingScope.
AttentionOut attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& bias,
                       const Tensor& mask);

struct MSwinResult {
  Tensor output;
  // Head-averaged, detached [n_windows, Gq, Gk]; empty unless capture was set.
  Tensor weights;
};

/// Windowed multi-contrast self attention over tokens [M, h*w, d].
MSwinResult mw_mha(const Tensor& tokens, int64_t h, int64_t w, const MhaParams& params,
                   const RelPosBias& bias, const geom::WindowSpec& spec, bool capture = false);

/// Windowed cross attention: queries from the single-contrast target feature
/// map [1, h*w, d], keys/values from the M input-contrast features [M, h*w, d].
MSwinResult mw_cross_mha(const Tensor& q_tokens, const Tensor& kv_tokens, int64_t h, int64_t w,
                         const MhaParams& params, const RelPosBias& bias,
                         const geom::WindowSpec& spec, bool capture = false);

}  // namespace mmt
