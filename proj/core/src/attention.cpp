#include "mmt/attention.hpp"

#include <cmath>

namespace mmt {

namespace {

// Plain head average of detached weights [nW, h, Gq, Gk] -> [nW, Gq, Gk].
Tensor head_mean(const Tensor& w4) {
  int64_t nw = w4.dim(0), h = w4.dim(1), gq = w4.dim(2), gk = w4.dim(3);
  Tensor out({nw, gq, gk});
  const auto& src = w4.data();
  auto& dst = out.data();
  for (int64_t b = 0; b < nw; ++b)
    for (int64_t hd = 0; hd < h; ++hd)
      for (int64_t i = 0; i < gq * gk; ++i)
        dst[b * gq * gk + i] += src[(b * h + hd) * gq * gk + i] / h;
  return out;
}

Tensor to_heads(const Tensor& win_tokens, int64_t heads) {
  // [nW, G, d] -> [nW, heads, G, d/heads]
  int64_t nw = win_tokens.dim(0), g = win_tokens.dim(1), d = win_tokens.dim(2);
  Tensor r = ops::reshape(win_tokens, {nw, g, heads, d / heads});
  return ops::permute(r, {0, 2, 1, 3});
}

Tensor from_heads(const Tensor& x) {
  // [nW, heads, G, dk] -> [nW*G, d]
  int64_t nw = x.dim(0), h = x.dim(1), g = x.dim(2), dk = x.dim(3);
  Tensor r = ops::permute(x, {0, 2, 1, 3});
  return ops::reshape(r, {nw * g, h * dk});
}

struct WindowedInputs {
  Tensor q, k, v;  // [nW, heads, *, dk]
  int64_t n_windows;
};

WindowedInputs project_and_partition(const Tensor& q_tokens, const Tensor& kv_tokens, int64_t h,
                                     int64_t w, const MhaParams& p,
                                     const geom::WindowSpec& spec) {
  int64_t mq = q_tokens.dim(0), mk = kv_tokens.dim(0);
  int64_t d = q_tokens.dim(2);
  if (kv_tokens.dim(1) != q_tokens.dim(1))
    throw ValidationError("query and key/value token grids differ: " +
                          shape_str(q_tokens.shape()) + " vs " + shape_str(kv_tokens.shape()));
  Tensor q2 = ops::linear(ops::reshape(q_tokens, {mq * h * w, d}), p.wq, p.bq);
  Tensor k2 = ops::linear(ops::reshape(kv_tokens, {mk * h * w, d}), p.wk, p.bk);
  Tensor v2 = ops::linear(ops::reshape(kv_tokens, {mk * h * w, d}), p.wv, p.bv);
  int64_t nw = geom::n_windows(h, w, spec);
  int64_t sq = spec.w_h * spec.w_w;
  auto qmap = geom::window_partition_map(mq, h, w, spec);
  auto kmap = geom::window_partition_map(mk, h, w, spec);
  Tensor qw = ops::index_rows(q2, std::move(qmap), {nw, mq * sq, d});
  Tensor kw = ops::index_rows(k2, kmap, {nw, mk * sq, d});
  Tensor vw = ops::index_rows(v2, std::move(kmap), {nw, mk * sq, d});
  return {to_heads(qw, p.heads), to_heads(kw, p.heads), to_heads(vw, p.heads), nw};
}

MSwinResult windowed_attention(const Tensor& q_tokens, const Tensor& kv_tokens, int64_t h,
                               int64_t w, const MhaParams& p, const RelPosBias& bias,
                               const geom::WindowSpec& spec, bool capture) {
  if (bias.w_h != spec.w_h || bias.w_w != spec.w_w)
    throw ValidationError("relative position bias table built for a different window size");
  int64_t mq = q_tokens.dim(0), mk = kv_tokens.dim(0);
  int64_t d = q_tokens.dim(2);
  int64_t sq = spec.w_h * spec.w_w;
  auto win = project_and_partition(q_tokens, kv_tokens, h, w, p, spec);
  Tensor b = bias.materialize(mq, mk, p.heads);  // [heads, Gq, Gk]
  Tensor mask;
  if (spec.shifted()) {
    Tensor m3 = geom::shift_mask(h, w, spec, mq, mk);
    mask = ops::reshape(m3, {win.n_windows, 1, mq * sq, mk * sq});
  }
  AttentionOut att = attention(win.q, win.k, win.v, b, mask);
  Tensor merged = from_heads(att.output);  // [nW*Gq, d]
  Tensor back = ops::index_rows(merged, geom::window_reverse_map(mq, h, w, spec), {mq, h * w, d});
  Tensor out = ops::reshape(ops::linear(ops::reshape(back, {mq * h * w, d}), p.wo, p.bo),
                            {mq, h * w, d});
  MSwinResult res;
  res.output = out;
  if (capture) res.weights = head_mean(att.weights.detach());
  return res;
}

}  // namespace

Tensor RelPosBias::materialize(int64_t m_q, int64_t m_k, int64_t heads) const {
  int64_t sq = w_h * w_w;
  int64_t gq = m_q * sq, gk = m_k * sq;
  std::vector<int64_t> map(static_cast<size_t>(heads * gq * gk));
  size_t o = 0;
  for (int64_t hd = 0; hd < heads; ++hd)
    for (int64_t i = 0; i < gq; ++i) {
      int64_t qy = (i % sq) / w_w, qx = (i % sq) % w_w;
      for (int64_t j = 0; j < gk; ++j) {
        int64_t ky = (j % sq) / w_w, kx = (j % sq) % w_w;
        int64_t row = (qy - ky + w_h - 1) * (2 * w_w - 1) + (qx - kx + w_w - 1);
        map[o++] = row * heads + hd;
      }
    }
  return ops::index_elements(table, std::move(map), {heads, gq, gk});
}

AttentionOut attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& bias,
                       const Tensor& mask) {
  int64_t dk = q.dim(-1);
  if (k.dim(-1) != dk)
    throw ValidationError("attention d_k mismatch: " + shape_str(q.shape()) + " vs " +
                          shape_str(k.shape()));
  std::vector<int> perm(static_cast<size_t>(k.ndim()));
  for (int i = 0; i < k.ndim(); ++i) perm[i] = i;
  std::swap(perm[k.ndim() - 2], perm[k.ndim() - 1]);
  Tensor logits;
  {
    flops::CountingScope scope;
    logits = ops::matmul(q, ops::permute(k, perm));
  }
  logits = ops::scale(logits, 1.0 / std::sqrt(static_cast<double>(dk)));
  if (bias.numel() > 0) logits = ops::add(logits, bias);
  if (mask.numel() > 0) logits = ops::add(logits, mask);
  Tensor weights = ops::softmax(logits, -1);
  Tensor out;
  {
    flops::CountingScope scope;
    out = ops::matmul(weights, v);
  }
  return {out, weights};
}

MSwinResult mw_mha(const Tensor& tokens, int64_t h, int64_t w, const MhaParams& params,
                   const RelPosBias& bias, const geom::WindowSpec& spec, bool capture) {
  return windowed_attention(tokens, tokens, h, w, params, bias, spec, capture);
}

MSwinResult mw_cross_mha(const Tensor& q_tokens, const Tensor& kv_tokens, int64_t h, int64_t w,
                         const MhaParams& params, const RelPosBias& bias,
                         const geom::WindowSpec& spec, bool capture) {
  if (q_tokens.dim(0) != 1)
    throw ValidationError("cross attention queries must carry a single contrast");
  return windowed_attention(q_tokens, kv_tokens, h, w, params, bias, spec, capture);
}

}  // namespace mmt
