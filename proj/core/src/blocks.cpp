#include "mmt/blocks.hpp"

namespace mmt {

geom::WindowSpec make_window_spec(int64_t h, int64_t w, int64_t w_h, int64_t w_w, bool shifted) {
  int64_t wh = std::min(w_h, h);
  int64_t ww = std::min(w_w, w);
  geom::WindowSpec spec{wh, ww, 0, 0};
  if (shifted) {
    spec.shift_h = (wh == h) ? 0 : wh / 2;
    spec.shift_w = (ww == w) ? 0 : ww / 2;
  }
  return spec;
}

Tensor mlp_forward(const Tensor& x, const MlpParams& p) {
  int64_t m = x.dim(0), t = x.dim(1), d = x.dim(2);
  Tensor h = ops::linear(ops::reshape(x, {m * t, d}), p.w1, p.b1);
  h = ops::gelu(h);
  h = ops::linear(h, p.w2, p.b2);
  return ops::reshape(h, {m, t, d});
}

Tensor layernorm_tokens(const Tensor& x, const LayerNormParams& p) {
  return ops::layernorm(x, p.gamma, p.beta);
}

Tensor encoder_block(const Tensor& z, int64_t h, int64_t w, const EncoderBlockParams& p,
                     const geom::WindowSpec& spec) {
  Tensor a = mw_mha(layernorm_tokens(z, p.ln1), h, w, p.attn, p.bias, spec).output;
  Tensor z1 = ops::add(a, z);
  Tensor m = mlp_forward(layernorm_tokens(z1, p.ln2), p.mlp);
  return ops::add(m, z1);
}

Tensor encoder_block_pair(const Tensor& z, int64_t h, int64_t w, const EncoderBlockParams& first,
                          const EncoderBlockParams& second, int64_t w_h, int64_t w_w) {
  Tensor z1 = encoder_block(z, h, w, first, make_window_spec(h, w, w_h, w_w, false));
  return encoder_block(z1, h, w, second, make_window_spec(h, w, w_h, w_w, true));
}

DecoderBlockOut decoder_block(const Tensor& y, const Tensor& f, int64_t h, int64_t w,
                              const DecoderBlockParams& p, const geom::WindowSpec& spec,
                              bool capture) {
  Tensor s = mw_mha(layernorm_tokens(y, p.ln_self), h, w, p.self_attn, p.self_bias, spec).output;
  Tensor y1 = ops::add(s, y);
  MSwinResult cross = mw_cross_mha(layernorm_tokens(y1, p.ln_cross), f, h, w, p.cross_attn,
                                   p.cross_bias, spec, capture);
  Tensor y2 = ops::add(cross.output, y1);
  Tensor m = mlp_forward(layernorm_tokens(y2, p.ln_mlp), p.mlp);
  return {ops::add(m, y2), cross.weights};
}

DecoderPairOut decoder_block_pair(const Tensor& y, const Tensor& f, int64_t h, int64_t w,
                                  const DecoderBlockParams& first,
                                  const DecoderBlockParams& second, int64_t w_h, int64_t w_w,
                                  bool capture) {
  DecoderBlockOut a = decoder_block(y, f, h, w, first, make_window_spec(h, w, w_h, w_w, false),
                                    capture);
  DecoderBlockOut b = decoder_block(a.y, f, h, w, second, make_window_spec(h, w, w_h, w_w, true),
                                    capture);
  DecoderPairOut out;
  out.y = b.y;
  if (capture) {
    out.cross_weights.push_back(a.cross_weights);
    out.cross_weights.push_back(b.cross_weights);
  }
  return out;
}

Tensor image_encode(const Tensor& img, const ConvBlockParams& p) {
  if (img.ndim() != 3 || img.dim(0) != 1)
    throw ValidationError("image_encode expects [1,H,W], got " + shape_str(img.shape()));
  int64_t H = img.dim(1), W = img.dim(2);
  Tensor x = ops::reshape(img, {1, 1, H, W});
  x = ops::conv2d(x, p.w1, p.b1, 1, 1);
  x = ops::relu(x);
  x = ops::conv2d(x, p.w2, p.b2, 1, 1);
  return ops::reshape(x, {x.dim(1), H, W});
}

Tensor image_decode(const Tensor& feat, const ConvBlockParams& p) {
  if (feat.ndim() != 3)
    throw ValidationError("image_decode expects [C,H,W], got " + shape_str(feat.shape()));
  int64_t C = feat.dim(0), H = feat.dim(1), W = feat.dim(2);
  Tensor x = ops::reshape(feat, {1, C, H, W});
  x = ops::conv2d(x, p.w1, p.b1, 1, 1);
  x = ops::relu(x);
  x = ops::conv2d(x, p.w2, p.b2, 1, 1);
  return ops::reshape(x, {1, H, W});
}

LayerNormParams make_layernorm(ParamRegistry& reg, const std::string& prefix, int64_t d,
                               Rng& rng) {
  LayerNormParams p;
  p.gamma = reg.add(prefix + ".gamma", {d}, Init::One, rng);
  p.beta = reg.add(prefix + ".beta", {d}, Init::Zero, rng);
  return p;
}

MlpParams make_mlp(ParamRegistry& reg, const std::string& prefix, int64_t d, Rng& rng) {
  int64_t hidden = kMlpHiddenRatio * d;
  MlpParams p;
  p.w1 = reg.add(prefix + ".w1", {d, hidden}, Init::XavierUniform, rng);
  p.b1 = reg.add(prefix + ".b1", {hidden}, Init::Zero, rng);
  p.w2 = reg.add(prefix + ".w2", {hidden, d}, Init::XavierUniform, rng);
  p.b2 = reg.add(prefix + ".b2", {d}, Init::Zero, rng);
  return p;
}

MhaParams make_mha(ParamRegistry& reg, const std::string& prefix, int64_t d, int64_t heads,
                   Rng& rng) {
  if (heads < 1 || d % heads != 0)
    throw ValidationError("head count " + std::to_string(heads) + " must divide feature dim " +
                          std::to_string(d));
  MhaParams p;
  p.heads = heads;
  p.wq = reg.add(prefix + ".wq", {d, d}, Init::XavierUniform, rng);
  p.bq = reg.add(prefix + ".bq", {d}, Init::Zero, rng);
  p.wk = reg.add(prefix + ".wk", {d, d}, Init::XavierUniform, rng);
  p.bk = reg.add(prefix + ".bk", {d}, Init::Zero, rng);
  p.wv = reg.add(prefix + ".wv", {d, d}, Init::XavierUniform, rng);
  p.bv = reg.add(prefix + ".bv", {d}, Init::Zero, rng);
  p.wo = reg.add(prefix + ".wo", {d, d}, Init::XavierUniform, rng);
  p.bo = reg.add(prefix + ".bo", {d}, Init::Zero, rng);
  return p;
}

RelPosBias make_rel_pos_bias(ParamRegistry& reg, const std::string& prefix, int64_t w_h,
                             int64_t w_w, int64_t heads, Rng& rng) {
  RelPosBias b;
  b.w_h = w_h;
  b.w_w = w_w;
  b.table = reg.add(prefix + ".rel_pos_table", {(2 * w_h - 1) * (2 * w_w - 1), heads},
                    Init::Normal02, rng);
  return b;
}

EncoderBlockParams make_encoder_block(ParamRegistry& reg, const std::string& prefix, int64_t d,
                                      int64_t heads, int64_t w_h, int64_t w_w, Rng& rng) {
  EncoderBlockParams p;
  p.ln1 = make_layernorm(reg, prefix + ".ln1", d, rng);
  p.attn = make_mha(reg, prefix + ".attn", d, heads, rng);
  p.bias = make_rel_pos_bias(reg, prefix + ".attn", w_h, w_w, heads, rng);
  p.ln2 = make_layernorm(reg, prefix + ".ln2", d, rng);
  p.mlp = make_mlp(reg, prefix + ".mlp", d, rng);
  return p;
}

DecoderBlockParams make_decoder_block(ParamRegistry& reg, const std::string& prefix, int64_t d,
                                      int64_t heads, int64_t w_h, int64_t w_w, Rng& rng) {
  DecoderBlockParams p;
  p.ln_self = make_layernorm(reg, prefix + ".ln_self", d, rng);
  p.self_attn = make_mha(reg, prefix + ".self", d, heads, rng);
  p.self_bias = make_rel_pos_bias(reg, prefix + ".self", w_h, w_w, heads, rng);
  p.ln_cross = make_layernorm(reg, prefix + ".ln_cross", d, rng);
  p.cross_attn = make_mha(reg, prefix + ".cross", d, heads, rng);
  p.cross_bias = make_rel_pos_bias(reg, prefix + ".cross", w_h, w_w, heads, rng);
  p.ln_mlp = make_layernorm(reg, prefix + ".ln_mlp", d, rng);
  p.mlp = make_mlp(reg, prefix + ".mlp", d, rng);
  return p;
}

ConvBlockParams make_image_encode(ParamRegistry& reg, const std::string& prefix, int64_t C,
                                  Rng& rng) {
  ConvBlockParams p;
  p.w1 = reg.add(prefix + ".w1", {C, 1, 3, 3}, Init::XavierUniform, rng);
  p.b1 = reg.add(prefix + ".b1", {C}, Init::Zero, rng);
  p.w2 = reg.add(prefix + ".w2", {C, C, 3, 3}, Init::XavierUniform, rng);
  p.b2 = reg.add(prefix + ".b2", {C}, Init::Zero, rng);
  return p;
}

ConvBlockParams make_image_decode(ParamRegistry& reg, const std::string& prefix, int64_t C,
                                  Rng& rng) {
  ConvBlockParams p;
  p.w1 = reg.add(prefix + ".w1", {C, C, 3, 3}, Init::XavierUniform, rng);
  p.b1 = reg.add(prefix + ".b1", {C}, Init::Zero, rng);
  p.w2 = reg.add(prefix + ".w2", {1, C, 3, 3}, Init::XavierUniform, rng);
  p.b2 = reg.add(prefix + ".b2", {1}, Init::Zero, rng);
  return p;
}

}  // namespace mmt
