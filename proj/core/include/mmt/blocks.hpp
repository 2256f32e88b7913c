#pragma once

#include "mmt/attention.hpp"
#include "mmt/params.hpp"

namespace mmt {

// Two-layer MLP with GELU; hidden width is kMlpHiddenRatio * feature dim.
constexpr int64_t kMlpHiddenRatio = 4;

struct LayerNormParams {
  Tensor gamma, beta;
};

struct MlpParams {
  Tensor w1, b1, w2, b2;
};

struct EncoderBlockParams {
  LayerNormParams ln1, ln2;
  MhaParams attn;
  RelPosBias bias;
  MlpParams mlp;
};

// One extra attention layer relative to the encoder block: the cross layer
// that reads the encoder features (Q from target, K/V from inputs).
struct DecoderBlockParams {
  LayerNormParams ln_self, ln_cross, ln_mlp;
  MhaParams self_attn;
  RelPosBias self_bias;
  MhaParams cross_attn;
  RelPosBias cross_bias;
  MlpParams mlp;
};

struct ConvBlockParams {
  Tensor w1, b1, w2, b2;
};

// Clamps the window to the token grid (coarse scales can be smaller than the
// configured window) and drops the shift on axes the window fully covers.
geom::WindowSpec make_window_spec(int64_t h, int64_t w, int64_t w_h, int64_t w_w, bool shifted);

Tensor mlp_forward(const Tensor& x, const MlpParams& p);
Tensor layernorm_tokens(const Tensor& x, const LayerNormParams& p);

// One M-Swin encoder block: z1 = MW-MHA(LN(z)) + z; z2 = MLP(LN(z1)) + z1.
Tensor encoder_block(const Tensor& z, int64_t h, int64_t w, const EncoderBlockParams& p,
                     const geom::WindowSpec& spec);

// Regular-window block followed by the shifted-window block.
Tensor encoder_block_pair(const Tensor& z, int64_t h, int64_t w, const EncoderBlockParams& first,
                          const EncoderBlockParams& second, int64_t w_h, int64_t w_w);

struct DecoderBlockOut {
  Tensor y;
  Tensor cross_weights;  // empty unless capture
};

// self M(S)W-MHA -> cross M(S)W-MHA against f -> MLP, each pre-norm residual.
DecoderBlockOut decoder_block(const Tensor& y, const Tensor& f, int64_t h, int64_t w,
                              const DecoderBlockParams& p, const geom::WindowSpec& spec,
                              bool capture = false);

struct DecoderPairOut {
  Tensor y;
  std::vector<Tensor> cross_weights;  // one per block when captured
};

DecoderPairOut decoder_block_pair(const Tensor& y, const Tensor& f, int64_t h, int64_t w,
                                  const DecoderBlockParams& first,
                                  const DecoderBlockParams& second, int64_t w_h, int64_t w_w,
                                  bool capture = false);

// Per-contrast shallow CNN: Conv3x3 -> ReLU -> Conv3x3.
Tensor image_encode(const Tensor& img, const ConvBlockParams& p);   // [1,H,W] -> [C,H,W]
Tensor image_decode(const Tensor& feat, const ConvBlockParams& p);  // [C,H,W] -> [1,H,W]

// ---- parameter factories (register under `prefix.`) ----
LayerNormParams make_layernorm(ParamRegistry& reg, const std::string& prefix, int64_t d, Rng& rng);
MlpParams make_mlp(ParamRegistry& reg, const std::string& prefix, int64_t d, Rng& rng);
MhaParams make_mha(ParamRegistry& reg, const std::string& prefix, int64_t d, int64_t heads,
                   Rng& rng);
RelPosBias make_rel_pos_bias(ParamRegistry& reg, const std::string& prefix, int64_t w_h,
                             int64_t w_w, int64_t heads, Rng& rng);
EncoderBlockParams make_encoder_block(ParamRegistry& reg, const std::string& prefix, int64_t d,
                                      int64_t heads, int64_t w_h, int64_t w_w, Rng& rng);
DecoderBlockParams make_decoder_block(ParamRegistry& reg, const std::string& prefix, int64_t d,
                                      int64_t heads, int64_t w_h, int64_t w_w, Rng& rng);
ConvBlockParams make_image_encode(ParamRegistry& reg, const std::string& prefix, int64_t C,
                                  Rng& rng);
ConvBlockParams make_image_decode(ParamRegistry& reg, const std::string& prefix, int64_t C,
                                  Rng& rng);

}  // namespace mmt
