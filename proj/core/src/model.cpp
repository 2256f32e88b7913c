#include "mmt/model.hpp"

namespace mmt {

int64_t MmtConfig::heads_at(int64_t s) const {
  if (!heads.empty()) {
    if (s < 0 || s >= static_cast<int64_t>(heads.size()))
      throw ValidationError("heads list shorter than scale count");
    return heads[static_cast<size_t>(s)];
  }
  int64_t d = dim_at(s);
  if (d % 32 == 0) return d / 32;  // keeps d_head = 32 at every scale
  if (d % 16 == 0) return d / 16;
  return 1;
}

void MmtConfig::validate() const {
  if (n_contrasts < 2) throw ValidationError("model needs at least 2 contrasts");
  if (base_dim < 1) throw ValidationError("base feature dim must be >= 1");
  if (n_scales < 1) throw ValidationError("need at least one scale");
  if (!heads.empty() && static_cast<int64_t>(heads.size()) != n_scales)
    throw ValidationError("heads list must have one entry per scale");
  int64_t div = patch << (n_scales - 1);
  if (img_h % div != 0)
    throw ValidationError("image height " + std::to_string(img_h) + " not divisible by " +
                          std::to_string(div) + " (patch * 2^(scales-1))");
  if (img_w % div != 0)
    throw ValidationError("image width " + std::to_string(img_w) + " not divisible by " +
                          std::to_string(div));
  for (int64_t s = 0; s < n_scales; ++s) {
    if (grid_h(s) % win_h(s) != 0 || grid_w(s) % win_w(s) != 0)
      throw ValidationError("token grid " + std::to_string(grid_h(s)) + "x" +
                            std::to_string(grid_w(s)) + " at scale " + std::to_string(s) +
                            " not divisible by window");
    if (dim_at(s) % heads_at(s) != 0)
      throw ValidationError("heads must divide feature dim at scale " + std::to_string(s));
  }
}

MmtModel::MmtModel(MmtConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(seed);
  const int64_t P = cfg_.n_contrasts;
  const int64_t S = cfg_.n_scales;
  const int64_t d0 = cfg_.dim_at(0);

  for (int64_t c = 0; c < P; ++c)
    enc_cnn_.push_back(make_image_encode(params_, "enc_cnn." + std::to_string(c), cfg_.base_dim, rng));
  for (int64_t c = 0; c < P; ++c)
    contrast_encodings_.push_back(
        params_.add("contrast_encoding." + std::to_string(c), {d0}, Init::Normal02, rng));

  for (int64_t s = 0; s + 1 < S; ++s) {
    DownStage st;
    int64_t d = cfg_.dim_at(s);
    std::string pre = "enc.down" + std::to_string(s);
    st.b0 = make_encoder_block(params_, pre + ".block0", d, cfg_.heads_at(s), cfg_.win_h(s),
                               cfg_.win_w(s), rng);
    st.b1 = make_encoder_block(params_, pre + ".block1", d, cfg_.heads_at(s), cfg_.win_h(s),
                               cfg_.win_w(s), rng);
    st.merge_w = params_.add(pre + ".merge_w", {4 * d, 2 * d}, Init::XavierUniform, rng);
    down_.push_back(std::move(st));
  }
  {
    int64_t s = S - 1;
    int64_t d = cfg_.dim_at(s);
    bottleneck0_ = make_encoder_block(params_, "enc.bottleneck.block0", d, cfg_.heads_at(s),
                                      cfg_.win_h(s), cfg_.win_w(s), rng);
    bottleneck1_ = make_encoder_block(params_, "enc.bottleneck.block1", d, cfg_.heads_at(s),
                                      cfg_.win_h(s), cfg_.win_w(s), rng);
  }
  for (int64_t s = S - 2; s >= 0; --s) {
    UpStage st;
    int64_t d = cfg_.dim_at(s);
    int64_t d_coarse = cfg_.dim_at(s + 1);
    std::string pre = "enc.up" + std::to_string(s);
    st.expand_w = params_.add(pre + ".expand_w", {d_coarse, 2 * d_coarse}, Init::XavierUniform, rng);
    st.fuse_w = params_.add(pre + ".fuse_w", {2 * d, d}, Init::XavierUniform, rng);
    st.fuse_b = params_.add(pre + ".fuse_b", {d}, Init::Zero, rng);
    st.b0 = make_encoder_block(params_, pre + ".block0", d, cfg_.heads_at(s), cfg_.win_h(s),
                               cfg_.win_w(s), rng);
    st.b1 = make_encoder_block(params_, pre + ".block1", d, cfg_.heads_at(s), cfg_.win_h(s),
                               cfg_.win_w(s), rng);
    up_.push_back(std::move(st));
  }

  for (int64_t c = 0; c < P; ++c)
    queries_.push_back(
        params_.add("contrast_query." + std::to_string(c), {cfg_.dim_at(S - 1)}, Init::Normal02, rng));
  for (int64_t s = S - 1; s >= 0; --s) {
    DecStage st;
    int64_t d = cfg_.dim_at(s);
    std::string pre = "dec.scale" + std::to_string(s);
    st.b0 = make_decoder_block(params_, pre + ".block0", d, cfg_.heads_at(s), cfg_.win_h(s),
                               cfg_.win_w(s), rng);
    st.b1 = make_decoder_block(params_, pre + ".block1", d, cfg_.heads_at(s), cfg_.win_h(s),
                               cfg_.win_w(s), rng);
    if (s > 0) st.expand_w = params_.add(pre + ".expand_w", {d, 2 * d}, Init::XavierUniform, rng);
    dec_.push_back(std::move(st));
  }
  for (int64_t c = 0; c < P; ++c)
    dec_cnn_.push_back(make_image_decode(params_, "dec_cnn." + std::to_string(c), cfg_.base_dim, rng));

  int64_t expected = expected_param_count(cfg_);
  if (params_.total_params() != expected)
    throw RuntimeAbort("parameter count " + std::to_string(params_.total_params()) +
                       " does not match expected " + std::to_string(expected));
}

namespace {
int64_t mha_count(int64_t d) { return 4 * (d * d + d); }
int64_t relpos_count(int64_t wh, int64_t ww, int64_t heads) {
  return (2 * wh - 1) * (2 * ww - 1) * heads;
}
int64_t mlp_count(int64_t d) {
  int64_t h = kMlpHiddenRatio * d;
  return d * h + h + h * d + d;
}
int64_t ln_count(int64_t d) { return 2 * d; }
int64_t enc_block_count(int64_t d, int64_t wh, int64_t ww, int64_t heads) {
  return 2 * ln_count(d) + mha_count(d) + relpos_count(wh, ww, heads) + mlp_count(d);
}
int64_t dec_block_count(int64_t d, int64_t wh, int64_t ww, int64_t heads) {
  return 3 * ln_count(d) + 2 * (mha_count(d) + relpos_count(wh, ww, heads)) + mlp_count(d);
}
}  // namespace

int64_t MmtModel::expected_param_count(const MmtConfig& cfg) {
  const int64_t P = cfg.n_contrasts, C = cfg.base_dim, S = cfg.n_scales;
  int64_t n = 0;
  n += P * (C * 1 * 9 + C + C * C * 9 + C);  // image encode CNNs
  n += P * (C * C * 9 + C + 1 * C * 9 + 1);  // image decode CNNs
  n += P * cfg.dim_at(0);                    // contrast encodings
  n += P * cfg.dim_at(S - 1);                // contrast queries
  for (int64_t s = 0; s < S; ++s) {
    int64_t d = cfg.dim_at(s), wh = cfg.win_h(s), ww = cfg.win_w(s), h = cfg.heads_at(s);
    int64_t enc_blocks = (s == S - 1) ? 2 : 4;  // down+up pairs, or the bottleneck pair
    n += enc_blocks * enc_block_count(d, wh, ww, h);
    n += 2 * dec_block_count(d, wh, ww, h);
    if (s + 1 < S) {
      n += 4 * d * 2 * d;          // patch merge linear
      n += 2 * d * d + d;          // skip fusion linear
    }
    if (s > 0) n += d * 2 * d;     // decoder expand linear
  }
  for (int64_t s = S - 2; s >= 0; --s) {
    int64_t dc = cfg.dim_at(s + 1);
    n += dc * 2 * dc;  // encoder up-path expand linear
  }
  return n;
}

void MmtModel::check_images(const std::vector<Tensor>& images,
                            const std::vector<int64_t>& contrast_ids) const {
  if (images.empty()) throw ValidationError("forward requires at least one available contrast");
  if (images.size() != contrast_ids.size())
    throw ValidationError("image list and contrast id list differ in length");
  for (size_t i = 0; i < images.size(); ++i) {
    if (contrast_ids[i] < 0 || contrast_ids[i] >= cfg_.n_contrasts)
      throw ValidationError("contrast id " + std::to_string(contrast_ids[i]) + " out of range");
    for (size_t j = 0; j < i; ++j)
      if (contrast_ids[j] == contrast_ids[i])
        throw ValidationError("duplicate contrast id " + std::to_string(contrast_ids[i]));
    const Shape& s = images[i].shape();
    if (s != Shape{1, cfg_.img_h, cfg_.img_w})
      throw ValidationError("input image " + std::to_string(i) + " has shape " + shape_str(s) +
                            ", expected [1," + std::to_string(cfg_.img_h) + "," +
                            std::to_string(cfg_.img_w) + "]");
  }
}

FeaturePyramid MmtModel::encode(const std::vector<Tensor>& images,
                                const std::vector<int64_t>& contrast_ids) const {
  check_images(images, contrast_ids);
  const int64_t M = static_cast<int64_t>(images.size());
  const int64_t S = cfg_.n_scales;
  const int64_t C = cfg_.base_dim;

  std::vector<Tensor> feats, encs;
  for (size_t i = 0; i < images.size(); ++i) {
    Tensor f = image_encode(images[i], enc_cnn_[static_cast<size_t>(contrast_ids[i])]);
    feats.push_back(ops::reshape(f, {1, C, cfg_.img_h, cfg_.img_w}));
    encs.push_back(ops::reshape(contrast_encodings_[static_cast<size_t>(contrast_ids[i])],
                                {1, 1, cfg_.dim_at(0)}));
  }
  Tensor stacked = ops::concat(feats, 0);                       // [M,C,H,W]
  Tensor tokens = geom::patch_partition(stacked, cfg_.patch);   // [M,T0,16C]
  tokens = ops::add(tokens, ops::concat(encs, 0));              // contrast encodings, once

  std::vector<Tensor> skips;
  Tensor z = tokens;
  for (int64_t s = 0; s + 1 < S; ++s) {
    const DownStage& st = down_[static_cast<size_t>(s)];
    z = encoder_block_pair(z, cfg_.grid_h(s), cfg_.grid_w(s), st.b0, st.b1, cfg_.win_h(s),
                           cfg_.win_w(s));
    skips.push_back(z);
    z = geom::patch_merge(z, cfg_.grid_h(s), cfg_.grid_w(s), st.merge_w);
  }
  z = encoder_block_pair(z, cfg_.grid_h(S - 1), cfg_.grid_w(S - 1), bottleneck0_, bottleneck1_,
                         cfg_.win_h(S - 1), cfg_.win_w(S - 1));

  FeaturePyramid pyr;
  pyr.n_available = M;
  pyr.scales.assign(static_cast<size_t>(S), Tensor());
  pyr.scales[static_cast<size_t>(S - 1)] = z;
  for (int64_t s = S - 2; s >= 0; --s) {
    const UpStage& st = up_[static_cast<size_t>(S - 2 - s)];
    z = geom::patch_expand(z, cfg_.grid_h(s + 1), cfg_.grid_w(s + 1), 2, st.expand_w);
    Tensor cat = ops::concat({z, skips[static_cast<size_t>(s)]}, 2);
    int64_t d = cfg_.dim_at(s);
    Tensor fused = ops::linear(ops::reshape(cat, {M * cfg_.grid_h(s) * cfg_.grid_w(s), 2 * d}),
                               st.fuse_w, st.fuse_b);
    z = ops::reshape(fused, {M, cfg_.grid_h(s) * cfg_.grid_w(s), d});
    z = encoder_block_pair(z, cfg_.grid_h(s), cfg_.grid_w(s), st.b0, st.b1, cfg_.win_h(s),
                           cfg_.win_w(s));
    pyr.scales[static_cast<size_t>(s)] = z;
  }
  return pyr;
}

DecodeResult MmtModel::decode(const FeaturePyramid& pyramid, int64_t target, bool capture) const {
  if (target < 0 || target >= cfg_.n_contrasts)
    throw ValidationError("unknown target contrast id " + std::to_string(target));
  const int64_t S = cfg_.n_scales;
  if (static_cast<int64_t>(pyramid.scales.size()) != S)
    throw ValidationError("feature pyramid scale count mismatch");

  int64_t d = cfg_.dim_at(S - 1);
  int64_t g = cfg_.grid_h(S - 1) * cfg_.grid_w(S - 1);
  // query broadcast over the coarsest grid seeds the target feature map
  Tensor y = ops::add(Tensor::zeros({1, g, d}),
                      ops::reshape(queries_[static_cast<size_t>(target)], {1, 1, d}));

  DecodeResult res;
  for (int64_t s = S - 1; s >= 0; --s) {
    const DecStage& st = dec_[static_cast<size_t>(S - 1 - s)];
    DecoderPairOut pr = decoder_block_pair(y, pyramid.scales[static_cast<size_t>(s)],
                                           cfg_.grid_h(s), cfg_.grid_w(s), st.b0, st.b1,
                                           cfg_.win_h(s), cfg_.win_w(s), capture);
    y = pr.y;
    if (capture) {
      bool shifted = false;
      for (Tensor& wts : pr.cross_weights) {
        AttentionRecordEntry e;
        e.weights = wts;
        e.scale = s;
        e.grid_h = cfg_.grid_h(s);
        e.grid_w = cfg_.grid_w(s);
        e.spec = make_window_spec(cfg_.grid_h(s), cfg_.grid_w(s), cfg_.win_h(s), cfg_.win_w(s),
                                  shifted);
        res.record.push_back(std::move(e));
        shifted = true;
      }
    }
    if (s > 0) y = geom::patch_expand(y, cfg_.grid_h(s), cfg_.grid_w(s), 2, st.expand_w);
  }
  y = geom::patch_expand(y, cfg_.grid_h(0), cfg_.grid_w(0), 4, Tensor());  // [1, H*W, C]
  Tensor feat = geom::patch_unpartition(y, cfg_.base_dim, cfg_.img_h, cfg_.img_w, 1);
  feat = ops::reshape(feat, {cfg_.base_dim, cfg_.img_h, cfg_.img_w});
  res.image = image_decode(feat, dec_cnn_[static_cast<size_t>(target)]);
  return res;
}

ForwardResult MmtModel::forward(const std::vector<Tensor>& images,
                                const std::vector<int64_t>& contrast_ids,
                                const std::vector<int64_t>& targets, bool capture) const {
  FeaturePyramid pyr = encode(images, contrast_ids);
  ForwardResult out;
  for (int64_t t : targets) {
    DecodeResult r = decode(pyr, t, capture);
    out.images.push_back(std::move(r.image));
    out.records.push_back(std::move(r.record));
  }
  return out;
}

}  // namespace mmt
