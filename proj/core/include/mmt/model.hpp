#pragma once

#include "mmt/blocks.hpp"
#include "mmt/scenario.hpp"

namespace mmt {

/// Model hyperparameters. Scale index s runs 0 (finest, H/4 token grid,
/// feature dim 16C) to n_scales-1 (coarsest, dim 16C * 2^(S-1)).
struct MmtConfig {
  int64_t n_contrasts = 3;  // P
  int64_t base_dim = 6;     // C
  int64_t n_scales = 4;     // S
  int64_t img_h = 64;
  int64_t img_w = 64;
  int64_t window_h = 8;
  int64_t window_w = 8;
  int64_t patch = 4;
  std::vector<int64_t> heads;  // per scale, finest first; empty = derive from dims

  int64_t dim_at(int64_t s) const { return (16 * base_dim) << s; }
  int64_t grid_h(int64_t s) const { return (img_h / patch) >> s; }
  int64_t grid_w(int64_t s) const { return (img_w / patch) >> s; }
  int64_t win_h(int64_t s) const { return std::min(window_h, grid_h(s)); }
  int64_t win_w(int64_t s) const { return std::min(window_w, grid_w(s)); }
  int64_t heads_at(int64_t s) const;

  void validate() const;
};

/// Per-contrast encoder features, finest (index 0) to coarsest.
struct FeaturePyramid {
  std::vector<Tensor> scales;  // scales[s]: [M, grid_h(s)*grid_w(s), dim_at(s)]
  int64_t n_available = 0;
};

/// One captured decoder cross-attention map plus the geometry needed to
/// interpret it (key columns are contrast-major within each window).
struct AttentionRecordEntry {
  Tensor weights;  // [n_windows, w_h*w_w, M*w_h*w_w], detached
  int64_t scale = 0;
  int64_t grid_h = 0, grid_w = 0;
  geom::WindowSpec spec;
};
using AttentionRecord = std::vector<AttentionRecordEntry>;

struct DecodeResult {
  Tensor image;  // [1, H, W]
  AttentionRecord record;
};

struct ForwardResult {
  std::vector<Tensor> images;            // one per requested target, same order
  std::vector<AttentionRecord> records;  // parallel to images when captured
};

class MmtModel {
 public:
  MmtModel(MmtConfig cfg, uint64_t seed);

  const MmtConfig& config() const { return cfg_; }
  ParamRegistry& params() { return params_; }
  const ParamRegistry& params() const { return params_; }

  FeaturePyramid encode(const std::vector<Tensor>& images,
                        const std::vector<int64_t>& contrast_ids) const;
  DecodeResult decode(const FeaturePyramid& pyramid, int64_t target, bool capture = false) const;
  ForwardResult forward(const std::vector<Tensor>& images, const std::vector<int64_t>& contrast_ids,
                        const std::vector<int64_t>& targets, bool capture = false) const;

  /// Closed-form learnable-scalar count for this config; construction asserts
  /// the registry total against it.
  static int64_t expected_param_count(const MmtConfig& cfg);

 private:
  struct UpStage {
    Tensor expand_w;
    Tensor fuse_w, fuse_b;
    EncoderBlockParams b0, b1;
  };
  struct DecStage {
    DecoderBlockParams b0, b1;
    Tensor expand_w;  // empty at the finest scale
  };
  struct DownStage {
    EncoderBlockParams b0, b1;
    Tensor merge_w;
  };

  MmtConfig cfg_;
  ParamRegistry params_;
  std::vector<ConvBlockParams> enc_cnn_;       // per contrast
  std::vector<Tensor> contrast_encodings_;     // per contrast, [16C]
  std::vector<DownStage> down_;                // s = 0 .. S-2
  EncoderBlockParams bottleneck0_, bottleneck1_;
  std::vector<UpStage> up_;                    // s = S-2 .. 0 (stored in that order)
  std::vector<Tensor> queries_;                // per contrast, [dim_at(S-1)]
  std::vector<DecStage> dec_;                  // s = S-1 .. 0 (stored in that order)
  std::vector<ConvBlockParams> dec_cnn_;       // per contrast

  void check_images(const std::vector<Tensor>& images,
                    const std::vector<int64_t>& contrast_ids) const;
};

}  // namespace mmt
