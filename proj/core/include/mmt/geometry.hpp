#pragma once

#include "mmt/ops.hpp"
#include "mmt/tensor.hpp"

namespace mmt::geom {

/// Local attention window on the token grid. shift is the cyclic offset
/// applied before partitioning (0 = regular windows).
struct WindowSpec {
  int64_t w_h = 8;
  int64_t w_w = 8;
  int64_t shift_h = 0;
  int64_t shift_w = 0;

  bool shifted() const { return shift_h > 0 || shift_w > 0; }
  void validate() const;

  static WindowSpec regular(int64_t wh, int64_t ww) { return {wh, ww, 0, 0}; }
  static WindowSpec shifted_default(int64_t wh, int64_t ww) { return {wh, ww, wh / 2, ww / 2}; }
};

constexpr double kMaskValue = -1e9;

int64_t n_windows(int64_t h, int64_t w, const WindowSpec& spec);
void check_window_divisible(int64_t h, int64_t w, const WindowSpec& spec);

// ---- index maps (pure; tested in isolation) ----

// Element map [M,C,H,W] -> [M, (H/p)(W/p), p*p*C]; token feature layout is
// pixel-major within the patch: f = (dy*p + dx)*C + c.
std::vector<int64_t> patch_partition_map(int64_t M, int64_t C, int64_t H, int64_t W, int64_t patch);
std::vector<int64_t> patch_unpartition_map(int64_t M, int64_t C, int64_t H, int64_t W, int64_t patch);

// Row map grouping 2x2 token neighborhoods: [M, h*w, d] rows -> [M, (h/2)(w/2), 4d].
std::vector<int64_t> merge_group_map(int64_t M, int64_t h, int64_t w);

// Row map (row width d/factor^2 after the expand linear) splitting each token
// into factor x factor neighbors; exact inverse of the merge grouping.
std::vector<int64_t> expand_split_map(int64_t M, int64_t h, int64_t w, int64_t factor);

// Row map [M, h*w, d] -> [nW, M*w_h*w_w, d]; applies the cyclic shift, then
// groups all contrasts sharing a spatial window (contrast-major within window).
std::vector<int64_t> window_partition_map(int64_t M, int64_t h, int64_t w, const WindowSpec& spec);
std::vector<int64_t> window_reverse_map(int64_t M, int64_t h, int64_t w, const WindowSpec& spec);

// Pre-shift region label of a shifted-grid coordinate; tokens may attend only
// within equal labels. Spatial-only, identical for every contrast.
int region_label(int64_t coord, int64_t extent, int64_t window, int64_t shift);

// Additive mask [nW, Mq*w_h*w_w, Mk*w_h*w_w]: 0 same pre-shift region,
// kMaskValue otherwise. Self attention uses Mq == Mk == M; decoder cross
// attention uses Mq = 1 (queries carry one contrast), Mk = M.
Tensor shift_mask(int64_t h, int64_t w, const WindowSpec& spec, int64_t m_q, int64_t m_k);

// ---- tensor-level ops built on the maps ----

Tensor patch_partition(const Tensor& img, int64_t patch);  // img [M,C,H,W]
Tensor patch_unpartition(const Tensor& tokens, int64_t C, int64_t H, int64_t W, int64_t patch);

// Learned merge: 2x2 grouping then linear [4d, 2d].
Tensor patch_merge(const Tensor& tokens, int64_t h, int64_t w, const Tensor& weight);

// factor 2: linear [d, 2d] then split into 2x2 neighbors of dim d/2.
// factor 4: pure re-indexing into 4x4 neighbors of dim d/16 (weight ignored).
Tensor patch_expand(const Tensor& tokens, int64_t h, int64_t w, int64_t factor,
                    const Tensor& weight);

Tensor window_partition(const Tensor& tokens, int64_t h, int64_t w, const WindowSpec& spec);
Tensor window_reverse(const Tensor& wtokens, int64_t M, int64_t h, int64_t w,
                      const WindowSpec& spec);

}  // namespace mmt::geom
