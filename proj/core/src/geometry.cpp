#include "mmt/geometry.hpp"

namespace mmt::geom {

void WindowSpec::validate() const {
  if (w_h < 1 || w_w < 1)
    throw ValidationError("window extents must be >= 1, got " + std::to_string(w_h) + "x" +
                          std::to_string(w_w));
  if (shift_h < 0 || shift_h >= w_h || shift_w < 0 || shift_w >= w_w)
    throw ValidationError("window shift out of range: shift (" + std::to_string(shift_h) + "," +
                          std::to_string(shift_w) + ") for window " + std::to_string(w_h) + "x" +
                          std::to_string(w_w));
}

void check_window_divisible(int64_t h, int64_t w, const WindowSpec& spec) {
  spec.validate();
  if (h % spec.w_h != 0)
    throw ValidationError("token grid height " + std::to_string(h) +
                          " not divisible by window height " + std::to_string(spec.w_h));
  if (w % spec.w_w != 0)
    throw ValidationError("token grid width " + std::to_string(w) +
                          " not divisible by window width " + std::to_string(spec.w_w));
}

int64_t n_windows(int64_t h, int64_t w, const WindowSpec& spec) {
  check_window_divisible(h, w, spec);
  return (h / spec.w_h) * (w / spec.w_w);
}

std::vector<int64_t> patch_partition_map(int64_t M, int64_t C, int64_t H, int64_t W,
                                         int64_t patch) {
  if (H % patch != 0)
    throw ValidationError("image height " + std::to_string(H) + " not divisible by patch size " +
                          std::to_string(patch));
  if (W % patch != 0)
    throw ValidationError("image width " + std::to_string(W) + " not divisible by patch size " +
                          std::to_string(patch));
  int64_t ht = H / patch, wt = W / patch;
  std::vector<int64_t> map(static_cast<size_t>(M * C * H * W));
  int64_t o = 0;
  for (int64_t m = 0; m < M; ++m)
    for (int64_t py = 0; py < ht; ++py)
      for (int64_t px = 0; px < wt; ++px)
        for (int64_t dy = 0; dy < patch; ++dy)
          for (int64_t dx = 0; dx < patch; ++dx)
            for (int64_t c = 0; c < C; ++c)
              map[o++] = ((m * C + c) * H + py * patch + dy) * W + px * patch + dx;
  return map;
}

std::vector<int64_t> patch_unpartition_map(int64_t M, int64_t C, int64_t H, int64_t W,
                                           int64_t patch) {
  auto fwd = patch_partition_map(M, C, H, W, patch);
  std::vector<int64_t> inv(fwd.size());
  for (size_t i = 0; i < fwd.size(); ++i) inv[fwd[i]] = static_cast<int64_t>(i);
  return inv;
}

std::vector<int64_t> merge_group_map(int64_t M, int64_t h, int64_t w) {
  if (h % 2 != 0 || w % 2 != 0)
    throw ValidationError("patch merge needs even token grid, got " + std::to_string(h) + "x" +
                          std::to_string(w));
  std::vector<int64_t> map(static_cast<size_t>(M * h * w));
  int64_t o = 0;
  for (int64_t m = 0; m < M; ++m)
    for (int64_t ty = 0; ty < h / 2; ++ty)
      for (int64_t tx = 0; tx < w / 2; ++tx)
        for (int64_t dy = 0; dy < 2; ++dy)
          for (int64_t dx = 0; dx < 2; ++dx)
            map[o++] = m * h * w + (2 * ty + dy) * w + (2 * tx + dx);
  return map;
}

std::vector<int64_t> expand_split_map(int64_t M, int64_t h, int64_t w, int64_t factor) {
  std::vector<int64_t> map(static_cast<size_t>(M * h * w * factor * factor));
  for (int64_t m = 0; m < M; ++m)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        for (int64_t dy = 0; dy < factor; ++dy)
          for (int64_t dx = 0; dx < factor; ++dx) {
            int64_t out_row = m * (h * factor) * (w * factor) + (factor * y + dy) * (w * factor) +
                              (factor * x + dx);
            map[out_row] = (m * h * w + y * w + x) * factor * factor + dy * factor + dx;
          }
  return map;
}

std::vector<int64_t> window_partition_map(int64_t M, int64_t h, int64_t w,
                                          const WindowSpec& spec) {
  check_window_divisible(h, w, spec);
  int64_t nwy = h / spec.w_h, nwx = w / spec.w_w;
  std::vector<int64_t> map(static_cast<size_t>(M * h * w));
  int64_t o = 0;
  for (int64_t wy = 0; wy < nwy; ++wy)
    for (int64_t wx = 0; wx < nwx; ++wx)
      for (int64_t m = 0; m < M; ++m)
        for (int64_t iy = 0; iy < spec.w_h; ++iy)
          for (int64_t ix = 0; ix < spec.w_w; ++ix) {
            // shifted-grid position -> originating token
            int64_t oy = (wy * spec.w_h + iy + spec.shift_h) % h;
            int64_t ox = (wx * spec.w_w + ix + spec.shift_w) % w;
            map[o++] = m * h * w + oy * w + ox;
          }
  return map;
}

std::vector<int64_t> window_reverse_map(int64_t M, int64_t h, int64_t w, const WindowSpec& spec) {
  auto fwd = window_partition_map(M, h, w, spec);
  std::vector<int64_t> inv(fwd.size());
  for (size_t i = 0; i < fwd.size(); ++i) inv[fwd[i]] = static_cast<int64_t>(i);
  return inv;
}

int region_label(int64_t coord, int64_t extent, int64_t window, int64_t shift) {
  (void)window;
  if (shift == 0) return 0;
  return coord >= extent - shift ? 1 : 0;
}

Tensor shift_mask(int64_t h, int64_t w, const WindowSpec& spec, int64_t m_q, int64_t m_k) {
  int64_t nw = n_windows(h, w, spec);
  int64_t sq = spec.w_h * spec.w_w;
  int64_t gq = m_q * sq, gk = m_k * sq;
  Tensor mask({nw, gq, gk});
  if (!spec.shifted()) return mask;  // all-zero
  auto& md = mask.data();
  int64_t nwx = w / spec.w_w;
  // region id of the window cell at shifted coords; contrast-independent
  auto cell_region = [&](int64_t wy, int64_t wx, int64_t iy, int64_t ix) {
    int64_t sy = wy * spec.w_h + iy;
    int64_t sx = wx * spec.w_w + ix;
    return region_label(sy, h, spec.w_h, spec.shift_h) * 2 +
           region_label(sx, w, spec.w_w, spec.shift_w);
  };
  for (int64_t wi = 0; wi < nw; ++wi) {
    int64_t wy = wi / nwx, wx = wi % nwx;
    std::vector<int> regions(static_cast<size_t>(sq));
    for (int64_t iy = 0; iy < spec.w_h; ++iy)
      for (int64_t ix = 0; ix < spec.w_w; ++ix)
        regions[iy * spec.w_w + ix] = cell_region(wy, wx, iy, ix);
    for (int64_t i = 0; i < gq; ++i)
      for (int64_t j = 0; j < gk; ++j)
        if (regions[i % sq] != regions[j % sq]) md[(wi * gq + i) * gk + j] = kMaskValue;
  }
  return mask;
}

Tensor patch_partition(const Tensor& img, int64_t patch) {
  if (img.ndim() != 4)
    throw ValidationError("patch_partition expects [M,C,H,W], got " + shape_str(img.shape()));
  int64_t M = img.dim(0), C = img.dim(1), H = img.dim(2), W = img.dim(3);
  auto map = patch_partition_map(M, C, H, W, patch);
  return ops::index_elements(img, std::move(map),
                             {M, (H / patch) * (W / patch), patch * patch * C});
}

Tensor patch_unpartition(const Tensor& tokens, int64_t C, int64_t H, int64_t W, int64_t patch) {
  int64_t M = tokens.dim(0);
  auto map = patch_unpartition_map(M, C, H, W, patch);
  return ops::index_elements(tokens, std::move(map), {M, C, H, W});
}

Tensor patch_merge(const Tensor& tokens, int64_t h, int64_t w, const Tensor& weight) {
  int64_t M = tokens.dim(0), d = tokens.dim(2);
  if (tokens.dim(1) != h * w)
    throw ValidationError("patch_merge token count mismatch with grid " + std::to_string(h) + "x" +
                          std::to_string(w));
  if (weight.dim(0) != 4 * d)
    throw ValidationError("patch_merge weight must be [4d, 2d] with d=" + std::to_string(d));
  auto map = merge_group_map(M, h, w);
  Tensor grouped = ops::index_rows(tokens, std::move(map), {M, (h / 2) * (w / 2), 4 * d});
  return ops::matmul(grouped, weight);
}

Tensor patch_expand(const Tensor& tokens, int64_t h, int64_t w, int64_t factor,
                    const Tensor& weight) {
  int64_t M = tokens.dim(0), d = tokens.dim(2);
  if (tokens.dim(1) != h * w)
    throw ValidationError("patch_expand token count mismatch with grid " + std::to_string(h) +
                          "x" + std::to_string(w));
  if (factor == 2) {
    if (d % 2 != 0)
      throw ValidationError("patch_expand factor 2 needs even feature dim, got " +
                            std::to_string(d));
    Tensor up = ops::matmul(tokens, weight);  // [M, hw, 2d]
    Tensor sub = ops::reshape(up, {M, h * w * 4, d / 2});
    return ops::index_rows(sub, expand_split_map(M, h, w, 2), {M, 4 * h * w, d / 2});
  }
  if (factor == 4) {
    if (d % 16 != 0)
      throw ValidationError("patch_expand factor 4 needs feature dim divisible by 16, got " +
                            std::to_string(d));
    Tensor sub = ops::reshape(tokens, {M, h * w * 16, d / 16});
    return ops::index_rows(sub, expand_split_map(M, h, w, 4), {M, 16 * h * w, d / 16});
  }
  throw ValidationError("patch_expand factor must be 2 or 4, got " + std::to_string(factor));
}

Tensor window_partition(const Tensor& tokens, int64_t h, int64_t w, const WindowSpec& spec) {
  int64_t M = tokens.dim(0), d = tokens.dim(2);
  if (tokens.dim(1) != h * w)
    throw ValidationError("window_partition token count mismatch with grid");
  int64_t nw = n_windows(h, w, spec);
  return ops::index_rows(tokens, window_partition_map(M, h, w, spec),
                         {nw, M * spec.w_h * spec.w_w, d});
}

Tensor window_reverse(const Tensor& wtokens, int64_t M, int64_t h, int64_t w,
                      const WindowSpec& spec) {
  int64_t d = wtokens.dim(-1);
  return ops::index_rows(wtokens, window_reverse_map(M, h, w, spec), {M, h * w, d});
}

}  // namespace mmt::geom
