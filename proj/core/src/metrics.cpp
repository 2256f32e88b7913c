#include "mmt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace mmt {

namespace {

void check_same_shape(const Tensor& x, const Tensor& y, const char* what) {
  if (x.shape() != y.shape())
    throw ValidationError(std::string(what) + ": shape mismatch " + shape_str(x.shape()) +
                          " vs " + shape_str(y.shape()));
}

// Accepts [H,W] or [1,H,W]; returns (H, W, data pointer).
std::tuple<int64_t, int64_t, const double*> as_image(const Tensor& t, const char* what) {
  if (t.ndim() == 2) return {t.dim(0), t.dim(1), t.data().data()};
  if (t.ndim() == 3 && t.dim(0) == 1) return {t.dim(1), t.dim(2), t.data().data()};
  throw ValidationError(std::string(what) + ": expected [H,W] or [1,H,W], got " +
                        shape_str(t.shape()));
}

}  // namespace

double psnr(const Tensor& x, const Tensor& y, double range) {
  check_same_shape(x, y, "psnr");
  if (range <= 0.0) throw ValidationError("psnr: data_range must be positive");
  double mse = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    double d = x.data()[i] - y.data()[i];
    mse += d * d;
  }
  mse /= static_cast<double>(x.numel());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(range * range / mse);
}

double data_range(const Tensor& ref) {
  if (ref.numel() == 0) throw ValidationError("data_range: empty tensor");
  auto [lo, hi] = std::minmax_element(ref.data().begin(), ref.data().end());
  return *hi - *lo;
}

std::string metric_str(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << v;
  return os.str();
}

double ssim(const Tensor& ref, const Tensor& test) {
  check_same_shape(ref, test, "ssim");
  auto [h, w, a] = as_image(ref, "ssim");
  auto [h2, w2, b] = as_image(test, "ssim");
  (void)h2;
  (void)w2;
  constexpr int64_t win = 11;
  constexpr double sigma = 1.5, k1 = 0.01, k2 = 0.03;
  if (h < win || w < win) throw ValidationError("ssim: image smaller than 11x11 window");

  double kernel[win];
  double ksum = 0.0;
  for (int64_t i = 0; i < win; ++i) {
    double d = static_cast<double>(i) - (win - 1) / 2.0;
    kernel[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    ksum += kernel[i];
  }
  for (int64_t i = 0; i < win; ++i) kernel[i] /= ksum;

  // Separable Gaussian filtering, valid region only.
  const int64_t vh = h - win + 1, vw = w - win + 1;
  auto filter = [&](auto value) {
    // Horizontal pass over full rows, then vertical pass onto the valid grid.
    std::vector<double> tmp(static_cast<size_t>(h * vw));
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < vw; ++x) {
        double s = 0.0;
        for (int64_t k = 0; k < win; ++k) s += kernel[k] * value(y, x + k);
        tmp[static_cast<size_t>(y * vw + x)] = s;
      }
    std::vector<double> out(static_cast<size_t>(vh * vw));
    for (int64_t y = 0; y < vh; ++y)
      for (int64_t x = 0; x < vw; ++x) {
        double s = 0.0;
        for (int64_t k = 0; k < win; ++k) s += kernel[k] * tmp[static_cast<size_t>((y + k) * vw + x)];
        out[static_cast<size_t>(y * vw + x)] = s;
      }
    return out;
  };

  auto va = [&](int64_t y, int64_t x) { return a[y * w + x]; };
  auto vb = [&](int64_t y, int64_t x) { return b[y * w + x]; };
  std::vector<double> mu1 = filter(va);
  std::vector<double> mu2 = filter(vb);
  std::vector<double> s11 = filter([&](int64_t y, int64_t x) { return va(y, x) * va(y, x); });
  std::vector<double> s22 = filter([&](int64_t y, int64_t x) { return vb(y, x) * vb(y, x); });
  std::vector<double> s12 = filter([&](int64_t y, int64_t x) { return va(y, x) * vb(y, x); });

  double range = data_range(ref);
  if (range == 0.0) range = 1.0;  // constant reference: fall back to unit range
  const double c1 = (k1 * range) * (k1 * range);
  const double c2 = (k2 * range) * (k2 * range);

  double acc = 0.0;
  for (size_t i = 0; i < mu1.size(); ++i) {
    double m1 = mu1[i], m2 = mu2[i];
    double var1 = s11[i] - m1 * m1;
    double var2 = s22[i] - m2 * m2;
    double cov = s12[i] - m1 * m2;
    acc += ((2 * m1 * m2 + c1) * (2 * cov + c2)) /
           ((m1 * m1 + m2 * m2 + c1) * (var1 + var2 + c2));
  }
  return acc / static_cast<double>(mu1.size());
}

namespace {

struct KeyColumn {
  int64_t m;       // contrast slot within the window's key set
  int64_t gy, gx;  // token-grid coordinates (un-shifted)
};

// Decode a key column index of one record entry into its contrast slot and
// original grid position.
KeyColumn decode_key(const AttentionRecordEntry& e, int64_t window, int64_t col, int64_t m_count) {
  const int64_t g = e.spec.w_h * e.spec.w_w;
  KeyColumn kc;
  kc.m = col / g;
  if (kc.m >= m_count) throw ValidationError("attention record: key column out of range");
  int64_t cell = col % g;
  int64_t n_wx = e.grid_w / e.spec.w_w;
  int64_t wy = window / n_wx, wx = window % n_wx;
  int64_t iy = cell / e.spec.w_w, ix = cell % e.spec.w_w;
  kc.gy = (wy * e.spec.w_h + iy + e.spec.shift_h) % e.grid_h;
  kc.gx = (wx * e.spec.w_w + ix + e.spec.shift_w) % e.grid_w;
  return kc;
}

}  // namespace

ContributionReport contribution_percentages(const AttentionRecord& record,
                                            const ContrastScenario& scenario) {
  if (record.empty()) throw ValidationError("contribution_percentages: empty attention record");
  scenario.validate();
  const int64_t m = scenario.n_available();
  std::vector<double> mass(static_cast<size_t>(m), 0.0);
  for (const auto& e : record) {
    const int64_t g = e.spec.w_h * e.spec.w_w;
    if (e.weights.ndim() != 3 || e.weights.dim(2) != m * g)
      throw ValidationError("contribution_percentages: record does not match scenario width");
    const auto& w = e.weights.data();
    const int64_t n_w = e.weights.dim(0), n_q = e.weights.dim(1), n_k = e.weights.dim(2);
    for (int64_t wi = 0; wi < n_w; ++wi)
      for (int64_t q = 0; q < n_q; ++q)
        for (int64_t c = 0; c < n_k; ++c)
          mass[static_cast<size_t>(c / g)] += w[(wi * n_q + q) * n_k + c];
  }
  double total = 0.0;
  for (double v : mass) total += v;
  if (total <= 0.0) throw ValidationError("contribution_percentages: zero attention mass");
  ContributionReport rep;
  rep.inputs = scenario.available;
  for (double v : mass) rep.percentages.push_back(100.0 * v / total);
  return rep;
}

ContributionReport contribution_in_box(const AttentionRecord& record,
                                       const ContrastScenario& scenario, int64_t img_h,
                                       int64_t img_w, int64_t patch, int64_t y0, int64_t y1,
                                       int64_t x0, int64_t x1, bool inside) {
  if (record.empty()) throw ValidationError("contribution_in_box: empty attention record");
  (void)patch;
  scenario.validate();
  const int64_t m = scenario.n_available();
  std::vector<double> mass(static_cast<size_t>(m), 0.0);
  for (const auto& e : record) {
    const int64_t g = e.spec.w_h * e.spec.w_w;
    const auto& w = e.weights.data();
    const int64_t n_w = e.weights.dim(0), n_q = e.weights.dim(1), n_k = e.weights.dim(2);
    const double fy = static_cast<double>(img_h) / e.grid_h;
    const double fx = static_cast<double>(img_w) / e.grid_w;
    for (int64_t wi = 0; wi < n_w; ++wi)
      for (int64_t q = 0; q < n_q; ++q) {
        KeyColumn qc = decode_key(e, wi, q, 1);  // queries: single contrast slot
        double cy = (qc.gy + 0.5) * fy;
        double cx = (qc.gx + 0.5) * fx;
        bool in = cy >= y0 && cy < y1 && cx >= x0 && cx < x1;
        if (in != inside) continue;
        for (int64_t c = 0; c < n_k; ++c)
          mass[static_cast<size_t>(c / g)] += w[(wi * n_q + q) * n_k + c];
      }
  }
  double total = 0.0;
  for (double v : mass) total += v;
  if (total <= 0.0)
    throw ValidationError("contribution_in_box: no query tokens in the requested region");
  ContributionReport rep;
  rep.inputs = scenario.available;
  for (double v : mass) rep.percentages.push_back(100.0 * v / total);
  return rep;
}

Tensor attention_heatmap(const AttentionRecordEntry& entry, int64_t m_index) {
  const int64_t g = entry.spec.w_h * entry.spec.w_w;
  if (entry.weights.ndim() != 3 || entry.weights.dim(1) != g)
    throw ValidationError("attention_heatmap: malformed record entry");
  const int64_t m_count = entry.weights.dim(2) / g;
  if (m_index < 0 || m_index >= m_count)
    throw ValidationError("attention_heatmap: input contrast index out of range");
  Tensor heat({entry.grid_h, entry.grid_w});
  const auto& w = entry.weights.data();
  const int64_t n_w = entry.weights.dim(0), n_q = entry.weights.dim(1), n_k = entry.weights.dim(2);
  for (int64_t wi = 0; wi < n_w; ++wi)
    for (int64_t q = 0; q < n_q; ++q)
      for (int64_t cell = 0; cell < g; ++cell) {
        KeyColumn kc = decode_key(entry, wi, m_index * g + cell, m_count);
        heat.data()[kc.gy * entry.grid_w + kc.gx] += w[(wi * n_q + q) * n_k + m_index * g + cell];
      }
  return heat;
}

void write_pgm(const std::string& path, const Tensor& img) {
  auto [h, w, v] = as_image(img, "write_pgm");
  double lo = *std::min_element(img.data().begin(), img.data().end());
  double hi = *std::max_element(img.data().begin(), img.data().end());
  double span = hi - lo;
  if (span <= 0.0) span = 1.0;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open for writing: " + path);
  f << "P5\n" << w << " " << h << "\n255\n";
  for (int64_t i = 0; i < h * w; ++i) {
    int byte = static_cast<int>(std::lround((v[i] - lo) / span * 255.0));
    f.put(static_cast<char>(std::clamp(byte, 0, 255)));
  }
}

void write_matrix_csv(const std::string& path, const Tensor& img) {
  auto [h, w, v] = as_image(img, "write_matrix_csv");
  std::ofstream f(path);
  if (!f) throw ValidationError("cannot open for writing: " + path);
  f.precision(12);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) f << v[y * w + x] << (x + 1 == w ? '\n' : ',');
  }
}

std::vector<EvalRow> evaluate_scenarios(const MmtModel& model,
                                        const std::vector<MultiContrastVolume>& data,
                                        const std::vector<ContrastScenario>& scenarios) {
  if (data.empty()) throw ValidationError("evaluate_scenarios: empty dataset");
  std::vector<EvalRow> rows;
  for (const auto& sc : scenarios) {
    sc.validate();
    std::vector<double> psnrs, ssims;
    for (const auto& vol : data) {
      if (vol.P != sc.n_contrasts)
        throw ValidationError("evaluate_scenarios: volume contrast count differs from scenario");
      for (int64_t d = 0; d < vol.D; ++d) {
        std::vector<Tensor> inputs;
        for (int64_t c : sc.available) inputs.push_back(vol.slice_tensor(c, d));
        ForwardResult out = model.forward(inputs, sc.available, sc.missing);
        for (size_t t = 0; t < sc.missing.size(); ++t) {
          Tensor truth = vol.slice_tensor(sc.missing[t], d);
          psnrs.push_back(psnr(out.images[t], truth, data_range(truth)));
          ssims.push_back(ssim(truth, out.images[t]));
        }
      }
    }
    EvalRow row;
    row.scenario_bits = sc.bitstring();
    for (size_t t = 0; t < sc.missing.size(); ++t)
      row.targets += (t ? ";" : "") + std::to_string(sc.missing[t] + 1);
    row.n = static_cast<int64_t>(psnrs.size());
    auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
      bool has_inf = false;
      for (double x : v)
        if (std::isinf(x)) has_inf = true;
      if (has_inf) {
        mean = std::numeric_limits<double>::infinity();
        sd = 0.0;
        return;
      }
      double s = 0.0;
      for (double x : v) s += x;
      mean = s / static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      sd = std::sqrt(ss / static_cast<double>(v.size()));
    };
    stats(psnrs, row.psnr_mean, row.psnr_std);
    stats(ssims, row.ssim_mean, row.ssim_std);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_report_csv(const std::string& path, const std::vector<EvalRow>& rows) {
  std::ofstream f(path);
  if (!f) throw ValidationError("cannot open for writing: " + path);
  f << "scenario,targets,psnr_mean,psnr_std,ssim_mean,ssim_std,n\n";
  for (const auto& r : rows) {
    f << r.scenario_bits << "," << r.targets << "," << metric_str(r.psnr_mean) << ","
      << metric_str(r.psnr_std) << "," << metric_str(r.ssim_mean) << ","
      << metric_str(r.ssim_std) << "," << r.n << "\n";
  }
}

}  // namespace mmt
