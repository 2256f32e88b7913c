#include "mmt/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "binio.hpp"

namespace mmt {

namespace {
constexpr char kMagic[4] = {'M', 'C', 'V', '1'};
}

void MultiContrastVolume::validate() const {
  if (P < 1 || D < 1 || H < 1 || W < 1)
    throw ValidationError("volume dimensions must be positive");
  if (static_cast<int64_t>(data.size()) != P * D * H * W)
    throw ValidationError("volume data size does not match P*D*H*W");
}

double* MultiContrastVolume::slice(int64_t contrast, int64_t d) {
  return data.data() + (contrast * D + d) * H * W;
}

const double* MultiContrastVolume::slice(int64_t contrast, int64_t d) const {
  return data.data() + (contrast * D + d) * H * W;
}

Tensor MultiContrastVolume::slice_tensor(int64_t contrast, int64_t d) const {
  if (contrast < 0 || contrast >= P || d < 0 || d >= D)
    throw ValidationError("slice index out of range");
  const double* src = slice(contrast, d);
  return Tensor({1, H, W}, std::vector<double>(src, src + H * W));
}

void PhantomConfig::validate() const {
  if (n_contrasts < 2) throw ValidationError("phantom: need at least 2 contrasts");
  if (height < 8 || width < 8) throw ValidationError("phantom: image too small");
  if (n_subjects < 1) throw ValidationError("phantom: need at least 1 subject");
  if (lesion_prob < 0.0 || lesion_prob > 1.0)
    throw ValidationError("phantom: lesion_prob must be in [0,1]");
  for (int64_t c : lesion_contrasts)
    if (c < 0 || c >= n_contrasts)
      throw ValidationError("phantom: lesion contrast index out of range");
  if (noise_sigma < 0.0) throw ValidationError("phantom: noise_sigma must be >= 0");
  if (edge_softness < 0.0) throw ValidationError("phantom: edge_softness must be >= 0");
}

namespace {

struct Ellipse {
  double cy, cx, ry, rx, angle;
  bool contains(double y, double x) const {
    double dy = y - cy, dx = x - cx;
    double ca = std::cos(angle), sa = std::sin(angle);
    double u = ca * dx + sa * dy;
    double v = -sa * dx + ca * dy;
    return (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0;
  }
};

// Separable Gaussian blur with reflect padding, used to band-limit phantom
// edges when edge_softness > 0.
void smooth_image(double* img, int64_t H, int64_t W, double sigma) {
  const int64_t radius = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(3.0 * sigma)));
  std::vector<double> kern(static_cast<size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int64_t i = -radius; i <= radius; ++i) {
    kern[static_cast<size_t>(i + radius)] =
        std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    sum += kern[static_cast<size_t>(i + radius)];
  }
  for (auto& k : kern) k /= sum;
  auto reflect = [](int64_t i, int64_t n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
    return i;
  };
  std::vector<double> tmp(static_cast<size_t>(H * W));
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      double v = 0.0;
      for (int64_t i = -radius; i <= radius; ++i)
        v += kern[static_cast<size_t>(i + radius)] * img[y * W + reflect(x + i, W)];
      tmp[static_cast<size_t>(y * W + x)] = v;
    }
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      double v = 0.0;
      for (int64_t i = -radius; i <= radius; ++i)
        v += kern[static_cast<size_t>(i + radius)] * tmp[static_cast<size_t>(reflect(y + i, H) * W + x)];
      img[y * W + x] = v;
    }
}

}  // namespace

std::vector<MultiContrastVolume> generate_phantoms(const PhantomConfig& cfg,
                                                   std::vector<PhantomMeta>* metas) {
  cfg.validate();
  std::vector<MultiContrastVolume> vols;
  if (metas) metas->clear();
  const int64_t H = cfg.height, W = cfg.width, P = cfg.n_contrasts;

  for (int64_t s = 0; s < cfg.n_subjects; ++s) {
    // Independent stream per subject so generation can parallelize later
    // without changing the output.
    Rng rng(cfg.seed * 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(s) + 1);
    PhantomMeta meta;
    meta.tissue_class.assign(static_cast<size_t>(H * W), 0);

    int64_t n_regions = 3 + rng.randint(3);
    std::vector<Ellipse> regions;
    for (int64_t k = 0; k < n_regions; ++k) {
      Ellipse e;
      e.cy = rng.uniform(0.25, 0.75) * H;
      e.cx = rng.uniform(0.25, 0.75) * W;
      e.ry = rng.uniform(0.10, 0.30) * H;
      e.rx = rng.uniform(0.10, 0.30) * W;
      e.angle = rng.uniform(0.0, 3.141592653589793);
      regions.push_back(e);
    }
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x)
        for (int64_t k = 0; k < n_regions; ++k)
          if (regions[k].contains(y + 0.5, x + 0.5))
            meta.tissue_class[y * W + x] = static_cast<int>(k + 1);

    // Lesion: small additive blob, recorded but not part of the class map so
    // contrasts without it stay statistically identical inside its footprint.
    Ellipse lesion{};
    double lesion_draw = rng.uniform(0.0, 1.0);
    if (!cfg.lesion_contrasts.empty() && lesion_draw < cfg.lesion_prob) {
      meta.has_lesion = true;
      lesion.cy = rng.uniform(0.35, 0.65) * H;
      lesion.cx = rng.uniform(0.35, 0.65) * W;
      lesion.ry = rng.uniform(0.06, 0.10) * H;
      lesion.rx = rng.uniform(0.06, 0.10) * W;
      lesion.angle = 0.0;
      meta.lesion_y0 = std::max<int64_t>(0, static_cast<int64_t>(lesion.cy - lesion.ry));
      meta.lesion_y1 = std::min<int64_t>(H, static_cast<int64_t>(lesion.cy + lesion.ry) + 1);
      meta.lesion_x0 = std::max<int64_t>(0, static_cast<int64_t>(lesion.cx - lesion.rx));
      meta.lesion_x1 = std::min<int64_t>(W, static_cast<int64_t>(lesion.cx + lesion.rx) + 1);
    }

    // Monotone per-class intensity map per contrast: cumulative positive steps.
    std::vector<std::vector<double>> transfer(static_cast<size_t>(P));
    for (int64_t c = 0; c < P; ++c) {
      double v = rng.uniform(0.10, 0.25);
      transfer[c].push_back(v);
      for (int64_t k = 1; k <= n_regions; ++k) {
        v += rng.uniform(0.08, 0.25);
        transfer[c].push_back(v);
      }
    }

    MultiContrastVolume vol;
    vol.P = P;
    vol.D = 1;
    vol.H = H;
    vol.W = W;
    vol.subject_id = "subject_" + std::to_string(s);
    vol.data.resize(static_cast<size_t>(P * H * W));

    for (int64_t c = 0; c < P; ++c) {
      // Low-amplitude linear ramp per contrast; kept small so regional means
      // stay within the noise scale of their class mean.
      double gy = rng.uniform(-0.005, 0.005);
      double gx = rng.uniform(-0.005, 0.005);
      bool lesion_visible =
          meta.has_lesion && std::find(cfg.lesion_contrasts.begin(), cfg.lesion_contrasts.end(),
                                       c) != cfg.lesion_contrasts.end();
      double* img = vol.slice(c, 0);
      for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x) {
          double v = transfer[c][static_cast<size_t>(meta.tissue_class[y * W + x])];
          v += gy * (static_cast<double>(y) / H - 0.5) + gx * (static_cast<double>(x) / W - 0.5);
          if (lesion_visible && lesion.contains(y + 0.5, x + 0.5)) v += 0.5;
          img[y * W + x] = v;
        }
      }
      if (cfg.edge_softness > 0.0) smooth_image(img, H, W, cfg.edge_softness);
      // Noise last so its statistics never depend on edge softness.
      for (int64_t i = 0; i < H * W; ++i) img[i] += rng.normal(0.0, cfg.noise_sigma);
    }
    vols.push_back(std::move(vol));
    if (metas) metas->push_back(std::move(meta));
  }
  return vols;
}

void mean_normalize(MultiContrastVolume& vol) {
  vol.validate();
  const int64_t n = vol.D * vol.H * vol.W;
  for (int64_t c = 0; c < vol.P; ++c) {
    double* stack = vol.slice(c, 0);
    double mean = 0.0;
    for (int64_t i = 0; i < n; ++i) mean += stack[i];
    mean /= static_cast<double>(n);
    if (std::abs(mean) < 1e-12)
      throw ValidationError("mean_normalize: contrast " + std::to_string(c) +
                            " has (near-)zero mean");
    for (int64_t i = 0; i < n; ++i) stack[i] /= mean;
  }
}

ContrastScenario sample_scenario(int64_t n_contrasts, Rng& rng, ScenarioMode mode) {
  if (n_contrasts < 2) throw ValidationError("sample_scenario: need at least 2 contrasts");
  if (mode == ScenarioMode::Single) {
    int64_t miss = rng.randint(n_contrasts);
    std::vector<int64_t> avail;
    for (int64_t c = 0; c < n_contrasts; ++c)
      if (c != miss) avail.push_back(c);
    return ContrastScenario::from_available(avail, n_contrasts);
  }
  // Uniform over availability masks 1 .. 2^P - 2 (both sets non-empty).
  int64_t n_masks = (int64_t{1} << n_contrasts) - 2;
  int64_t mask = 1 + rng.randint(n_masks);
  std::vector<int64_t> avail;
  for (int64_t c = 0; c < n_contrasts; ++c)
    if (mask & (int64_t{1} << c)) avail.push_back(c);
  return ContrastScenario::from_available(avail, n_contrasts);
}

void write_volume(const std::string& path, const MultiContrastVolume& vol) {
  vol.validate();
  std::vector<uint8_t> payload;
  binio::put_u32(payload, static_cast<uint32_t>(vol.P));
  binio::put_u32(payload, static_cast<uint32_t>(vol.D));
  binio::put_u32(payload, static_cast<uint32_t>(vol.H));
  binio::put_u32(payload, static_cast<uint32_t>(vol.W));
  for (double v : vol.data) binio::put_f64(payload, v);

  std::vector<uint8_t> bytes;
  bytes.insert(bytes.end(), kMagic, kMagic + 4);
  bytes.insert(bytes.end(), payload.begin(), payload.end());
  binio::put_u32(bytes, binio::crc32_of(payload.data(), payload.size()));
  binio::write_file(path, bytes);
}

MultiContrastVolume read_volume(const std::string& path) {
  std::vector<uint8_t> bytes = binio::read_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw ValidationError("not an MCV1 volume (bad magic): " + path);
  if (bytes.size() < 24) throw ValidationError("truncated volume file: " + path);

  const uint8_t* payload = bytes.data() + 4;
  size_t payload_size = bytes.size() - 8;
  binio::Reader r(payload, payload_size);
  MultiContrastVolume vol;
  vol.P = r.u32();
  vol.D = r.u32();
  vol.H = r.u32();
  vol.W = r.u32();
  if (vol.P < 1 || vol.D < 1 || vol.H < 1 || vol.W < 1)
    throw ValidationError("volume header has non-positive dimensions: " + path);
  int64_t count = vol.P * vol.D * vol.H * vol.W;
  if (static_cast<int64_t>(payload_size) != 16 + count * 8)
    throw ValidationError("truncated volume file: " + path);

  binio::Reader tail(bytes.data() + bytes.size() - 4, 4);
  if (binio::crc32_of(payload, payload_size) != tail.u32())
    throw ValidationError("volume checksum mismatch (corrupt file): " + path);

  vol.data.resize(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) vol.data[static_cast<size_t>(i)] = r.f64();
  std::filesystem::path p(path);
  vol.subject_id = p.stem().string();
  return vol;
}

void write_dataset(const std::string& dir, const std::vector<MultiContrastVolume>& vols) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(std::filesystem::path(dir) / "manifest.txt");
  if (!manifest) throw ValidationError("cannot write manifest in " + dir);
  for (const auto& vol : vols) {
    std::string name = vol.subject_id + ".mcv";
    write_volume((std::filesystem::path(dir) / name).string(), vol);
    manifest << name << "\n";
  }
}

std::vector<MultiContrastVolume> read_dataset(const std::string& dir) {
  std::ifstream manifest(std::filesystem::path(dir) / "manifest.txt");
  if (!manifest) throw ValidationError("missing manifest.txt in " + dir);
  std::vector<MultiContrastVolume> vols;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    vols.push_back(read_volume((std::filesystem::path(dir) / line).string()));
  }
  if (vols.empty()) throw ValidationError("empty dataset manifest in " + dir);
  return vols;
}

}  // namespace mmt
