// Procedural multi-contrast phantom generation, per-volume mean
// normalization, the MCV1 volume file format, and scenario sampling.
#pragma once

#include <string>
#include <vector>

#include "mmt/scenario.hpp"
#include "mmt/tensor.hpp"

namespace mmt {

/// P co-registered image stacks of shape [D,H,W], stored contrast-major.
struct MultiContrastVolume {
  int64_t P = 0, D = 0, H = 0, W = 0;
  std::vector<double> data;  // P*D*H*W values
  std::string subject_id;

  void validate() const;
  int64_t slice_numel() const { return H * W; }
  double* slice(int64_t contrast, int64_t d);
  const double* slice(int64_t contrast, int64_t d) const;
  /// Copy of one slice as a [1,H,W] tensor (model input layout).
  Tensor slice_tensor(int64_t contrast, int64_t d) const;
};

struct PhantomConfig {
  int64_t n_contrasts = 3;
  int64_t height = 64;
  int64_t width = 64;
  int64_t n_subjects = 4;
  uint64_t seed = 0;
  /// Contrasts (0-based) in which the lesion blob is visible; empty disables it.
  std::vector<int64_t> lesion_contrasts;
  double lesion_prob = 1.0;
  double noise_sigma = 0.01;
  /// Gaussian sigma (pixels) smoothing tissue and lesion edges before noise
  /// is added; 0 keeps hard binary edges.
  double edge_softness = 0.0;

  void validate() const;
};

/// Ground-truth construction record for one generated subject, used by
/// dataset oracles and the interpretability check.
struct PhantomMeta {
  std::vector<int> tissue_class;  // H*W labels, shared across contrasts
  bool has_lesion = false;
  // Lesion bounding box in pixels, inclusive-exclusive [y0,y1) x [x0,x1).
  int64_t lesion_y0 = 0, lesion_y1 = 0, lesion_x0 = 0, lesion_x1 = 0;
};

/// Deterministic under (config, seed): same call, bit-identical volumes.
/// Each subject: random ellipse tissue regions over background; each contrast
/// applies a monotone per-class intensity map, adds a low-amplitude smooth
/// field, and i.i.d. Gaussian noise. The lesion is an additive bright blob
/// applied only in the configured contrasts, so invisible elsewhere.
std::vector<MultiContrastVolume> generate_phantoms(const PhantomConfig& cfg,
                                                   std::vector<PhantomMeta>* metas = nullptr);

/// Divides each contrast stack by its mean. Rejects near-zero means.
void mean_normalize(MultiContrastVolume& vol);

enum class ScenarioMode { Single, Random };

/// Single mode: one uniformly chosen missing contrast. Random mode: uniform
/// over all 2^P - 2 valid available/missing splits.
ContrastScenario sample_scenario(int64_t n_contrasts, Rng& rng, ScenarioMode mode);

/// MCV1 file: magic "MCV1", LE u32 P,D,H,W, P*D*H*W LE f64 contrast-major,
/// CRC-32 over everything after the magic. Distinct errors for bad magic,
/// truncation, and checksum mismatch.
void write_volume(const std::string& path, const MultiContrastVolume& vol);
MultiContrastVolume read_volume(const std::string& path);

/// Writes <dir>/<subject_id>.mcv per volume plus a plain-text manifest
/// (one filename per line) at <dir>/manifest.txt.
void write_dataset(const std::string& dir, const std::vector<MultiContrastVolume>& vols);
/// Loads every volume listed in <dir>/manifest.txt.
std::vector<MultiContrastVolume> read_dataset(const std::string& dir);

}  // namespace mmt
