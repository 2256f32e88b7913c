// Image quality metrics (PSNR, single-scale SSIM), decoder attention
// post-processing (per-contrast contribution percentages, key-side heatmaps),
// and report/heatmap export.
#pragma once

#include <string>
#include <vector>

#include "mmt/data.hpp"
#include "mmt/model.hpp"

namespace mmt {

/// 10*log10(data_range^2 / MSE); identical images give +infinity.
double psnr(const Tensor& x, const Tensor& y, double data_range);
/// max - min of the tensor values.
double data_range(const Tensor& ref);

/// Single-scale SSIM, Gaussian window 11x11 sigma 1.5, K1=0.01, K2=0.03,
/// data range taken from the reference (first) argument. Inputs are [H,W] or
/// [1,H,W] with H,W >= 11.
double ssim(const Tensor& ref, const Tensor& test);

/// Serialize a metric value; +infinity becomes "inf".
std::string metric_str(double v);

struct ContributionReport {
  std::vector<int64_t> inputs;      // contrast ids in key-column order
  std::vector<double> percentages;  // sums to 100
};

/// Share of cross-attention mass per input contrast, summed over all decoder
/// blocks, windows, and queries in the record.
ContributionReport contribution_percentages(const AttentionRecord& record,
                                            const ContrastScenario& scenario);

/// Same, but only counting attention mass from query tokens whose pixel
/// footprint center falls inside (or, with inside=false, outside) the given
/// pixel box [y0,y1) x [x0,x1) of the original image.
ContributionReport contribution_in_box(const AttentionRecord& record,
                                       const ContrastScenario& scenario, int64_t img_h,
                                       int64_t img_w, int64_t patch, int64_t y0, int64_t y1,
                                       int64_t x0, int64_t x1, bool inside);

/// Total attention mass received by each spatial key position of one input
/// contrast, un-partitioned back to the entry's token grid [grid_h, grid_w].
Tensor attention_heatmap(const AttentionRecordEntry& entry, int64_t m_index);

/// 8-bit PGM with values min-max scaled to 0..255.
void write_pgm(const std::string& path, const Tensor& img);
void write_matrix_csv(const std::string& path, const Tensor& img);

/// One row per scenario: metrics pooled over every missing target and every
/// slice of the dataset.
struct EvalRow {
  std::string scenario_bits;
  std::string targets;  // 1-based missing contrasts, ';'-joined
  double psnr_mean = 0, psnr_std = 0;
  double ssim_mean = 0, ssim_std = 0;
  int64_t n = 0;
};

std::vector<EvalRow> evaluate_scenarios(const MmtModel& model,
                                        const std::vector<MultiContrastVolume>& data,
                                        const std::vector<ContrastScenario>& scenarios);
void write_report_csv(const std::string& path, const std::vector<EvalRow>& rows);

}  // namespace mmt
