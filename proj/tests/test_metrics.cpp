#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "mmt/metrics.hpp"

using namespace mmt;
using testutil::random_tensor;

namespace {

// Independent SSIM implementation: direct (non-separable) 2D Gaussian
// convolution, written from the definition for cross-checking.
double ssim_oracle(const Tensor& ref, const Tensor& test) {
  const int64_t h = ref.dim(0), w = ref.dim(1);
  const int64_t win = 11;
  const double sigma = 1.5, k1 = 0.01, k2 = 0.03;
  std::vector<double> kern(static_cast<size_t>(win * win));
  double ksum = 0;
  for (int64_t y = 0; y < win; ++y)
    for (int64_t x = 0; x < win; ++x) {
      double dy = y - 5.0, dx = x - 5.0;
      kern[static_cast<size_t>(y * win + x)] = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
      ksum += kern[static_cast<size_t>(y * win + x)];
    }
  for (auto& v : kern) v /= ksum;

  double lo = ref.data()[0], hi = ref.data()[0];
  for (double v : ref.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double range = hi - lo;
  if (range == 0) range = 1;
  const double c1 = (k1 * range) * (k1 * range), c2 = (k2 * range) * (k2 * range);

  double acc = 0;
  int64_t count = 0;
  for (int64_t y = 0; y + win <= h; ++y)
    for (int64_t x = 0; x + win <= w; ++x) {
      double m1 = 0, m2 = 0, s11 = 0, s22 = 0, s12 = 0;
      for (int64_t ky = 0; ky < win; ++ky)
        for (int64_t kx = 0; kx < win; ++kx) {
          double kv = kern[static_cast<size_t>(ky * win + kx)];
          double a = ref.data()[(y + ky) * w + (x + kx)];
          double b = test.data()[(y + ky) * w + (x + kx)];
          m1 += kv * a;
          m2 += kv * b;
          s11 += kv * a * a;
          s22 += kv * b * b;
          s12 += kv * a * b;
        }
      double var1 = s11 - m1 * m1, var2 = s22 - m2 * m2, cov = s12 - m1 * m2;
      acc += ((2 * m1 * m2 + c1) * (2 * cov + c2)) /
             ((m1 * m1 + m2 * m2 + c1) * (var1 + var2 + c2));
      ++count;
    }
  return acc / static_cast<double>(count);
}

AttentionRecordEntry synthetic_entry(int64_t grid, int64_t win, int64_t m, Rng* rng) {
  AttentionRecordEntry e;
  e.scale = 0;
  e.grid_h = grid;
  e.grid_w = grid;
  e.spec = geom::WindowSpec::regular(win, win);
  int64_t n_w = (grid / win) * (grid / win), g = win * win;
  e.weights = Tensor({n_w, g, m * g});
  for (int64_t r = 0; r < n_w * g; ++r) {
    double sum = 0;
    for (int64_t c = 0; c < m * g; ++c) {
      double v = rng ? rng->uniform(0.01, 1.0) : 1.0;
      e.weights.data()[r * m * g + c] = v;
      sum += v;
    }
    for (int64_t c = 0; c < m * g; ++c) e.weights.data()[r * m * g + c] /= sum;
  }
  return e;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("psnr formula and edge cases") {
  Tensor a({2, 2}, {0, 1, 2, 3});
  CHECK(std::isinf(psnr(a, a, 3.0)));
  Tensor b({2, 2}, {3, 4, 5, 6});  // MSE = 9 = data_range^2
  CHECK(psnr(a, b, 3.0) == doctest::Approx(0.0).epsilon(1e-12));
  Rng rng(51);
  Tensor x = random_tensor({4, 4}, rng);
  Tensor y = random_tensor({4, 4}, rng);
  double mse = 0;
  for (int64_t i = 0; i < 16; ++i) {
    double d = x.data()[i] - y.data()[i];
    mse += d * d;
  }
  mse /= 16;
  CHECK(psnr(x, y, 2.0) == doctest::Approx(10 * std::log10(4.0 / mse)).epsilon(1e-10));
  // Symmetric in its arguments.
  CHECK(psnr(x, y, 2.0) == psnr(y, x, 2.0));
  CHECK_THROWS_AS(psnr(x, y, 0.0), ValidationError);
  CHECK(metric_str(std::numeric_limits<double>::infinity()) == "inf");
}

TEST_CASE("ssim equals 1 on identical images and matches the direct oracle") {
  Rng rng(52);
  Tensor x = random_tensor({16, 16}, rng, 0, 1);
  CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  for (int trial = 0; trial < 5; ++trial) {
    Tensor a = random_tensor({16, 16}, rng, 0, 1);
    Tensor b = random_tensor({16, 16}, rng, 0, 1);
    CHECK(ssim(a, b) == doctest::Approx(ssim_oracle(a, b)).epsilon(1e-8));
  }
  CHECK_THROWS_AS(ssim(random_tensor({8, 8}, rng), random_tensor({8, 8}, rng)),
                  ValidationError);
}

TEST_CASE("ssim can go negative on anti-correlated structure") {
  Rng rng(53);
  Tensor a = random_tensor({16, 16}, rng, 0, 1);
  Tensor b(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) b.data()[i] = 0.5 - (a.data()[i] - 0.5);
  CHECK(ssim(a, b) < 0.0);
}

TEST_CASE("ssim uses the reference data range (asymmetric), psnr is symmetric") {
  Rng rng(54);
  Tensor a = random_tensor({16, 16}, rng, 0, 1);
  Tensor b = random_tensor({16, 16}, rng, 0, 10);
  CHECK(ssim(a, b) != doctest::Approx(ssim(b, a)).epsilon(1e-12));
}

TEST_CASE("contribution percentages: single input gets exactly 100") {
  ContrastScenario sc = ContrastScenario::from_available({1}, 2);
  AttentionRecord rec{synthetic_entry(4, 2, 1, nullptr)};
  ContributionReport rep = contribution_percentages(rec, sc);
  REQUIRE(rep.percentages.size() == 1);
  CHECK(rep.percentages[0] == 100.0);
}

TEST_CASE("contribution percentages: uniform weights split evenly") {
  ContrastScenario sc = ContrastScenario::from_available({0, 2}, 3);
  AttentionRecord rec{synthetic_entry(4, 2, 2, nullptr), synthetic_entry(4, 4, 2, nullptr)};
  ContributionReport rep = contribution_percentages(rec, sc);
  REQUIRE(rep.percentages.size() == 2);
  CHECK(rep.percentages[0] == doctest::Approx(50.0).epsilon(1e-9));
  CHECK(rep.percentages[1] == doctest::Approx(50.0).epsilon(1e-9));
  CHECK(rep.inputs == std::vector<int64_t>{0, 2});
}

TEST_CASE("contribution percentages match brute-force column-group sums") {
  Rng rng(55);
  ContrastScenario sc = ContrastScenario::from_available({0, 1, 3}, 4);
  AttentionRecord rec{synthetic_entry(4, 2, 3, &rng), synthetic_entry(8, 4, 3, &rng)};
  ContributionReport rep = contribution_percentages(rec, sc);
  double mass[3] = {0, 0, 0}, total = 0;
  for (const auto& e : rec) {
    int64_t g = e.spec.w_h * e.spec.w_w;
    int64_t nk = e.weights.dim(2);
    for (int64_t i = 0; i < e.weights.numel(); ++i) {
      mass[(i % nk) / g] += e.weights.data()[i];
      total += e.weights.data()[i];
    }
  }
  double psum = 0;
  for (int j = 0; j < 3; ++j) {
    CHECK(rep.percentages[static_cast<size_t>(j)] ==
          doctest::Approx(100.0 * mass[j] / total).epsilon(1e-10));
    psum += rep.percentages[static_cast<size_t>(j)];
  }
  CHECK(psum == doctest::Approx(100.0).epsilon(1e-9));
  CHECK_THROWS_AS(contribution_percentages({}, sc), ValidationError);
}

TEST_CASE("heatmaps conserve total attention mass and match the token grid") {
  Rng rng(56);
  AttentionRecordEntry e = synthetic_entry(8, 4, 2, &rng);
  e.spec = geom::WindowSpec::shifted_default(4, 4);  // exercise the shift inversion
  double total = 0;
  for (int64_t m = 0; m < 2; ++m) {
    Tensor heat = attention_heatmap(e, m);
    CHECK(heat.shape() == Shape{8, 8});
    for (double v : heat.data()) {
      CHECK(v >= 0.0);
      CHECK(std::isfinite(v));
      total += v;
    }
  }
  // Each of the n_windows * g query rows sums to 1.
  CHECK(total == doctest::Approx(4.0 * 16.0).epsilon(1e-9));
  CHECK_THROWS_AS(attention_heatmap(e, 2), ValidationError);
}

TEST_CASE("region-restricted contributions partition the full mass") {
  Rng rng(57);
  ContrastScenario sc = ContrastScenario::from_available({0, 1}, 3);
  AttentionRecord rec{synthetic_entry(8, 4, 2, &rng)};
  // Full = mass-weighted mix of inside and outside box contributions.
  ContributionReport inside =
      contribution_in_box(rec, sc, 32, 32, 4, 0, 16, 0, 16, true);
  ContributionReport outside =
      contribution_in_box(rec, sc, 32, 32, 4, 0, 16, 0, 16, false);
  for (auto& rep : {inside, outside}) {
    double s = 0;
    for (double p : rep.percentages) s += p;
    CHECK(s == doctest::Approx(100.0).epsilon(1e-9));
  }
}

TEST_CASE("pgm and csv export") {
  Rng rng(58);
  Tensor img = random_tensor({5, 7}, rng);
  auto dir = std::filesystem::temp_directory_path();
  std::string pgm = (dir / "mmt_test.pgm").string();
  std::string csv = (dir / "mmt_test.csv").string();
  write_pgm(pgm, img);
  write_matrix_csv(csv, img);
  std::ifstream f(pgm, std::ios::binary);
  std::string magic;
  f >> magic;
  CHECK(magic == "P5");
  int w, h, maxv;
  f >> w >> h >> maxv;
  CHECK(w == 7);
  CHECK(h == 5);
  CHECK(maxv == 255);
  std::ifstream c(csv);
  std::string line;
  int rows = 0;
  while (std::getline(c, line)) ++rows;
  CHECK(rows == 5);
  std::filesystem::remove(pgm);
  std::filesystem::remove(csv);
}

}  // TEST_SUITE
