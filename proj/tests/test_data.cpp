#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "mmt/data.hpp"

using namespace mmt;
namespace fs = std::filesystem;

TEST_SUITE("data") {

TEST_CASE("generation is bit-deterministic under a seed") {
  PhantomConfig cfg;
  cfg.n_subjects = 2;
  cfg.seed = 7;
  cfg.lesion_contrasts = {1, 2};
  auto a = generate_phantoms(cfg);
  auto b = generate_phantoms(cfg);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].data == b[i].data);
  cfg.seed = 8;
  auto c = generate_phantoms(cfg);
  CHECK(a[0].data != c[0].data);
}

TEST_CASE("tissue boundaries are shared across contrasts of one subject") {
  PhantomConfig cfg;
  cfg.n_subjects = 1;
  cfg.seed = 3;
  cfg.noise_sigma = 0.0;  // isolate geometry from noise
  std::vector<PhantomMeta> metas;
  auto vols = generate_phantoms(cfg, &metas);
  const auto& vol = vols[0];
  const auto& cls = metas[0].tissue_class;
  // Within one contrast, same tissue class (minus the tiny smooth field)
  // means near-identical intensity; class changes mean a jump. Check pairs.
  for (int64_t c = 0; c < vol.P; ++c) {
    const double* img = vol.slice(c, 0);
    for (int64_t y = 0; y < vol.H; ++y)
      for (int64_t x = 0; x + 1 < vol.W; ++x) {
        bool same = cls[y * vol.W + x] == cls[y * vol.W + x + 1];
        double diff = std::abs(img[y * vol.W + x] - img[y * vol.W + x + 1]);
        if (same)
          CHECK(diff < 0.02);  // only the smooth field varies
        else
          CHECK(diff > 0.04);  // transfer steps are at least 0.08
      }
  }
}

TEST_CASE("lesion is invisible in non-configured contrasts") {
  PhantomConfig cfg;
  cfg.n_subjects = 6;
  cfg.seed = 11;
  cfg.lesion_contrasts = {1, 2};  // visible in contrasts 2 and 3 (1-based: {2,3})
  std::vector<PhantomMeta> metas;
  auto vols = generate_phantoms(cfg, &metas);
  int checked = 0;
  for (size_t s = 0; s < vols.size(); ++s) {
    if (!metas[s].has_lesion) continue;
    const auto& m = metas[s];
    const auto& vol = vols[s];
    // Compare per tissue class: lesion-region mean vs the mean of pixels of
    // the same class outside the lesion box, in contrast 0 (lesion-free).
    const double* img = vol.slice(0, 0);
    for (int cls = 0;; ++cls) {
      double in_sum = 0, out_sum = 0;
      int64_t in_n = 0, out_n = 0;
      for (int64_t y = 0; y < vol.H; ++y)
        for (int64_t x = 0; x < vol.W; ++x) {
          if (m.tissue_class[y * vol.W + x] != cls) continue;
          bool inside = y >= m.lesion_y0 && y < m.lesion_y1 && x >= m.lesion_x0 &&
                        x < m.lesion_x1;
          if (inside) {
            in_sum += img[y * vol.W + x];
            ++in_n;
          } else {
            out_sum += img[y * vol.W + x];
            ++out_n;
          }
        }
      if (in_n < 10 || out_n < 10) {
        if (cls > 8) break;
        continue;
      }
      double gap = std::abs(in_sum / in_n - out_sum / out_n);
      CHECK(gap < 2 * cfg.noise_sigma);
      ++checked;
      if (cls > 8) break;
    }
    // And the lesion is plainly visible in a configured contrast.
    const double* img2 = vol.slice(1, 0);
    double vis_in = 0, vis_out = 0;
    int64_t vin = 0, vout = 0;
    for (int64_t y = 0; y < vol.H; ++y)
      for (int64_t x = 0; x < vol.W; ++x) {
        bool inside =
            y >= m.lesion_y0 && y < m.lesion_y1 && x >= m.lesion_x0 && x < m.lesion_x1;
        (inside ? vis_in : vis_out) += img2[y * vol.W + x];
        (inside ? vin : vout)++;
      }
    CHECK(vis_in / vin - vis_out / vout > 0.2);
  }
  CHECK(checked > 0);
}

TEST_CASE("mean normalization") {
  MultiContrastVolume vol;
  vol.P = 2;
  vol.D = 1;
  vol.H = 4;
  vol.W = 4;
  vol.data.assign(32, 4.0);
  mean_normalize(vol);
  for (double v : vol.data) CHECK(v == 1.0);

  PhantomConfig cfg;
  cfg.n_subjects = 1;
  cfg.seed = 1;
  auto vols = generate_phantoms(cfg);
  mean_normalize(vols[0]);
  for (int64_t c = 0; c < vols[0].P; ++c) {
    double mean = 0;
    const double* img = vols[0].slice(c, 0);
    for (int64_t i = 0; i < 64 * 64; ++i) mean += img[i];
    mean /= 64 * 64;
    CHECK(mean == doctest::Approx(1.0).epsilon(1e-12));
  }
  // Idempotent.
  std::vector<double> once = vols[0].data;
  mean_normalize(vols[0]);
  for (size_t i = 0; i < once.size(); ++i)
    CHECK(vols[0].data[i] == doctest::Approx(once[i]).epsilon(1e-12));

  MultiContrastVolume zero;
  zero.P = 1;
  zero.D = 1;
  zero.H = 2;
  zero.W = 2;
  zero.data.assign(4, 0.0);
  CHECK_THROWS_AS(mean_normalize(zero), ValidationError);
}

TEST_CASE("random scenario sampling is uniform over all valid splits") {
  Rng rng(13);
  const int64_t P = 3;
  std::map<std::string, int> counts;
  const int N = 100000;
  for (int i = 0; i < N; ++i) {
    ContrastScenario sc = sample_scenario(P, rng, ScenarioMode::Random);
    sc.validate();
    counts[sc.bitstring()]++;
  }
  CHECK(counts.size() == 6);
  for (const auto& [bits, n] : counts) {
    double freq = static_cast<double>(n) / N;
    INFO("scenario ", bits, " freq ", freq);
    CHECK(std::abs(freq - 1.0 / 6.0) < 0.01);
  }
}

TEST_CASE("single mode only ever drops one contrast") {
  Rng rng(14);
  std::set<int64_t> missing_seen;
  for (int i = 0; i < 2000; ++i) {
    ContrastScenario sc = sample_scenario(4, rng, ScenarioMode::Single);
    REQUIRE(sc.n_missing() == 1);
    missing_seen.insert(sc.missing[0]);
  }
  CHECK(missing_seen.size() == 4);
}

TEST_CASE("scenario draw sequence is seed-deterministic") {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i)
    CHECK(sample_scenario(3, a, ScenarioMode::Random).bitstring() ==
          sample_scenario(3, b, ScenarioMode::Random).bitstring());
}

TEST_CASE("volume file round-trip is bit-exact") {
  Rng rng(15);
  MultiContrastVolume vol;
  vol.P = 2;
  vol.D = 3;
  vol.H = 5;
  vol.W = 4;
  vol.subject_id = "roundtrip";
  for (int64_t i = 0; i < 2 * 3 * 5 * 4; ++i) vol.data.push_back(rng.normal(0, 1));
  std::string path = (fs::temp_directory_path() / "roundtrip.mcv").string();
  write_volume(path, vol);
  MultiContrastVolume back = read_volume(path);
  CHECK(back.P == vol.P);
  CHECK(back.D == vol.D);
  CHECK(back.H == vol.H);
  CHECK(back.W == vol.W);
  CHECK(back.data == vol.data);
  CHECK(back.subject_id == "roundtrip");
  fs::remove(path);
}

TEST_CASE("volume file corruption raises distinct errors") {
  MultiContrastVolume vol;
  vol.P = 1;
  vol.D = 1;
  vol.H = 2;
  vol.W = 2;
  vol.data = {1, 2, 3, 4};
  std::string path = (fs::temp_directory_path() / "corrupt.mcv").string();

  auto write_raw = [&](const std::vector<char>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  };
  auto read_raw = [&]() {
    std::ifstream f(path, std::ios::binary);
    return std::vector<char>(std::istreambuf_iterator<char>(f), {});
  };

  write_volume(path, vol);
  std::vector<char> good = read_raw();

  std::vector<char> bad_magic = good;
  bad_magic[0] = 'X';
  write_raw(bad_magic);
  CHECK_THROWS_WITH_AS(read_volume(path), doctest::Contains("magic"), ValidationError);

  std::vector<char> truncated(good.begin(), good.end() - 9);
  write_raw(truncated);
  CHECK_THROWS_WITH_AS(read_volume(path), doctest::Contains("truncated"), ValidationError);

  std::vector<char> bad_crc = good;
  bad_crc[good.size() - 1] ^= 0x5A;
  write_raw(bad_crc);
  CHECK_THROWS_WITH_AS(read_volume(path), doctest::Contains("checksum"), ValidationError);

  std::vector<char> bad_payload = good;
  bad_payload[25] ^= 0x5A;
  write_raw(bad_payload);
  CHECK_THROWS_WITH_AS(read_volume(path), doctest::Contains("checksum"), ValidationError);
  fs::remove(path);
}

TEST_CASE("dataset directory round-trip via manifest") {
  PhantomConfig cfg;
  cfg.n_subjects = 3;
  cfg.seed = 21;
  auto vols = generate_phantoms(cfg);
  std::string dir = (fs::temp_directory_path() / "mmt_test_dataset").string();
  fs::remove_all(dir);
  write_dataset(dir, vols);
  auto back = read_dataset(dir);
  REQUIRE(back.size() == vols.size());
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].data == vols[i].data);
    CHECK(back[i].subject_id == vols[i].subject_id);
  }
  fs::remove_all(dir);
}

TEST_CASE("phantom config validation") {
  PhantomConfig cfg;
  cfg.n_contrasts = 1;
  CHECK_THROWS_AS(generate_phantoms(cfg), ValidationError);
  cfg = PhantomConfig{};
  cfg.lesion_contrasts = {5};
  CHECK_THROWS_AS(generate_phantoms(cfg), ValidationError);
  cfg = PhantomConfig{};
  cfg.lesion_prob = 1.5;
  CHECK_THROWS_AS(generate_phantoms(cfg), ValidationError);
}

}  // TEST_SUITE
