// Microbenchmarks comparing windowed attention against global attention on
// the same token grids, plus a full model forward pass. Windowed attention
// should scale linearly in the number of tokens while global attention
// scales quadratically.
#include <benchmark/benchmark.h>

#include "mmt/attention.hpp"
#include "mmt/model.hpp"

using namespace mmt;

namespace {

Tensor rand_t(const Shape& s, Rng& rng) {
  Tensor t(s);
  for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

MhaParams make_params(int64_t d, int64_t heads, Rng& rng) {
  MhaParams p;
  p.heads = heads;
  p.wq = rand_t({d, d}, rng);
  p.bq = rand_t({d}, rng);
  p.wk = rand_t({d, d}, rng);
  p.bk = rand_t({d}, rng);
  p.wv = rand_t({d, d}, rng);
  p.bv = rand_t({d}, rng);
  p.wo = rand_t({d, d}, rng);
  p.bo = rand_t({d}, rng);
  return p;
}

void bm_windowed_attention(benchmark::State& state) {
  const int64_t h = state.range(0), w = state.range(0), d = 32;
  Rng rng(7);
  MhaParams p = make_params(d, 4, rng);
  RelPosBias bias;
  bias.w_h = 4;
  bias.w_w = 4;
  bias.table = rand_t({49, p.heads}, rng);
  Tensor tokens = rand_t({1, h * w, d}, rng);
  for (auto _ : state) {
    Tape tape;
    Tensor out = mw_mha(tokens, h, w, p, bias, geom::WindowSpec::regular(4, 4)).output;
    benchmark::DoNotOptimize(out.data().data());
  }
  state.SetComplexityN(h * w);
}

void bm_global_attention(benchmark::State& state) {
  const int64_t h = state.range(0), w = state.range(0), d = 32;
  Rng rng(7);
  MhaParams p = make_params(d, 4, rng);
  RelPosBias bias;
  bias.w_h = h;
  bias.w_w = w;
  bias.table = rand_t({(2 * h - 1) * (2 * w - 1), p.heads}, rng);
  Tensor tokens = rand_t({1, h * w, d}, rng);
  for (auto _ : state) {
    Tape tape;
    Tensor out = mw_mha(tokens, h, w, p, bias, geom::WindowSpec::regular(h, w)).output;
    benchmark::DoNotOptimize(out.data().data());
  }
  state.SetComplexityN(h * w);
}

void bm_model_forward(benchmark::State& state) {
  MmtConfig cfg;
  cfg.n_contrasts = 3;
  cfg.base_dim = 6;
  cfg.n_scales = 2;
  cfg.img_h = cfg.img_w = 32;
  cfg.window_h = cfg.window_w = 4;
  cfg.patch = 4;
  MmtModel model(cfg, 11);
  Rng rng(13);
  std::vector<Tensor> inputs = {rand_t({1, 32, 32}, rng), rand_t({1, 32, 32}, rng)};
  for (auto _ : state) {
    Tape tape;
    auto out = model.forward(inputs, {0, 2}, {1});
    benchmark::DoNotOptimize(out.images.front().data().data());
  }
}

}  // namespace

BENCHMARK(bm_windowed_attention)->RangeMultiplier(2)->Range(8, 32)->Complexity();
BENCHMARK(bm_global_attention)->RangeMultiplier(2)->Range(8, 32)->Complexity();
BENCHMARK(bm_model_forward)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
