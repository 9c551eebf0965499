// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#include <benchmark/benchmark.h>

#include <random>

#include "tempseg/backbone.hpp"
#include "tempseg/detector.hpp"
#include "tempseg/infer.hpp"
#include "tempseg/metrics.hpp"
#include "tempseg/ops.hpp"

namespace ts = tempseg::tensor;
using F = ts::Tensor<float>;

namespace {

F random_tensor(std::mt19937_64& rng, ts::Shape shape, double std = 1.0) {
  std::normal_distribution<float> d(0.0f, static_cast<float>(std));
  std::vector<float> v(ts::numel(shape));
  for (auto& x : v) x = d(rng);
  return F::constant(std::move(shape), std::move(v));
}

std::vector<tempseg::heads::ScoredSegment> random_segments(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 100.0), len(0.1, 5.0), sc(0.0, 1.0);
  std::vector<tempseg::heads::ScoredSegment> v(n);
  for (auto& s : v) {
    s.start = u(rng);
    s.end = s.start + len(rng);
    s.score = sc(rng);
  }
  return v;
}

}  // namespace

static void BM_Conv1d(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor(rng, {8, 256, c});
  const auto w = random_tensor(rng, {c, c, 3}, 0.1);
  const auto b = random_tensor(rng, {c});
  for (auto _ : state) benchmark::DoNotOptimize(ts::conv1d(x, w, b, 1, 1));
  state.SetItemsProcessed(state.iterations() * 8 * 256);
}
BENCHMARK(BM_Conv1d)->Arg(32)->Arg(128);

static void BM_LstmSequence(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor(rng, {8, 256, c});
  const tempseg::backbone::LstmParams<float> p{random_tensor(rng, {c, 4 * c}, 0.1),
                                               random_tensor(rng, {c, 4 * c}, 0.1),
                                               random_tensor(rng, {4 * c}, 0.1)};
  for (auto _ : state) benchmark::DoNotOptimize(tempseg::backbone::lstm_sequence(x, p));
  state.SetItemsProcessed(state.iterations() * 8 * 256);
}
BENCHMARK(BM_LstmSequence)->Arg(32)->Arg(128);

static void BM_LocalAttention(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const std::size_t c = 64;
  const auto x = random_tensor(rng, {8, 256, c});
  auto r = [&](ts::Shape s) { return random_tensor(rng, std::move(s), 0.1); };
  const tempseg::backbone::AttentionParams<float> p{r({c, c}), r({c}), r({c, c}), r({c}),
                                                    r({c, c}), r({c}), r({c, c}), r({c})};
  const ts::Mask mask(8 * 256, 1);
  const auto window = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(tempseg::backbone::local_attention(x, mask, p, 4, window));
}
BENCHMARK(BM_LocalAttention)->Arg(9)->Arg(33);

static void BM_DetectorForward(benchmark::State& state) {
  tempseg::ModelConfig mc;
  mc.input_dim = 16;
  mc.model_dim = 32;
  mc.n_blocks = 4;
  mc.n_levels = 3;
  mc.downsample_stride = 4;
  mc.max_len = 256;
  tempseg::Detector<float> det(mc);
  det.initialize(1);
  std::mt19937_64 rng(4);
  const auto x = random_tensor(rng, {8, 256, 16});
  const ts::Mask mask(8 * 256, 1);
  for (auto _ : state) benchmark::DoNotOptimize(det.forward(x, mask));
}
BENCHMARK(BM_DetectorForward)->Unit(benchmark::kMillisecond);

static void BM_Nms(benchmark::State& state) {
  std::mt19937_64 rng(5);
  const auto segs = random_segments(rng, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(tempseg::infer::nms(segs, 0.6, 50));
}
BENCHMARK(BM_Nms)->Arg(200)->Arg(2000);

static void BM_AveragePrecision(benchmark::State& state) {
  std::mt19937_64 rng(6);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<tempseg::metrics::SamplePredictions> preds;
  std::vector<tempseg::featio::SegmentSet> gts;
  for (std::size_t s = 0; s < n; ++s) {
    preds.push_back(random_segments(rng, 50));
    gts.push_back({{10.0, 12.0}, {40.0, 45.0}, {70.0, 71.0}});
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(tempseg::metrics::average_precision(preds, gts, 0.5));
    benchmark::DoNotOptimize(tempseg::metrics::average_recall_at_k(preds, gts, 20));
  }
}
BENCHMARK(BM_AveragePrecision)->Arg(100)->Arg(1000);

BENCHMARK_MAIN();
