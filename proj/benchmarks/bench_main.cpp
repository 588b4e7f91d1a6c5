#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "mcdet/ops.hpp"
#include "mcdet/proposals.hpp"
#include "mcdet/synthdata.hpp"

using namespace mcdet;

namespace {

Tensor<float> random_tensor(Shape shape, std::uint64_t seed) {
  Tensor<float> t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.f, 1.f);
  for (auto& v : t.data()) v = n(rng);
  return t;
}

FusedImage scene(std::size_t w, std::size_t h) {
  SceneSpec s;
  s.width = w;
  s.height = h;
  s.max_target_size = std::min<std::size_t>(64, w / 2);
  s.frames = 2;
  s.seed = 7;
  const auto seq = generate(s);
  FusedImage img;
  const auto motion = compute_motion(seq.visible.frames[1], seq.visible.frames[0]).base;
  img.planes = {seq.visible.frames[1], motion, seq.mwir.frames[1]};
  return img;
}

}  // namespace

static void BM_Conv2dForward(benchmark::State& state) {
  const auto size = static_cast<std::size_t>(state.range(0));
  LayerSpec spec;
  spec.kind = LayerKind::conv;
  spec.in_channels = 16;
  spec.out_channels = 32;
  spec.kernel_h = spec.kernel_w = 5;
  spec.stride = 2;
  spec.pad = 1;
  const auto input = random_tensor({1, 16, size, size}, 1);
  const auto weight = random_tensor({32, 16, 5, 5}, 2);
  const auto bias = random_tensor({32}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward(input, weight, bias, spec));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Conv2dForward)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

static void BM_Conv2dBackward(benchmark::State& state) {
  const auto size = static_cast<std::size_t>(state.range(0));
  LayerSpec spec;
  spec.kind = LayerKind::conv;
  spec.in_channels = 16;
  spec.out_channels = 32;
  spec.kernel_h = spec.kernel_w = 5;
  spec.stride = 2;
  spec.pad = 1;
  const auto input = random_tensor({1, 16, size, size}, 1);
  const auto weight = random_tensor({32, 16, 5, 5}, 2);
  const auto bias = random_tensor({32}, 3);
  const auto out = conv2d_forward(input, weight, bias, spec);
  const auto grad = random_tensor(out.shape(), 4);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_backward(grad, input, weight, spec));
}
BENCHMARK(BM_Conv2dBackward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_RoiPoolForward(benchmark::State& state) {
  const auto rois_count = static_cast<std::size_t>(state.range(0));
  const auto features = random_tensor({1, 64, 15, 20}, 5);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> pos(0.0, 200.0), ext(16.0, 120.0);
  std::vector<BBox> rois;
  for (std::size_t i = 0; i < rois_count; ++i) rois.push_back({pos(rng), pos(rng) * 0.5, ext(rng), ext(rng)});
  const RoiPoolSpec spec{6, 6, 1.0 / 16.0};
  for (auto _ : state) benchmark::DoNotOptimize(roi_pool_forward(features, std::span<const BBox>(rois), spec));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rois_count));
}
BENCHMARK(BM_RoiPoolForward)->Arg(64)->Arg(256)->Arg(1024)->Unit(benchmark::kMicrosecond);

static void BM_Felzenszwalb(benchmark::State& state) {
  const auto img = scene(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(felzenszwalb_labels(img, 100, 50, 0.8));
}
BENCHMARK(BM_Felzenszwalb)->Args({160, 120})->Args({320, 240})->Unit(benchmark::kMillisecond);

static void BM_SelectiveSearch(benchmark::State& state) {
  const auto img = scene(320, 240);
  SelectiveSearchConfig cfg;
  cfg.ks.clear();
  for (std::int64_t i = 0; i < state.range(0); ++i) cfg.ks.push_back(50.0 * static_cast<double>(1 << i));
  std::size_t boxes = 0;
  for (auto _ : state) {
    const auto set = selective_search(img, cfg);
    boxes = set.boxes.size();
    benchmark::DoNotOptimize(set);
  }
  state.counters["proposals"] = static_cast<double>(boxes);
}
BENCHMARK(BM_SelectiveSearch)->Arg(1)->Arg(3)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
