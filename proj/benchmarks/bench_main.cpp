#include <benchmark/benchmark.h>

#include "cxr/architecture.hpp"
#include "cxr/augment.hpp"
#include "cxr/layers.hpp"
#include "cxr/metrics.hpp"
#include "cxr/model.hpp"
#include "cxr/rng.hpp"
#include "cxr/saliency.hpp"

namespace {

using namespace cxr;

Tensor<float> random_input(Shape shape, std::uint64_t seed) {
  Tensor<float> t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.values()) v = static_cast<float>(uniform(rng, 0.0, 2.0));
  return t;
}

// Conv layer at the sizes Arch1 sees: 150x150x1 then 75x75x32, 37x37x32, ...
void BM_ConvForward(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto cin = static_cast<std::size_t>(state.range(1));
  const auto x = random_input({side, side, cin}, 1);
  const auto k = random_input({3, 3, cin, 32}, 2);
  const Tensor<float> b({32});
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward(x, k, b, Padding::same));
}
BENCHMARK(BM_ConvForward)->Args({150, 1})->Args({75, 32})->Args({37, 32})->Unit(benchmark::kMillisecond);

void BM_ConvBackward(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto cin = static_cast<std::size_t>(state.range(1));
  const auto x = random_input({side, side, cin}, 1);
  const auto k = random_input({3, 3, cin, 32}, 2);
  const auto up = random_input({side, side, 32}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_backward(up, x, k, Padding::same, cin > 1));
}
BENCHMARK(BM_ConvBackward)->Args({150, 1})->Args({75, 32})->Args({37, 32})->Unit(benchmark::kMillisecond);

// One Adam-ready gradient for a batch of Arch images (forward + backward).
void BM_TrainStep(benchmark::State& state) {
  const auto& spec = architectures().at(static_cast<std::size_t>(state.range(0)));
  const auto batch = static_cast<std::size_t>(state.range(1));
  const auto model = build_model<float>(spec, 5);
  const auto x = random_input({batch, kImageSize, kImageSize, 1}, 4);
  Tensor<float> y({batch, 2});
  for (std::size_t i = 0; i < batch; ++i) y[i * 2 + i % 2] = 1.0f;
  Rng rng(6);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grad(model, x, y, Mode::training, &rng));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch));
  state.SetLabel(spec.name);
}
BENCHMARK(BM_TrainStep)->Args({0, 8})->Args({3, 8})->Unit(benchmark::kMillisecond);

void BM_Saliency(benchmark::State& state) {
  const auto model = build_model<float>(architecture_by_name("Arch4"), 5);
  const auto x = random_input({kImageSize, kImageSize, 1}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(saliency(model, x, 1, "bench"));
}
BENCHMARK(BM_Saliency)->Unit(benchmark::kMillisecond);

void BM_Augment(benchmark::State& state) {
  GrayImage img(kImageSize, kImageSize, 90.0f);
  Rng rng(7);
  const AugmentationConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(augment(img, cfg, rng));
}
BENCHMARK(BM_Augment)->Unit(benchmark::kMicrosecond);

void BM_RocAuc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(8);
  std::vector<double> scores(n);
  std::vector<Label> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = uniform(rng, 0.0, 1.0);
    labels[i] = i % 3 == 0 ? Label::consolidation : Label::non_consolidation;
  }
  for (auto _ : state) benchmark::DoNotOptimize(auc(roc_curve(scores, labels)));
}
BENCHMARK(BM_RocAuc)->Arg(1000)->Arg(100000)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
