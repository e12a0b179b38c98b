// SPDX-License-Identifier: Apache-2.0
#include "ala/metrics.hpp"
#include "ala/model.hpp"
#include "ala/training.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace ala;

ModelConfig desk_config() {
  ModelConfig c;
  c.encoder.lora = LoraSpec::default_for(c.encoder.num_blocks);
  return c;
}

ImageTensor noise_image(int size, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageTensor img(3, size, size);
  for (Eigen::Index i = 0; i < img.pixels.size(); ++i) img.pixels.data()[i] = u(rng);
  return img;
}

void BM_Explain(benchmark::State& state) {
  const AlaModel model(desk_config());
  const ImageTensor img = noise_image(32, 1);
  for (auto _ : state) benchmark::DoNotOptimize(model.explain(img));
}
BENCHMARK(BM_Explain)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const AlaModel model(desk_config());
  const ImageTensor img = noise_image(32, 2);
  const GateState gate = state.range(0) == 0 ? GateState::PassAlpha : GateState::AllOnes;
  for (auto _ : state) benchmark::DoNotOptimize(accumulate_gradients(model, img, 1, gate, 0.1, 1.0));
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_InsertionDeletion(benchmark::State& state) {
  const AlaModel model(desk_config());
  const ImageTensor img = noise_image(32, 3);
  const AttentionMap alpha = model.explain(img);
  const int steps = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(insertion_deletion(model, img, alpha, 0, steps));
}
BENCHMARK(BM_InsertionDeletion)->Arg(100)->Arg(0)->Unit(benchmark::kMillisecond);

void BM_IntegratedGradients(benchmark::State& state) {
  const AlaModel model(desk_config());
  const ImageTensor img = noise_image(32, 4);
  for (auto _ : state) benchmark::DoNotOptimize(integrated_gradients(model, img, 0, 16));
}
BENCHMARK(BM_IntegratedGradients)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
