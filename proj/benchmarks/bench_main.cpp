#include <benchmark/benchmark.h>

#include "canc/config.hpp"
#include "canc/data.hpp"
#include "canc/noise.hpp"
#include "canc/rng.hpp"
#include "canc/train.hpp"

namespace {

using namespace canc;

NetworkSpec default_spec(std::uint64_t seed) {
  NetworkSpec spec;
  spec.input = {32, 32, 3};
  spec.layers = default_layers(32, 3);
  spec.seed = seed;
  return spec;
}

Batch random_batch(const Shape3& shape, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> samples(n * shape.size());
  for (auto& v : samples) v = rng.uniform();
  std::vector<std::uint8_t> labels(n);
  for (auto& y : labels) y = static_cast<std::uint8_t>(rng.below(2));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return Batch(shape, std::move(samples), std::move(labels), std::move(idx));
}

void BM_PerSampleLoss(benchmark::State& state) {
  const auto net = init_network(default_spec(1));
  const auto batch = random_batch(net.spec().input, static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(per_sample_loss(net, batch));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PerSampleLoss)->Arg(32)->Arg(64);

void BM_LossGradient(benchmark::State& state) {
  const auto net = init_network(default_spec(1));
  const auto batch = random_batch(net.spec().input, static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(loss_gradient(net, batch));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LossGradient)->Arg(32)->Arg(64);

void BM_SelectClean(benchmark::State& state) {
  Rng rng(3);
  std::vector<double> losses(static_cast<std::size_t>(state.range(0)));
  for (auto& l : losses) l = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(select_clean(losses, 0.55));
}
BENCHMARK(BM_SelectClean)->Arg(64)->Arg(1000)->Arg(100000);

void BM_CancIteration(benchmark::State& state) {
  const auto m1 = init_network(default_spec(1));
  const auto m2 = init_network(default_spec(2));
  const auto batch = random_batch(m1.spec().input, 32, 4);
  for (auto _ : state) benchmark::DoNotOptimize(canc_iteration(m1, m2, batch, 0.5, 0.2, 0.02));
}
BENCHMARK(BM_CancIteration);

void BM_TrainEpoch(benchmark::State& state) {
  SceneGenParams p;
  p.size = 256;
  p.seed = 5;
  std::vector<Scene> scenes;
  for (std::uint32_t i = 0; i < 4; ++i) scenes.push_back(generate_scene(p, i));
  auto split = split_dataset(build_dataset(scenes, 32, 0.01), {0.8, 0.2, 0.0}, 6);
  inject_noise(split.train, symmetric_matrix(0.35), 7);
  TrainConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.max_epochs = 1;
  cfg.batch_size = 32;
  cfg.persist_swaps = state.range(0) != 0;
  const auto spec = default_spec(0);
  for (auto _ : state) benchmark::DoNotOptimize(train(split.train, split.modelsel, cfg, spec));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(split.train.size()));
}
BENCHMARK(BM_TrainEpoch)->ArgName("persist_swaps")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
