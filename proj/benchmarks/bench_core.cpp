// SPDX-License-Identifier: Apache-2.0
// Microbenchmarks for the hot paths: forward passes, training steps, the
// transfer objective, and corpus generation.
#include <benchmark/benchmark.h>

#include "ltk/data.hpp"
#include "ltk/losses.hpp"
#include "ltk/model.hpp"
#include "ltk/rng.hpp"
#include "ltk/trainer.hpp"

namespace {

ltk::Tensor random_batch(int batch, const ltk::ModelConfig& cfg, std::uint64_t seed) {
  ltk::Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(batch) * cfg.in_channels * cfg.height *
                        cfg.width);
  for (auto& e : v) e = rng.uniform();
  return ltk::Tensor::from_values({batch, cfg.in_channels, cfg.height, cfg.width},
                                  std::move(v));
}

ltk::Tensor one_hot_batch(int batch, int classes, std::uint64_t seed) {
  ltk::Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(batch) * classes, 0.0);
  for (int b = 0; b < batch; ++b)
    v[static_cast<std::size_t>(b) * classes + rng.uniform_int(classes)] = 1.0;
  return ltk::Tensor::from_values({batch, classes}, std::move(v));
}

void BM_forward_eval(benchmark::State& state) {
  ltk::ModelConfig cfg;
  auto model = ltk::SplitModel::build(cfg);
  model.freeze();
  auto x = random_batch(static_cast<int>(state.range(0)), cfg, 1);
  for (auto _ : state) {
    auto logits = model.forward(x, ltk::Mode::eval);
    benchmark::DoNotOptimize(logits.values().data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_forward_eval)->Arg(1)->Arg(32);

void BM_train_step_ce(benchmark::State& state) {
  ltk::ModelConfig cfg;
  auto model = ltk::SplitModel::build(cfg);
  auto x = random_batch(32, cfg, 2);
  auto y = one_hot_batch(32, cfg.classes, 3);
  ltk::SgdOptimizer opt(model.parameters(), 0.9, 1e-4);
  for (auto _ : state) {
    opt.zero_grad();
    auto loss = ltk::softmax_cross_entropy(model.forward(x, ltk::Mode::train), y).loss;
    loss.backward();
    opt.step(1e-3);
    benchmark::DoNotOptimize(loss.item());
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_train_step_ce);

void BM_vbkt_step(benchmark::State& state) {
  ltk::ModelConfig cfg;
  auto target = ltk::SplitModel::build(cfg);
  cfg.seed = 2;
  auto source = ltk::SplitModel::build(cfg);
  source.freeze();
  ltk::PairedBatch batch;
  batch.x_target = random_batch(32, cfg, 4);
  batch.y = one_hot_batch(32, cfg.classes, 5);
  batch.x_source = random_batch(32, cfg, 6);
  ltk::TransferConfig tc;
  ltk::SgdOptimizer opt(target.parameters(), 0.9, 1e-4);
  int step = 0;
  for (auto _ : state) {
    opt.zero_grad();
    auto breakdown =
        ltk::transfer_loss(target, &source, batch, tc, ltk::NoiseKey{7, 0, step++});
    breakdown.total.backward();
    opt.step(1e-3);
    benchmark::DoNotOptimize(breakdown.total.item());
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_vbkt_step);

void BM_latent_kl(benchmark::State& state) {
  ltk::Rng rng(8);
  std::vector<int> shape = {32, 16, 10, 16};
  std::vector<double> a(static_cast<std::size_t>(ltk::shape_numel(shape)));
  std::vector<double> b(a.size());
  for (auto& e : a) e = rng.normal();
  for (auto& e : b) e = rng.normal();
  auto mu_t = ltk::Tensor::from_values(shape, std::move(a), true);
  auto mu_s = ltk::Tensor::from_values(shape, std::move(b));
  for (auto _ : state) {
    mu_t.zero_grad();
    auto kl = ltk::latent_kl(mu_t, mu_s, 0.2);
    kl.backward();
    benchmark::DoNotOptimize(kl.item());
  }
}
BENCHMARK(BM_latent_kl);

void BM_scene_generation(benchmark::State& state) {
  std::uint64_t seed = 1;
  for (auto _ : state) {
    auto scenes = ltk::generate_scene_dataset(10, 10, 40, 64, seed++);
    benchmark::DoNotOptimize(scenes.data());
  }
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_scene_generation);

void BM_device_capture(benchmark::State& state) {
  auto scenes = ltk::generate_scene_dataset(10, 10, 40, 64, 1);
  auto profile = ltk::DeviceProfile::builtin("s3", 40, 5, 1.0, 9);
  std::size_t i = 0;
  for (auto _ : state) {
    auto captured = ltk::apply_device(scenes[i++ % scenes.size()], profile, 40, 64);
    benchmark::DoNotOptimize(captured.features.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_device_capture);

}  // namespace

BENCHMARK_MAIN();
