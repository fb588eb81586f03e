// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "unipde/gradkit/ops.hpp"
#include "unipde/gradkit/tape.hpp"
#include "unipde/pdegen/initial_conditions.hpp"
#include "unipde/pdegen/solvers.hpp"
#include "unipde/trainer/adam.hpp"
#include "unipde/trainer/losses.hpp"
#include "unipde/trainer/train.hpp"
#include "unipde/unirep/unirep.hpp"
#include "unipde/upsnet/model.hpp"

using namespace unipde;
using gk::Tensor;

namespace {

Tensor noise(const gk::Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  Tensor t(shape);
  for (double& v : t.data()) v = d(rng);
  return t;
}

net::ModelConfig bench_model(std::size_t n) {
  net::ModelConfig c;
  c.n = n;
  c.channels = 16;
  c.modes = 12;
  c.fno_depth = 2;
  c.embed = 64;
  c.body_depth = 2;
  c.heads = 4;
  return c;
}

void BM_SpectralRoundTrip(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t modes = std::min<std::size_t>(12, n / 2);
  const Tensor x = noise({8, 16, n, n}, 1);
  for (auto _ : state) {
    gk::Tape tape;
    auto v = gk::irfft2_trunc(gk::rfft2_trunc(tape.constant(x), modes), n);
    benchmark::DoNotOptimize(v.value().ptr());
  }
  state.SetItemsProcessed(state.iterations() * 8 * 16);
}
BENCHMARK(BM_SpectralRoundTrip)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_SpectralConvBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t modes = std::min<std::size_t>(12, n / 2);
  const Tensor x = noise({8, 16, n, n}, 2);
  Tensor w({16, 16, 2 * modes, modes}, gk::DType::kComplex);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d(0.0, 0.1);
  for (double& v : w.data()) v = d(rng);
  for (auto _ : state) {
    gk::Tape tape;
    auto xv = tape.param("x", x);
    auto wv = tape.param("w", w);
    auto loss = gk::sum(net::spectral_conv2d(xv, wv, modes));
    benchmark::DoNotOptimize(tape.backward(loss));
  }
}
BENCHMARK(BM_SpectralConvBackward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_ModelPredict(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const net::Model model(bench_model(n), 4);
  const Tensor inputs = rep::attach_coords(noise({16, rep::kNumQuantities, n, n}, 5), 2);
  const std::vector<std::string> meta(16, "burgers nu=0.001");
  for (auto _ : state) benchmark::DoNotOptimize(model.predict_tensor(inputs, meta).ptr());
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_ModelPredict)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  net::Model model(bench_model(n), 6);
  rep::UnifiedBatch batch;
  batch.inputs = rep::attach_coords(noise({16, rep::kNumQuantities, n, n}, 7), 2);
  batch.targets = noise({16, rep::kNumQuantities, n, n}, 8);
  batch.mask = Tensor::full(batch.targets.shape(), 1.0);
  batch.metadata.assign(16, "advection beta=0.4");
  batch.group.assign(16, 0);
  train::TrainConfig cfg;
  cfg.lr = 1e-4;
  train::Adam adam;
  std::mt19937_64 rng(9);
  for (auto _ : state) {
    gk::Tape tape;
    net::ParamBinder p(tape, model.params());
    const auto losses = train::batch_loss(model, p, batch, Tensor(), cfg, rng, false);
    const auto grads = tape.backward(losses.total);
    adam.step(model.params(), grads, cfg.adam(cfg.lr));
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_TrainStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_BurgersTrajectory(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor u0 = pde::sample_ic_sinusoid(11, n);
  for (auto _ : state) benchmark::DoNotOptimize(pde::solve_burgers(u0, 0.001, 41, 0.05).ptr());
}
BENCHMARK(BM_BurgersTrajectory)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_ShallowWaterTrajectory(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = pde::cell_centers(n, -2.5, 2.5);
  Tensor h({n, n});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) h[r * n + c] = std::hypot(x[c], x[r]) < 0.5 ? 2.0 : 1.0;
  }
  const Tensor zero({n, n});
  for (auto _ : state) {
    benchmark::DoNotOptimize(pde::solve_shallow_water(h, zero, zero, zero, {}, 11, 0.1).ptr());
  }
}
BENCHMARK(BM_ShallowWaterTrajectory)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
