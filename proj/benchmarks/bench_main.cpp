// Copyright 2026 The metareg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <benchmark/benchmark.h>

#include "metareg/config.hpp"
#include "metareg/meta.hpp"
#include "metareg/models.hpp"
#include "metareg/ops.hpp"
#include "metareg/phantom.hpp"
#include "metareg/transforms.hpp"

using namespace metareg;

namespace {

Tensor random_tensor(std::vector<int> dims, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(dims));
  for (float& v : t.storage()) v = float(rng.uniform(-1, 1));
  return t;
}

const CasePair& pair32() {
  static const CasePair p = gen_phantom_pair(1, {32, 32, 32}, 2.0);
  return p;
}

const RegNet& net() {
  static const RegNet n = [] {
    Rng rng(2);
    return init_regnet(RegNetConfig{}, rng);
  }();
  return n;
}

}  // namespace

static void BM_Conv3d(benchmark::State& st) {
  const int n = int(st.range(0)), c = int(st.range(1));
  const Tensor in = random_tensor({c, n, n, n}, 1);
  const Tensor w = random_tensor({c, c, 3, 3, 3}, 2);
  for (auto _ : st) benchmark::DoNotOptimize(conv3d(in, w, 1));
  st.SetItemsProcessed(st.iterations() * std::int64_t(n) * n * n * c * c * 27);
}
BENCHMARK(BM_Conv3d)->Args({32, 2})->Args({32, 16})->Args({16, 32})->Unit(benchmark::kMillisecond);

static void BM_Warp(benchmark::State& st) {
  const int n = int(st.range(0));
  const Volume v{random_tensor({n, n, n}, 3), 0.8};
  const DisplacementField f{random_tensor({3, n, n, n}, 4)};
  for (auto _ : st) benchmark::DoNotOptimize(warp_volume(v, f));
}
BENCHMARK(BM_Warp)->Arg(32)->Arg(48)->Unit(benchmark::kMillisecond);

// Forward, backward and one Adam step on a single pair.
static void BM_RegNetStep(benchmark::State& st) {
  const CasePair& p = pair32();
  const std::pair<Volume, Volume> batch[] = {{p.moving.image, p.fixed.image}};
  RegNet n = net();
  AdamState adam = AdamState::fresh(AdamConfig{1e-3}, n.params);
  for (auto _ : st) {
    const LossAndGrad lg = batch_loss_and_grad(n.config, n.params, batch, LossWeights{});
    n.params = adam_step(adam, n.params, lg.grad);
  }
}
BENCHMARK(BM_RegNetStep)->Unit(benchmark::kMillisecond);

static void BM_Inference(benchmark::State& st) {
  const CasePair& p = pair32();
  for (auto _ : st) benchmark::DoNotOptimize(predict_ddf(net(), p.moving.image, p.fixed.image));
}
BENCHMARK(BM_Inference)->Unit(benchmark::kMillisecond);

static void BM_ClassicalIterations(benchmark::State& st) {
  const CasePair& p = pair32();
  ClassicalConfig cfg;
  cfg.iterations = int(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(classical_register(p.moving.image, p.fixed.image, cfg));
  st.counters["steps"] = benchmark::Counter(double(cfg.iterations), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_ClassicalIterations)->Arg(100)->Unit(benchmark::kMillisecond);

static void BM_Tto(benchmark::State& st) {
  const CasePair& p = pair32();
  TtoConfig cfg = desk_preset().tto;
  for (auto _ : st) benchmark::DoNotOptimize(test_time_optimize(net(), p.moving.image, p.fixed.image, cfg, 7));
}
BENCHMARK(BM_Tto)->Unit(benchmark::kMillisecond);
