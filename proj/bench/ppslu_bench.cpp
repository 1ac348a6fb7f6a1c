// Copyright 2026 The PPSLU Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Serial reference kernels against their OpenMP counterparts. Thread count
// follows OMP_NUM_THREADS.

#include <random>
#include <vector>

#include "benchmark/benchmark.h"
#include "ppslu/eval.hpp"
#include "ppslu/kernels.hpp"
#include "ppslu/train.hpp"

namespace {

using namespace ppslu;

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> dist;
  std::vector<double> a(n * n), b(n * n), c(n * n);
  for (auto& x : a) x = dist(rng);
  for (auto& x : b) x = dist(rng);
  const kernels::Gemm g{n, n, n, a.data(), b.data(), c.data()};
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::gemm(g);
    } else {
      kernels::serial::gemm(g);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * n * n * n));
  state.counters["threads"] = kernels::max_threads();
}
BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/openmp")->Arg(64)->Arg(128)->Arg(256);

struct Desk {
  Corpus corpus = generate_corpus(GeneratorConfig{});
  CorpusSplit split = split_corpus(corpus, {0.8, 0.1, 0.1}, 42);
};
const Desk& desk() {
  static const Desk d;
  return d;
}

// One h-ppslu epoch: per-utterance tapes in parallel, fixed-order reduction.
template <kernels::Policy P>
void BM_TrainEpoch(benchmark::State& state) {
  TrainConfig cfg;
  cfg.preset = Preset::kHPpslu;
  cfg.epochs_main = 1;
  cfg.policy = P;
  ModelConfig mc;
  mc.partition = preset_partition(Preset::kHPpslu, 64);
  for (auto _ : state) {
    ModelBundle m(mc);
    train_multitask(m, desk().split.train, cfg);
  }
  state.counters["utterances/s"] = benchmark::Counter(
      static_cast<double>(desk().split.train.size() * state.iterations()), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_TrainEpoch<kernels::Policy::kSerial>)->Name("train_epoch/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainEpoch<kernels::Policy::kParallel>)->Name("train_epoch/openmp")->Unit(benchmark::kMillisecond);

template <kernels::Policy P>
void BM_SluEval(benchmark::State& state) {
  const ModelBundle m{ModelConfig{}};
  for (auto _ : state) benchmark::DoNotOptimize(slu_accuracy(m, desk().corpus, P));
}
BENCHMARK(BM_SluEval<kernels::Policy::kSerial>)->Name("slu_eval/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SluEval<kernels::Policy::kParallel>)->Name("slu_eval/openmp")->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
