// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include "pedebias/kernels.hpp"
#include "pedebias/random.hpp"
#include "pedebias/transformer.hpp"

using namespace pedebias;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  Matrix m(rows, cols);
  for (double& x : m.data) x = normal_draw(rng, 1.0);
  return m;
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  Matrix c(n, n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::matmul(a, b, c, false);
    } else {
      kernels::serial::matmul(a, b, c, false);
    }
    benchmark::DoNotOptimize(c.data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <bool Parallel>
void BM_LossAndGrad(benchmark::State& state) {
  ModelConfig config;
  config.layers = 2;
  config.d = 64;
  config.heads = 4;
  config.max_len = 32;
  config.vocab_size = 200;
  const FrozenCore core = FrozenCore::initialize(config, 1);
  Rng rng = make_rng(3);
  std::vector<std::vector<TokenId>> seqs(static_cast<std::size_t>(state.range(0)));
  for (auto& s : seqs) {
    s.push_back(special::kBos);
    for (int i = 0; i < 20; ++i) s.push_back(static_cast<TokenId>(special::kCount + uniform_index(rng, 196)));
  }
  const auto batch = make_examples(seqs, Objective::Causal, 4);
  for (auto _ : state) {
    auto r = Parallel ? loss_and_grad(core, nullptr, batch) : loss_and_grad_serial(core, nullptr, batch);
    benchmark::DoNotOptimize(r.loss);
  }
}

}  // namespace

BENCHMARK(BM_Matmul<false>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Matmul<true>)->Name("matmul/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_LossAndGrad<false>)->Name("loss_and_grad/serial")->Arg(16);
BENCHMARK(BM_LossAndGrad<true>)->Name("loss_and_grad/parallel")->Arg(16);

BENCHMARK_MAIN();
