// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include <benchmark/benchmark.h>

#include "tnt/parallel_exec.hpp"

namespace tnt {
namespace {

using memory::Arch;
using memory::FastWeights;

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(r, c);
  for (double& x : m.data()) x = u(rng);
  return m;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(0);
  const Matrix a = random_matrix(n, n, rng);
  const Matrix b = random_matrix(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

void BM_ChunkwiseCompress(benchmark::State& state) {
  const auto chunk = static_cast<std::size_t>(state.range(0));
  const auto arch = state.range(1) == 0 ? Arch::kLinear : Arch::kMlp2;
  std::mt19937_64 rng(1);
  const auto batch = exec::synthetic_batch(1024, 16, true, 0.01, rng);
  const auto w0 = FastWeights::random(arch, 16, 32, Activation::kTanh, 0.5, rng);
  for (auto _ : state) benchmark::DoNotOptimize(memory::chunkwise_compress(w0, batch, {chunk}));
  state.SetItemsProcessed(state.iterations() * 1024);
}
BENCHMARK(BM_ChunkwiseCompress)->ArgsProduct({{1, 8, 64}, {0, 1}});

void BM_ProjectionScan(benchmark::State& state) {
  const auto chunk = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  const auto batch = exec::synthetic_batch(1024, 16, true, 0.01, rng);
  for (auto _ : state)
    benchmark::DoNotOptimize(qk::chunkwise_projection_scan(batch.keys, chunk, 256, true));
  state.SetItemsProcessed(state.iterations() * 1024);
}
BENCHMARK(BM_ProjectionScan)->Arg(1)->Arg(8)->Arg(64);

hierarchy::HierarchyConfig bench_hierarchy(std::mt19937_64& rng) {
  hierarchy::HierarchyConfig h;
  h.dim = 16;
  h.global_chunk = 256;
  h.global_init = FastWeights::random(Arch::kLinear, 16, 0, Activation::kTanh, 0.5, rng);
  for (std::size_t c : {8, 16})
    h.locals.push_back({c, 256, FastWeights::random(Arch::kLinear, 16, 0, Activation::kTanh, 0.5, rng)});
  return h;
}

void BM_RunSharded(benchmark::State& state) {
  const auto length = static_cast<std::size_t>(state.range(0));
  const auto workers = static_cast<std::size_t>(state.range(1));
  std::mt19937_64 rng(3);
  const auto h = bench_hierarchy(rng);
  const auto batch = exec::synthetic_batch(length, 16, true, 0.01, rng);
  exec::ShardedExecutor executor(workers);
  for (auto _ : state) benchmark::DoNotOptimize(executor.run(h, batch));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(length));
}
BENCHMARK(BM_RunSharded)->ArgsProduct({{1024, 4096}, {1, 2, 4}})->UseRealTime();

void BM_CausalAttention(benchmark::State& state) {
  const auto length = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(4);
  const auto batch = exec::synthetic_batch(length, 16, true, 0.01, rng);
  for (auto _ : state)
    benchmark::DoNotOptimize(exec::causal_attention(batch.queries, batch.keys, batch.values));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(length));
}
BENCHMARK(BM_CausalAttention)->Arg(1024)->Arg(4096);

}  // namespace
}  // namespace tnt

BENCHMARK_MAIN();
