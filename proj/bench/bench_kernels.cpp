// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include "qrlora/analysis.hpp"
#include "qrlora/kernels.hpp"
#include "qrlora/linalg.hpp"
#include "qrlora/rng.hpp"

using namespace qrlora;

namespace {

template <DenseMatrix (*Fn)(const DenseMatrix&, const DenseMatrix&)>
void bm_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const DenseMatrix a = normal_matrix(n, n, 1), b = normal_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <double (*Fn)(std::span<const double>, std::span<const double>)>
void bm_dot(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const DenseMatrix a = normal_matrix(1, n, 3), b = normal_matrix(1, n, 4);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(a.data(), b.data()));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * sizeof(double)));
}

template <DenseMatrix (*Fn)(const DenseMatrix&, std::size_t, std::uint64_t)>
void bm_probe(benchmark::State& state) {
  const DenseMatrix q = reduced_qr(normal_matrix(64, 8, 5)).q;
  const auto samples = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(Fn(q, samples, 6));
}

}  // namespace

BENCHMARK(bm_matmul<kernels::serial::matmul>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(bm_matmul<kernels::matmul>)->Name("matmul/omp")->Arg(64)->Arg(256);
BENCHMARK(bm_matmul<kernels::serial::matmul_tn>)->Name("matmul_tn/serial")->Arg(64)->Arg(256);
BENCHMARK(bm_matmul<kernels::matmul_tn>)->Name("matmul_tn/omp")->Arg(64)->Arg(256);
BENCHMARK(bm_dot<kernels::serial::dot>)->Name("dot/serial")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(bm_dot<kernels::dot>)->Name("dot/omp")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(bm_probe<serial::projection_independence_probe>)->Name("probe/serial")->Arg(100000);
BENCHMARK(bm_probe<projection_independence_probe>)->Name("probe/omp")->Arg(100000);

BENCHMARK_MAIN();
