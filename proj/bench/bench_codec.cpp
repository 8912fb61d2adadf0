/*
 * Copyright 2026 The A3D-MoE Simulator Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


// OpenMP kernels against their serial references.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "a3d/codec.hpp"

namespace {

std::vector<a3d::codec::Bf16> gaussian(std::size_t n) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> d(0.0f, 0.02f);
  std::vector<a3d::codec::Bf16> w(n);
  for (auto& x : w) x = a3d::codec::bf16_from_float(d(rng));
  return w;
}

void BM_HistogramParallel(benchmark::State& st) {
  const auto w = gaussian(std::size_t(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(a3d::codec::exponent_histogram(w));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_HistogramSerial(benchmark::State& st) {
  const auto w = gaussian(std::size_t(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(a3d::codec::exponent_histogram_serial(w));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_SweepParallel(benchmark::State& st) {
  const auto map = a3d::codec::RegularMap::from_window(112);
  for (auto _ : st) benchmark::DoNotOptimize(a3d::codec::roundtrip_sweep(map));
}

void BM_SweepSerial(benchmark::State& st) {
  const auto map = a3d::codec::RegularMap::from_window(112);
  for (auto _ : st) benchmark::DoNotOptimize(a3d::codec::roundtrip_sweep_serial(map));
}

}  // namespace

BENCHMARK(BM_HistogramParallel)->Arg(1 << 16)->Arg(1 << 22);
BENCHMARK(BM_HistogramSerial)->Arg(1 << 16)->Arg(1 << 22);
BENCHMARK(BM_SweepParallel);
BENCHMARK(BM_SweepSerial);

BENCHMARK_MAIN();
