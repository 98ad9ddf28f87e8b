// Copyright 2026 The Madanet Authors. All Rights Reserved.
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

#include "madanet/ops.hpp"
#include "madanet/rng.hpp"

namespace madanet {
namespace {

Tensor<float> uniform(Rng& rng, Shape s) {
  Tensor<float> t(s);
  for (auto& v : t.span()) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

// Args: channels, spatial size.
void BM_Conv2d(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), s = static_cast<int>(state.range(1));
  Rng rng(1);
  const Var<float> x(uniform(rng, {4, c, s, s}));
  const Var<float> w(uniform(rng, {c, c, 3, 3}));
  const Var<float> b(uniform(rng, {1, c, 1, 1}));
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, b, {1, 1}));
  state.SetItemsProcessed(state.iterations() * 4LL * c * c * 9 * s * s);
}
BENCHMARK(BM_Conv2d)->Args({32, 32})->Args({64, 16})->Unit(benchmark::kMicrosecond);

void BM_DeformConv2d(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), s = static_cast<int>(state.range(1));
  Rng rng(2);
  const Var<float> x(uniform(rng, {4, c, s, s}));
  const Var<float> offsets(uniform(rng, {4, 18, s, s}));
  const Var<float> w(uniform(rng, {c, c, 3, 3}));
  const Var<float> b(uniform(rng, {1, c, 1, 1}));
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(ops::deform_conv2d(x, offsets, w, b, {1, 1}));
  state.SetItemsProcessed(state.iterations() * 4LL * c * c * 9 * s * s);
}
BENCHMARK(BM_DeformConv2d)->Args({32, 32})->Args({64, 16})->Unit(benchmark::kMicrosecond);

// Forward and backward through one deformable layer.
void BM_DeformConv2dBackward(benchmark::State& state) {
  Rng rng(3);
  const Var<float> x(uniform(rng, {4, 32, 16, 16}), true);
  const Var<float> offsets(uniform(rng, {4, 18, 16, 16}), true);
  const Var<float> w(uniform(rng, {32, 32, 3, 3}), true);
  const Var<float> b(uniform(rng, {1, 32, 1, 1}), true);
  const Tensor<float> c = uniform(rng, {4, 32, 16, 16});
  for (auto _ : state) {
    backward(ops::dot_const(ops::deform_conv2d(x, offsets, w, b, {1, 1}), c));
  }
}
BENCHMARK(BM_DeformConv2dBackward)->Unit(benchmark::kMillisecond);

// Args: tokens per side, key dimension.
void BM_Attention(benchmark::State& state) {
  const int s = static_cast<int>(state.range(0)), d = static_cast<int>(state.range(1));
  Rng rng(4);
  const Var<float> q(uniform(rng, {4, d, s, s}));
  const Var<float> k(uniform(rng, {4, d, s, s}));
  const Var<float> v(uniform(rng, {4, 32, s, s}));
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(ops::scaled_dot_attention(q, k, v));
  state.SetItemsProcessed(state.iterations() * 4LL * s * s * s * s);
}
BENCHMARK(BM_Attention)->Args({8, 16})->Args({16, 16})->Args({32, 16})->Unit(benchmark::kMicrosecond);

void BM_BilinearResize(benchmark::State& state) {
  Rng rng(5);
  const Var<float> x(uniform(rng, {4, 32, 16, 16}));
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(ops::resize_bilinear(x, 32, 32));
}
BENCHMARK(BM_BilinearResize)->Unit(benchmark::kMicrosecond);

}  // namespace
}  // namespace madanet

BENCHMARK_MAIN();
