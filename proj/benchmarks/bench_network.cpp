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

#include "madanet/losses.hpp"
#include "madanet/network.hpp"
#include "madanet/optimizer.hpp"
#include "madanet/synthdata.hpp"

namespace madanet {
namespace {

Tensor<float> batch_images(const std::vector<AnnotatedScene>& scenes) {
  const Shape s = scenes[0].image.shape();
  Tensor<float> out(Shape{static_cast<int>(scenes.size()), s.c, s.h, s.w});
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    std::copy(scenes[i].image.data(), scenes[i].image.data() + scenes[i].image.size(),
              out.plane(static_cast<int>(i), 0));
  }
  return out;
}

// Arg: input size. One optimizer step on a batch of four scenes.
void BM_TrainStep(benchmark::State& state) {
  ModelConfig cfg;
  cfg.input_size = static_cast<int>(state.range(0));
  SceneConfig sc;
  sc.image_size = cfg.input_size;
  sc.count_range = {10, 30};
  std::vector<AnnotatedScene> scenes;
  std::vector<TargetMaps> lr_gt, hr_gt;
  for (int i = 0; i < 4; ++i) {
    scenes.push_back(generate_scene(sc, Rng::derive(6, i)));
    lr_gt.push_back(make_targets(scenes.back(), cfg.lr_stride));
    hr_gt.push_back(make_targets(scenes.back(), cfg.hr_stride));
  }
  const Var<float> image(batch_images(scenes));
  Rng rng(7);
  MadaCenterNet<float> net(rng, cfg);
  Adam adam(AdamConfig{}, named_parameters<float>(net));
  for (auto _ : state) {
    adam.zero_grad();
    auto out = net.forward(image, Phase::kTrain);
    backward(total_loss(out.lr, out.hr, lr_gt, hr_gt, LossConfig{}).total);
    adam.clip_grad_norm(10.0);
    adam.step();
  }
}
BENCHMARK(BM_TrainStep)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Inference(benchmark::State& state) {
  ModelConfig cfg;
  cfg.input_size = static_cast<int>(state.range(0));
  Rng rng(8);
  MadaCenterNet<float> net(rng, cfg);
  Tensor<float> x(Shape{1, 3, cfg.input_size, cfg.input_size});
  for (auto& v : x.span()) v = static_cast<float>(rng.uniform());
  const Var<float> image(x);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(image, Phase::kEval));
}
BENCHMARK(BM_Inference)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace madanet

BENCHMARK_MAIN();
