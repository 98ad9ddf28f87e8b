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

#include <gtest/gtest.h>

#include "madanet/network.hpp"
#include "test_util.hpp"

namespace madanet {
namespace {

using testing::random_tensor;

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.input_size = 32;
  cfg.hourglass.depth = 2;
  cfg.hourglass.channels = {4, 6, 8};
  cfg.branch_channels = 3;
  cfg.attention.d_k = 2;
  return cfg;
}

Var<float> image(Rng& rng, int n, int size) {
  return Var<float>(random_tensor(rng, {n, 3, size, size}, 0, 1));
}

// Closed-form parameter tally of the architecture.
std::size_t conv(int in, int out, int k) { return std::size_t(out) * in * k * k + out; }
std::size_t conv_block(int in, int out, int k = 3) { return conv(in, out, k) + 2 * out; }
std::size_t residual(int in, int out, bool projection) {
  return conv_block(in, out) + conv_block(out, out) + (projection ? conv_block(in, out, 1) : 0);
}

std::size_t expected_parameters(const ModelConfig& m) {
  const auto& hg = m.hourglass;
  const int c0 = hg.channels[0], b = m.branch_channels, maps = m.num_classes + 4;
  std::size_t hourglass = 0;
  for (const auto& blk : hg.blocks()) {
    const bool down = blk.role == BlockRole::kEncoder && blk.level > 0;
    hourglass += residual(blk.in_channels, blk.out_channels,
                          down || blk.in_channels != blk.out_channels);
  }
  const std::size_t head = conv_block(c0, c0) + conv(c0, maps, 1);
  std::size_t total = conv_block(3, c0, m.lr_stride) + residual(c0, c0, false);
  total += 2 * hourglass + 2 * head;
  total += conv_block(maps, b) + conv_block(c0, b) + conv_block(b, b);
  int fused = 2 * b;
  if (m.use_grkc) {
    total += conv_block(3, b, m.hr_stride) + residual(b, b, false);
    fused += b;
  }
  total += conv_block(fused, c0) + residual(c0, c0, false);
  const auto blocks = hg.blocks();
  if (m.use_attention && m.use_deformable) {
    for (int t : m.lr_taps()) {
      const int ch = blocks[t].out_channels;
      total += std::size_t(ch) * ch * 9 + ch + conv(ch, 18, 3);
    }
  }
  if (m.use_attention) {
    for (int t : m.hr_taps()) {
      const int ch = blocks[t].out_channels, dk = m.attention.d_k;
      total += 3 * conv(ch, dk, 1) + conv(dk, ch, 1);
    }
  }
  return total;
}

TEST(ModelConfig, Validate) {
  ModelConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.lr_stride = 16;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.input_size = 100;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.num_classes = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(ModelConfig{}.lr_map_size(), 16);
  EXPECT_EQ(ModelConfig{}.hr_map_size(), 32);
}

TEST(ModelConfig, TapPolicy) {
  ModelConfig cfg;
  EXPECT_EQ(cfg.lr_taps(), (std::set<int>{1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(cfg.hr_taps(), (std::set<int>{2, 3, 4, 5}));
}

TEST(MadaCenterNet, DefaultShapes) {
  Rng rng(1);
  MadaCenterNet<float> net(rng, ModelConfig{});
  auto out = net.forward(image(rng, 2, 128), Phase::kTrain);
  EXPECT_EQ(out.lr.heatmap.shape(), (Shape{2, 1, 16, 16}));
  EXPECT_EQ(out.lr.offset.shape(), (Shape{2, 2, 16, 16}));
  EXPECT_EQ(out.lr.size.shape(), (Shape{2, 2, 16, 16}));
  EXPECT_EQ(out.hr.heatmap.shape(), (Shape{2, 1, 32, 32}));
  EXPECT_EQ(out.lr.stride, 8);
  EXPECT_EQ(out.hr.stride, 4);
  for (float v : out.hr.heatmap.value().span()) {
    ASSERT_GT(v, 0.0f);
    ASSERT_LT(v, 1.0f);
  }
}

TEST(MadaCenterNet, FullResolutionShapes) {
  Rng rng(2);
  ModelConfig cfg;
  cfg.input_size = 512;
  MadaCenterNet<float> net(rng, cfg);
  NoGradGuard guard;
  auto out = net.forward(image(rng, 1, 512), Phase::kEval);
  EXPECT_EQ(out.lr.heatmap.shape(), (Shape{1, 1, 64, 64}));
  EXPECT_EQ(out.hr.heatmap.shape(), (Shape{1, 1, 128, 128}));
}

TEST(MadaCenterNet, StageShapes) {
  Rng rng(3);
  MadaCenterNet<float> net(rng, ModelConfig{});
  auto stem = net.stem(image(rng, 1, 128), Phase::kTrain);
  EXPECT_EQ(stem.shape(), (Shape{1, 32, 16, 16}));
  auto lr = net.lr_stage(stem, Phase::kTrain);
  EXPECT_EQ(lr.taps.size(), net.config().lr_taps().size());
  EXPECT_EQ(lr.pred.heatmap.shape().c + lr.pred.offset.shape().c + lr.pred.size.shape().c, 5);
  auto up = net.upsample_transform(lr.pred, lr.features, Phase::kTrain);
  EXPECT_EQ(up.up.shape(), (Shape{1, 16, 32, 32}));
  EXPECT_EQ(up.in.shape(), (Shape{1, 16, 32, 32}));
  auto fused = net.grkc_fuse(image(rng, 1, 128), up.in, up.up, Phase::kTrain);
  EXPECT_EQ(fused.shape(), (Shape{1, 32, 32, 32}));
  auto hr = net.hr_stage(fused, lr.taps, Phase::kTrain);
  EXPECT_EQ(hr.heatmap.shape(), (Shape{1, 1, 32, 32}));
}

TEST(MadaCenterNet, ZeroLrHeadGivesHalf) {
  Rng rng(4);
  MadaCenterNet<float> net(rng, tiny_config());
  net.lr_head_output().weight().mutable_value().fill(0);
  net.lr_head_output().bias().mutable_value().fill(0);
  auto out = net.forward(image(rng, 1, 32), Phase::kTrain);
  for (float v : out.lr.heatmap.value().span()) EXPECT_EQ(v, 0.5f);
  for (float v : out.lr.size.value().span()) EXPECT_EQ(v, 0.0f);
}

TEST(MadaCenterNet, InitialHeatmapBias) {
  Rng rng(5);
  MadaCenterNet<float> net(rng, tiny_config());
  EXPECT_FLOAT_EQ(net.hr_head_output().bias().value()[0], -4.6f);
  EXPECT_EQ(net.hr_head_output().bias().value()[1], 0.0f);
}

TEST(MadaCenterNet, GrkcReadsImage) {
  Rng rng(6);
  auto run = [&](bool grkc) {
    ModelConfig cfg = tiny_config();
    cfg.use_grkc = grkc;
    Rng init(7);
    MadaCenterNet<float> net(init, cfg);
    Var<float> in(random_tensor(rng, {1, 3, 8, 8}));
    Var<float> up(random_tensor(rng, {1, 3, 8, 8}));
    Var<float> black(Tensor<float>({1, 3, 32, 32}));
    Var<float> bright(Tensor<float>({1, 3, 32, 32}, 0.5f));
    bright.mutable_value()(0, 1, 3, 4) = 1.0f;
    auto a = net.grkc_fuse(black, in, up, Phase::kEval);
    auto b = net.grkc_fuse(bright, in, up, Phase::kEval);
    return a.value() == b.value();
  };
  EXPECT_FALSE(run(true));
  EXPECT_TRUE(run(false));
}

TEST(MadaCenterNet, DeterministicAndPure) {
  auto build = [] {
    Rng rng(8);
    return MadaCenterNet<float>(rng, tiny_config());
  };
  auto a = build();
  auto b = build();
  Rng rng(9);
  auto x = image(rng, 2, 32);
  auto ya = a.forward(x, Phase::kEval);
  auto yb = b.forward(x, Phase::kEval);
  EXPECT_EQ(ya.hr.heatmap.value(), yb.hr.heatmap.value());
  auto again = a.forward(x, Phase::kEval);
  EXPECT_EQ(ya.hr.size.value(), again.hr.size.value());
  EXPECT_EQ(ya.lr.offset.value(), again.lr.offset.value());
}

TEST(MadaCenterNet, SilentLinksReduceToPlainHourglass) {
  Rng rng(10);
  MadaCenterNet<double> net(rng, tiny_config());
  Var<double> x(random_tensor<double>(rng, {1, 3, 32, 32}, 0, 1));
  auto lr = net.lr_stage(net.stem(x, Phase::kEval), Phase::kEval);
  auto u = net.upsample_transform(lr.pred, lr.features, Phase::kEval);
  auto fused = net.grkc_fuse(x, u.in, u.up, Phase::kEval);
  const auto plain = net.hr_stage_plain(fused, Phase::kEval);

  // Freshly initialized links have zero output maps.
  auto linked = net.hr_stage(fused, lr.taps, Phase::kEval);
  EXPECT_EQ(linked.heatmap.value(), plain.heatmap.value());
  EXPECT_EQ(linked.size.value(), plain.size.value());

  // Nonzero output maps with silenced values are still a no-op.
  for (auto& [index, link] : net.links()) {
    for (auto& v : link.output().weight().mutable_value().span()) v = rng.normal();
    link.value().weight().mutable_value().fill(0);
  }
  linked = net.hr_stage(fused, lr.taps, Phase::kEval);
  EXPECT_EQ(linked.heatmap.value(), plain.heatmap.value());

  for (auto& [index, link] : net.links()) {
    for (auto& v : link.value().weight().mutable_value().span()) v = rng.normal();
  }
  linked = net.hr_stage(fused, lr.taps, Phase::kEval);
  EXPECT_GT(testing::max_abs_diff(linked.heatmap.value(), plain.heatmap.value()), 0.0);
}

TEST(MadaCenterNet, ParameterCountGolden) {
  Rng rng(11);
  MadaCenterNet<float> net(rng, ModelConfig{});
  EXPECT_EQ(parameter_count<float>(net), 1466726u);
  EXPECT_EQ(parameter_count<float>(net), expected_parameters(ModelConfig{}));
}

TEST(MadaCenterNet, ParameterCountFollowsConfig) {
  for (int mask = 0; mask < 8; ++mask) {
    ModelConfig cfg = tiny_config();
    cfg.use_grkc = mask & 1;
    cfg.use_attention = mask & 2;
    cfg.use_deformable = mask & 4;
    Rng rng(12);
    MadaCenterNet<float> net(rng, cfg);
    EXPECT_EQ(parameter_count<float>(net), expected_parameters(cfg)) << mask;
  }
}

TEST(MadaCenterNet, AblationsRun) {
  for (int mask = 0; mask < 8; ++mask) {
    ModelConfig cfg = tiny_config();
    cfg.use_grkc = mask & 1;
    cfg.use_attention = mask & 2;
    cfg.use_deformable = mask & 4;
    Rng rng(13);
    MadaCenterNet<float> net(rng, cfg);
    EXPECT_EQ(net.deformables().empty(), !(cfg.use_attention && cfg.use_deformable));
    EXPECT_EQ(net.links().empty(), !cfg.use_attention);
    auto out = net.forward(image(rng, 2, 32), Phase::kTrain);
    EXPECT_EQ(out.hr.heatmap.shape(), (Shape{2, 1, 8, 8}));
    backward(ops::sum(out.hr.heatmap));
  }
}

TEST(MadaCenterNet, WrongInputSize) {
  Rng rng(14);
  MadaCenterNet<float> net(rng, tiny_config());
  EXPECT_THROW(net.forward(image(rng, 1, 64), Phase::kTrain), ShapeError);
  EXPECT_THROW(net.forward(Var<float>(Tensor<float>({1, 1, 32, 32})), Phase::kTrain), ShapeError);
}

TEST(MadaCenterNet, ParameterNamesUnique) {
  Rng rng(15);
  MadaCenterNet<float> net(rng, ModelConfig{});
  std::set<std::string> names;
  for (const auto& [name, v] : named_parameters<float>(net)) {
    EXPECT_TRUE(names.insert(name).second) << name;
  }
  EXPECT_TRUE(names.count("deform1.offset.weight"));
  EXPECT_TRUE(names.count("attention2.query.weight"));
  EXPECT_FALSE(names.count("attention1.query.weight"));
}

}  // namespace
}  // namespace madanet
