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

#include "madanet/backbone.hpp"
#include "madanet/gradcheck.hpp"
#include "test_util.hpp"

namespace madanet {
namespace {

using testing::random_tensor;

TEST(ResidualBlock, Shapes) {
  Rng rng(1);
  ResidualBlock<float> same(rng, 4, 4);
  ResidualBlock<float> down(rng, 4, 6, 2);
  Var<float> x(random_tensor(rng, {2, 4, 8, 8}));
  EXPECT_EQ(same.forward(x, Phase::kTrain).shape(), (Shape{2, 4, 8, 8}));
  EXPECT_EQ(down.forward(x, Phase::kTrain).shape(), (Shape{2, 6, 4, 4}));
  EXPECT_FALSE(same.has_projection());
  EXPECT_TRUE(down.has_projection());
}

TEST(ResidualBlock, ZeroInputZeroOutput) {
  Rng rng(2);
  ResidualBlock<float> block(rng, 3, 5, 2);
  Var<float> x(Tensor<float>({1, 3, 8, 8}));
  for (Phase phase : {Phase::kTrain, Phase::kEval}) {
    auto y = block.forward(x, phase);
    for (float v : y.value().span()) EXPECT_EQ(v, 0.0f);
  }
}

TEST(ResidualBlock, ZeroBranchIsIdentity) {
  Rng rng(3);
  ResidualBlock<double> block(rng, 4, 4);
  block.second().norm().gamma().mutable_value().fill(0.0);
  Var<double> x(random_tensor<double>(rng, {2, 4, 6, 6}));
  auto y = block.forward(x, Phase::kTrain);
  EXPECT_EQ(y.value(), x.value());
}

TEST(ResidualBlock, Gradcheck) {
  Rng rng(4);
  ResidualBlock<double> block(rng, 2, 2);
  Var<double> x(random_tensor<double>(rng, {1, 2, 4, 4}), true);
  auto w = random_tensor<double>(rng, {1, 2, 4, 4});
  std::vector<std::pair<std::string, Var<double>*>> groups{{"input", &x}};
  for (auto& p : named_parameters<double>(block)) groups.push_back(p);
  auto result = compare_gradients<double>(
      [&] { return ops::dot_const(block.forward(x, Phase::kTrain), w); }, groups, 1e-5);
  for (const auto& g : result) EXPECT_LT(g.max_rel_error, 1e-4) << g.name;
}

HourglassConfig small_config() {
  HourglassConfig cfg;
  cfg.depth = 3;
  cfg.channels = {4, 6, 8, 10};
  cfg.taps = cfg.interior_blocks(0, 0);
  return cfg;
}

TEST(Hourglass, BlockLayout) {
  HourglassConfig cfg = small_config();
  EXPECT_EQ(cfg.block_count(), 9);
  const auto blocks = cfg.blocks();
  ASSERT_EQ(blocks.size(), 9u);
  const int levels[] = {0, 1, 2, 3, 3, 2, 1, 0, 0};
  for (int i = 0; i < 9; ++i) {
    EXPECT_EQ(blocks[i].index, i);
    EXPECT_EQ(blocks[i].level, levels[i]);
  }
  EXPECT_EQ(blocks[4].role, BlockRole::kBottleneck);
  EXPECT_EQ(blocks[5].role, BlockRole::kDecoder);
  EXPECT_EQ(blocks[8].role, BlockRole::kOutput);
  EXPECT_EQ(cfg.interior_blocks(1, 2), (std::set<int>{1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(cfg.interior_blocks(2, 3), (std::set<int>{2, 3, 4, 5}));
}

TEST(Hourglass, ValidateRejectsBadConfig) {
  HourglassConfig cfg = small_config();
  cfg.channels.pop_back();
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.taps = {9};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.depth = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Hourglass, OutputAndTapShapes) {
  Rng rng(5);
  HourglassConfig cfg = small_config();
  Hourglass<float> hg(rng, cfg);
  Var<float> x(random_tensor(rng, {2, 4, 16, 16}));
  auto out = hg.forward(x, Phase::kTrain);
  EXPECT_EQ(out.output.shape(), (Shape{2, 4, 16, 16}));
  ASSERT_EQ(out.taps.size(), 9u);
  for (const auto& b : cfg.blocks()) {
    const int s = 16 >> b.level;
    EXPECT_EQ(out.taps.at(b.index).shape(), (Shape{2, b.out_channels, s, s})) << b.index;
  }
  EXPECT_THROW(hg.forward(Var<float>(Tensor<float>({1, 4, 12, 12})), Phase::kTrain),
               ShapeError);
}

TEST(Hourglass, Deterministic) {
  auto run = [] {
    Rng rng(6);
    Hourglass<float> hg(rng, small_config());
    Var<float> x(random_tensor(rng, {1, 4, 16, 16}));
    return hg.forward(x, Phase::kTrain).output.value();
  };
  EXPECT_EQ(run(), run());
}

TEST(Hourglass, IdentityInjectionsMatchPlainRun) {
  Rng rng(7);
  HourglassConfig cfg = small_config();
  Hourglass<float> a(rng, cfg);
  Hourglass<float> b = a;
  Var<float> x(random_tensor(rng, {1, 4, 16, 16}));
  std::map<int, Injection<float>> inj;
  for (int i : cfg.interior_blocks(2, 3)) inj[i] = identity_injection<float>;
  auto plain = a.forward(x, Phase::kTrain).output.value();
  auto injected = b.forward(x, Phase::kTrain, inj).output.value();
  EXPECT_EQ(plain, injected);
}

TEST(Hourglass, BadInjectionNamesBlock) {
  Rng rng(8);
  Hourglass<float> hg(rng, small_config());
  Var<float> x(random_tensor(rng, {1, 4, 16, 16}));
  std::map<int, Injection<float>> inj;
  inj[3] = [](const Var<float>& out, const Var<float>*) { return ops::avg_pool2x2(out); };
  try {
    hg.forward(x, Phase::kTrain, inj);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("block 3"), std::string::npos) << e.what();
  }
}

TEST(Hourglass, DecoderInjectionReceivesSkip) {
  Rng rng(9);
  HourglassConfig cfg = small_config();
  Hourglass<float> hg(rng, cfg);
  Var<float> x(random_tensor(rng, {1, 4, 16, 16}));
  std::map<int, const Var<float>*> seen;
  std::map<int, Injection<float>> inj;
  for (int i = 0; i < cfg.block_count(); ++i) {
    inj[i] = [&seen, i](const Var<float>& out, const Var<float>* skip) {
      seen[i] = skip;
      return identity_injection<float>(out, skip);
    };
  }
  hg.forward(x, Phase::kTrain, inj);
  for (const auto& b : cfg.blocks()) {
    EXPECT_EQ(seen.at(b.index) != nullptr, b.role == BlockRole::kDecoder) << b.index;
  }
}

}  // namespace
}  // namespace madanet
