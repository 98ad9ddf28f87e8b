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

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "madanet/gradcheck.hpp"
#include "madanet/ops.hpp"
#include "test_util.hpp"

namespace madanet {
namespace {

class EveryOp : public ::testing::TestWithParam<std::string> {};

TEST_P(EveryOp, DoubleWithinTolerance) {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const GradcheckReport r = gradcheck(GetParam(), seed);
    EXPECT_FALSE(r.groups.empty());
    for (const auto& g : r.groups) EXPECT_GT(g.checked, 0u) << g.name;
    EXPECT_LT(r.max_rel_error(), 1e-4) << r.to_json();
  }
}

TEST_P(EveryOp, FloatCatchesGrossErrors) {
  const GradcheckReport r = gradcheck(GetParam(), 0, Precision::kFloat);
  EXPECT_EQ(r.precision, Precision::kFloat);
  EXPECT_LT(r.max_rel_error(), GetParam() == "network" ? 0.25 : 5e-2) << r.to_json();
}

INSTANTIATE_TEST_SUITE_P(Gradcheck, EveryOp, ::testing::ValuesIn(gradcheck_ops()),
                         [](const auto& info) { return info.param; });

TEST(Gradcheck, LinearIsExact) {
  EXPECT_LT(gradcheck("linear").max_rel_error(), 1e-8);
}

TEST(Gradcheck, CoversEveryComponent) {
  const auto& ops = gradcheck_ops();
  for (const char* name : {"conv_block", "residual_block", "bilinear_sample", "deformable_conv",
                           "bicubic", "attention_encoder", "attention_decoder", "focal_loss",
                           "size_loss", "offset_loss", "total_loss", "network"}) {
    EXPECT_NE(std::find(ops.begin(), ops.end(), name), ops.end()) << name;
  }
}

TEST(Gradcheck, UnknownOp) {
  EXPECT_THROW(gradcheck("softmax_of_nothing"), ConfigError);
}

TEST(Gradcheck, Deterministic) {
  EXPECT_EQ(gradcheck("network", 4).to_json(), gradcheck("network", 4).to_json());
}

TEST(Gradcheck, ReportJson) {
  const auto j = nlohmann::json::parse(gradcheck("bicubic").to_json());
  EXPECT_EQ(j["op"], "bicubic");
  EXPECT_EQ(j["precision"], "double");
  EXPECT_DOUBLE_EQ(j["step"].get<double>(), 1e-5);
  ASSERT_TRUE(j["groups"].is_array());
  for (const auto& g : j["groups"]) {
    EXPECT_TRUE(g.contains("name"));
    EXPECT_TRUE(g.contains("checked"));
    EXPECT_LE(g["max_rel_error"].get<double>(), j["max_rel_error"].get<double>());
  }
}

// The comparison itself must flag a wrong gradient.
TEST(CompareGradients, DetectsWrongBackward) {
  Rng rng(8);
  Var<double> x(testing::random_tensor<double>(rng, {1, 1, 2, 3}, -1, 1), true);
  auto wrong = [&] {
    Tensor<double> y(Shape{1, 1, 1, 1});
    for (double v : x.value().span()) y[0] += v * v;
    // Reports d/dx = x instead of 2x.
    return make_result(std::move(y), {x}, [xn = x.ptr()](const Tensor<double>& g) {
      Tensor<double>& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] * xn->value[i];
    });
  };
  const auto groups = compare_gradients<double>(wrong, {{"x", &x}}, 1e-5);
  ASSERT_EQ(groups.size(), 1u);
  EXPECT_GT(groups[0].max_rel_error, 0.3);
}

TEST(CompareGradients, ZeroGradientGroupUsesFloor) {
  Rng rng(9);
  Var<double> x(testing::random_tensor<double>(rng, {1, 1, 2, 2}, -1, 1), true);
  Var<double> unused(testing::random_tensor<double>(rng, {1, 1, 2, 2}, -1, 1), true);
  const Tensor<double> c = testing::random_tensor<double>(rng, {1, 1, 2, 2}, -1, 1);
  const auto groups = compare_gradients<double>(
      [&] { return ops::dot_const(x, c); }, {{"x", &x}, {"unused", &unused}}, 1e-5);
  EXPECT_LT(groups[0].max_rel_error, 1e-8);
  EXPECT_EQ(groups[1].max_rel_error, 0.0);
}

}  // namespace
}  // namespace madanet
