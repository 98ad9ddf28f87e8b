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

#include <cmath>
#include <vector>

#include "madanet/ops.hpp"
#include "test_util.hpp"

namespace madanet {
namespace {

using testing::max_abs_diff;
using testing::naive_conv;
using testing::random_tensor;

struct ConvCase {
  Shape input;
  int out_channels;
  int kernel;
  int stride;
  int pad;
};

class Conv2dOracle : public ::testing::TestWithParam<ConvCase> {};

TEST_P(Conv2dOracle, MatchesDirectLoop) {
  const ConvCase p = GetParam();
  Rng rng(3);
  auto x = random_tensor<double>(rng, p.input);
  auto w = random_tensor<double>(rng, {p.out_channels, p.input.c, p.kernel, p.kernel});
  auto b = random_tensor<double>(rng, {1, p.out_channels, 1, 1});
  auto out = ops::conv2d(Var<double>(x), Var<double>(w), Var<double>(b), {p.stride, p.pad});
  auto ref = naive_conv(x, w, &b, p.stride, p.pad);
  ASSERT_EQ(out.shape(), ref.shape());
  EXPECT_LT(max_abs_diff(out.value(), ref), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Geometries, Conv2dOracle,
                         ::testing::Values(ConvCase{{2, 3, 7, 6}, 4, 3, 1, 1},
                                           ConvCase{{1, 2, 8, 8}, 3, 3, 2, 1},
                                           ConvCase{{1, 5, 4, 4}, 2, 1, 1, 0},
                                           ConvCase{{1, 3, 16, 16}, 4, 4, 4, 0},
                                           ConvCase{{1, 1, 5, 5}, 1, 5, 1, 2}));

TEST(Conv2d, ShapeErrors) {
  Var<float> x(Tensor<float>({1, 3, 4, 4}));
  Var<float> w(Tensor<float>({2, 2, 3, 3}));
  EXPECT_THROW(ops::conv2d(x, w, Var<float>(), {1, 1}), ShapeError);
  Var<float> big(Tensor<float>({2, 3, 9, 9}));
  EXPECT_THROW(ops::conv2d(x, big, Var<float>(), {1, 0}), ShapeError);
}

TEST(BatchNorm, TrainingNormalizesAndUpdatesRunningStats) {
  Rng rng(5);
  auto x = random_tensor<double>(rng, {3, 2, 4, 4}, 2.0, 4.0);
  Var<double> gamma(Tensor<double>({1, 2, 1, 1}, std::vector<double>{2.0, 0.5}));
  Var<double> beta(Tensor<double>({1, 2, 1, 1}, std::vector<double>{1.0, -1.0}));
  ops::BatchNormState<double> st{Tensor<double>({1, 2, 1, 1}, 0.0),
                                 Tensor<double>({1, 2, 1, 1}, 1.0)};
  auto y = ops::batch_norm(Var<double>(x), gamma, beta, st, true, 0.1, 0.0);
  for (int c = 0; c < 2; ++c) {
    double mean = 0, sq = 0, xm = 0, xs = 0;
    const int count = 3 * 16;
    for (int n = 0; n < 3; ++n)
      for (int i = 0; i < 16; ++i) {
        mean += y.value().plane(n, c)[i];
        xm += x.plane(n, c)[i];
      }
    mean /= count;
    xm /= count;
    for (int n = 0; n < 3; ++n)
      for (int i = 0; i < 16; ++i) {
        sq += std::pow(y.value().plane(n, c)[i] - mean, 2);
        xs += std::pow(x.plane(n, c)[i] - xm, 2);
      }
    EXPECT_NEAR(mean, beta.value()[c], 1e-12);
    EXPECT_NEAR(std::sqrt(sq / count), gamma.value()[c], 1e-9);
    EXPECT_NEAR(st.running_mean[c], 0.1 * xm, 1e-12);
    EXPECT_NEAR(st.running_var[c], 0.9 + 0.1 * xs / (count - 1), 1e-12);
  }
}

TEST(BatchNorm, EvalUsesRunningStats) {
  Var<double> x(Tensor<double>({1, 1, 1, 2}, std::vector<double>{3.0, 5.0}));
  Var<double> g(Tensor<double>({1, 1, 1, 1}, 1.0));
  Var<double> b(Tensor<double>({1, 1, 1, 1}, 0.0));
  ops::BatchNormState<double> st{Tensor<double>({1, 1, 1, 1}, 1.0),
                                 Tensor<double>({1, 1, 1, 1}, 4.0)};
  auto y = ops::batch_norm(x, g, b, st, false, 0.1, 0.0);
  EXPECT_DOUBLE_EQ(y.value()[0], 1.0);
  EXPECT_DOUBLE_EQ(y.value()[1], 2.0);
  EXPECT_DOUBLE_EQ(st.running_mean[0], 1.0);
}

TEST(Resample, NearestAndAvgPool) {
  Tensor<float> t({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  auto up = ops::upsample_nearest2x(Var<float>(t));
  ASSERT_EQ(up.shape(), (Shape{1, 1, 4, 4}));
  EXPECT_EQ(up.value()(0, 0, 1, 1), 1.0f);
  EXPECT_EQ(up.value()(0, 0, 3, 2), 4.0f);
  auto down = ops::avg_pool2x2(up);
  EXPECT_EQ(down.value(), t);
  EXPECT_THROW(ops::avg_pool2x2(Var<float>(Tensor<float>({1, 1, 3, 4}))), ShapeError);
}

TEST(Resample, BicubicPreservesConstants) {
  Var<double> x(Tensor<double>({1, 2, 5, 7}, 3.25));
  auto y = ops::upsample_bicubic2x(x);
  ASSERT_EQ(y.shape(), (Shape{1, 2, 10, 14}));
  for (double v : y.value().span()) EXPECT_NEAR(v, 3.25, 1e-12);
}

TEST(Resample, BicubicReproducesRampInInterior) {
  const int n = 8;
  Tensor<double> t({1, 1, n, n});
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) t(0, 0, y, x) = 0.5 * x - 2.0 * y;
  auto up = ops::upsample_bicubic2x(Var<double>(t));
  for (int oy = 4; oy < 2 * n - 4; ++oy)
    for (int ox = 4; ox < 2 * n - 4; ++ox) {
      const double sy = (oy + 0.5) / 2 - 0.5, sx = (ox + 0.5) / 2 - 0.5;
      EXPECT_NEAR(up.value()(0, 0, oy, ox), 0.5 * sx - 2.0 * sy, 1e-5);
    }
}

TEST(Resample, BilinearResizeRamp) {
  Tensor<double> t({1, 1, 4, 4});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) t(0, 0, y, x) = x + 10.0 * y;
  auto r = ops::resize_bilinear(Var<double>(t), 8, 8);
  for (int oy = 1; oy < 7; ++oy)
    for (int ox = 1; ox < 7; ++ox) {
      const double sy = (oy + 0.5) / 2 - 0.5, sx = (ox + 0.5) / 2 - 0.5;
      EXPECT_NEAR(r.value()(0, 0, oy, ox), sx + 10.0 * sy, 1e-12);
    }
  auto same = ops::resize_bilinear(Var<double>(t), 4, 4);
  EXPECT_LT(max_abs_diff(same.value(), t), 1e-12);
}

Var<double> coords(std::vector<double> xs, std::vector<double> ys) {
  const int p = static_cast<int>(xs.size());
  std::vector<double> data(xs);
  data.insert(data.end(), ys.begin(), ys.end());
  return Var<double>(Tensor<double>({1, 2, p, 1}, std::move(data)));
}

TEST(BilinearSample, Examples) {
  Tensor<double> ramp({1, 1, 1, 5}, std::vector<double>{0, 1, 2, 3, 4});
  auto r = ops::bilinear_sample(Var<double>(ramp), coords({2.0, 2.5, 4.0}, {0, 0, 0}));
  EXPECT_DOUBLE_EQ(r.value()[0], 2.0);
  EXPECT_DOUBLE_EQ(r.value()[1], 2.5);
  EXPECT_DOUBLE_EQ(r.value()[2], 4.0);

  Tensor<double> grid({1, 1, 2, 2}, std::vector<double>{0, 1, 2, 3});
  auto g = ops::bilinear_sample(Var<double>(grid), coords({0.5}, {0.5}));
  EXPECT_DOUBLE_EQ(g.value()[0], 1.5);

  // Outside corners read as zero.
  auto out = ops::bilinear_sample(Var<double>(grid), coords({-1.0, 1.5, 5.0}, {0.0, 0.0, 0.0}));
  EXPECT_DOUBLE_EQ(out.value()[0], 0.0);
  EXPECT_DOUBLE_EQ(out.value()[1], 0.5);
  EXPECT_DOUBLE_EQ(out.value()[2], 0.0);
}

TEST(BilinearSample, RejectsNonFinite) {
  Tensor<double> grid({1, 1, 2, 2}, 1.0);
  EXPECT_THROW(ops::bilinear_sample(Var<double>(grid), coords({NAN}, {0.0})), NumericError);
  EXPECT_THROW(ops::bilinear_sample(Var<double>(grid), coords({INFINITY}, {0.0})),
               NumericError);
}

TEST(DeformConv, ZeroOffsetsMatchConv) {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = random_tensor<double>(rng, {2, 3, 6, 7});
    auto w = random_tensor<double>(rng, {4, 3, 3, 3});
    auto b = random_tensor<double>(rng, {1, 4, 1, 1});
    Var<double> off(Tensor<double>({2, 18, 6, 7}));
    auto d = ops::deform_conv2d(Var<double>(x), off, Var<double>(w), Var<double>(b), {1, 1});
    auto ref = naive_conv(x, w, &b, 1, 1);
    EXPECT_LT(max_abs_diff(d.value(), ref), 1e-12);
  }
}

TEST(DeformConv, UnitColumnOffsetShiftsInput) {
  Rng rng(12);
  const int h = 6, wd = 8;
  auto x = random_tensor<double>(rng, {1, 2, h, wd});
  auto w = random_tensor<double>(rng, {3, 2, 3, 3});
  Tensor<double> off({1, 18, h, wd});
  for (int t = 0; t < 9; ++t)
    for (int i = 0; i < h * wd; ++i) off.plane(0, 2 * t + 1)[i] = 1.0;
  auto d = ops::deform_conv2d(Var<double>(x), Var<double>(off), Var<double>(w), Var<double>(),
                              {1, 1});
  Tensor<double> shifted({1, 2, h, wd});
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < h; ++y)
      for (int c0 = 0; c0 + 1 < wd; ++c0) shifted(0, c, y, c0) = x(0, c, y, c0 + 1);
  auto ref = naive_conv<double>(shifted, w, nullptr, 1, 1);
  for (int o = 0; o < 3; ++o)
    for (int y = 0; y < h; ++y)
      for (int c0 = 1; c0 < wd; ++c0)
        EXPECT_NEAR(d.value()(0, o, y, c0), ref(0, o, y, c0), 1e-12);
}

TEST(DeformConv, OffsetShapeChecked) {
  Var<float> x(Tensor<float>({1, 2, 4, 4}));
  Var<float> w(Tensor<float>({2, 2, 3, 3}));
  EXPECT_THROW(ops::deform_conv2d(x, Var<float>(Tensor<float>({1, 9, 4, 4})), w,
                                  Var<float>(), {1, 1}),
               ShapeError);
}

// Softmax over keys computed with plain loops.
Tensor<double> naive_attention(const Tensor<double>& q, const Tensor<double>& k,
                               const Tensor<double>& v) {
  const int d = q.shape().c, t = q.shape().h * q.shape().w, c = v.shape().c;
  Tensor<double> out(v.shape());
  for (int i = 0; i < t; ++i) {
    std::vector<double> logit(t);
    double mx = -1e300, z = 0;
    for (int j = 0; j < t; ++j) {
      double s = 0;
      for (int e = 0; e < d; ++e) s += q.plane(0, e)[i] * k.plane(0, e)[j];
      logit[j] = s / std::sqrt(double(d));
      mx = std::max(mx, logit[j]);
    }
    for (auto& l : logit) z += (l = std::exp(l - mx));
    for (int ch = 0; ch < c; ++ch) {
      double acc = 0;
      for (int j = 0; j < t; ++j) acc += logit[j] / z * v.plane(0, ch)[j];
      out.plane(0, ch)[i] = acc;
    }
  }
  return out;
}

TEST(Attention, MatchesNaiveSoftmax) {
  Rng rng(21);
  auto q = random_tensor<double>(rng, {1, 4, 3, 5}, -2, 2);
  auto k = random_tensor<double>(rng, {1, 4, 3, 5}, -2, 2);
  auto v = random_tensor<double>(rng, {1, 6, 3, 5});
  auto out = ops::scaled_dot_attention(Var<double>(q), Var<double>(k), Var<double>(v));
  EXPECT_LT(max_abs_diff(out.value(), naive_attention(q, k, v)), 1e-12);
}

TEST(Attention, RowsSumToOne) {
  Rng rng(22);
  auto q = random_tensor<double>(rng, {2, 3, 4, 4}, -5, 5);
  auto k = random_tensor<double>(rng, {2, 3, 4, 4}, -5, 5);
  auto p = ops::attention_weights(q, k);
  ASSERT_EQ(p.shape(), (Shape{2, 1, 16, 16}));
  for (int n = 0; n < 2; ++n)
    for (int r = 0; r < 16; ++r) {
      double s = 0;
      for (int c = 0; c < 16; ++c) {
        const double w = p(n, 0, r, c);
        ASSERT_GE(w, 0.0);
        s += w;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Attention, IdenticalKeysGiveMeanOfValues) {
  Rng rng(23);
  auto q = random_tensor<double>(rng, {1, 2, 2, 3});
  Tensor<double> k({1, 2, 2, 3}, 0.7);
  auto v = random_tensor<double>(rng, {1, 3, 2, 3});
  auto out = ops::scaled_dot_attention(Var<double>(q), Var<double>(k), Var<double>(v));
  for (int c = 0; c < 3; ++c) {
    double mean = 0;
    for (int j = 0; j < 6; ++j) mean += v.plane(0, c)[j];
    mean /= 6;
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(out.value().plane(0, c)[i], mean, 1e-12);
  }
}

TEST(Attention, SingleTokenReturnsValue) {
  Tensor<double> q({1, 2, 1, 1}, std::vector<double>{3, -1});
  Tensor<double> v({1, 2, 1, 1}, std::vector<double>{0.25, 9});
  auto out = ops::scaled_dot_attention(Var<double>(q), Var<double>(q), Var<double>(v));
  EXPECT_EQ(out.value(), v);
}

}  // namespace
}  // namespace madanet
