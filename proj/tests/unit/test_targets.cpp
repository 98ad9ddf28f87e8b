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

#include "madanet/synthdata.hpp"
#include "madanet/targets.hpp"

namespace madanet {
namespace {

// Worst IoU over the three corner-perturbation cases for a shift of r.
double worst_corner_iou(double w, double h, double r) {
  const double one_in = (w - r) * (h - r) / (2 * w * h - (w - r) * (h - r));
  const double both_in = (w - 2 * r) * (h - 2 * r) / (w * h);
  const double both_out = w * h / ((w + 2 * r) * (h + 2 * r));
  double worst = std::min({one_in, both_out});
  if (w > 2 * r && h > 2 * r) worst = std::min(worst, both_in);
  else worst = std::min(worst, 0.0);
  return worst;
}

int brute_force_radius(double w, double h, double m) {
  int r = 0;
  while (worst_corner_iou(w, h, r + 1) >= m) ++r;
  return std::max(r, 1);
}

TEST(GaussianRadius, ClampsToOne) { EXPECT_EQ(gaussian_radius(1, 1, 0.7), 1); }

TEST(GaussianRadius, MatchesBruteForceOracle) {
  for (auto [w, h] : {std::pair{24.0, 24.0}, {40.0, 10.0}, {7.0, 31.0}, {100.0, 60.0}}) {
    const int r = gaussian_radius(w, h, 0.7);
    EXPECT_EQ(r, brute_force_radius(w, h, 0.7)) << w << "x" << h;
    if (r > 1) {
      EXPECT_GE(worst_corner_iou(w, h, r), 0.7);
    }
    EXPECT_LT(worst_corner_iou(w, h, r + 1), 0.7);
  }
}

TEST(GaussianRadius, Errors) {
  EXPECT_THROW(gaussian_radius(0, 3), InvalidAnnotation);
  EXPECT_THROW(gaussian_radius(3, -1), InvalidAnnotation);
  EXPECT_THROW(gaussian_radius(3, 3, 1.0), ConfigError);
}

TEST(RenderHeatmap, EmptyIsZero) {
  const auto heat = render_heatmap({}, 1, 6, 7);
  EXPECT_EQ(heat.shape(), (Shape{1, 1, 6, 7}));
  for (float v : heat.span()) EXPECT_EQ(v, 0.0f);
}

TEST(RenderHeatmap, PeakPreserved) {
  const Keypoint kp{5, 5, 0, 3, 0};
  const auto heat = render_heatmap(std::span(&kp, 1), 1, 12, 12);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) {
      if (x == 5 && y == 5) EXPECT_EQ(heat(0, 0, y, x), 1.0f);
      else EXPECT_LT(heat(0, 0, y, x), 1.0f);
    }
}

TEST(RenderHeatmap, OverlapIsPerPixelMax) {
  const std::vector<Keypoint> kps{{4, 5, 0, 2, 0}, {6, 5, 0, 2, 1}};
  const auto heat = render_heatmap(kps, 1, 10, 12);
  const double sigma = (2 * 2 + 1) / 6.0;
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 12; ++x) {
      double expected = 0;
      for (const auto& k : kps) {
        const int dx = x - k.x, dy = y - k.y;
        if (std::abs(dx) > 2 || std::abs(dy) > 2) continue;
        expected = std::max(expected, std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)));
      }
      EXPECT_NEAR(heat(0, 0, y, x), expected, 1e-7) << x << "," << y;
    }
}

TEST(RenderHeatmap, OutOfGridRejected) {
  const Keypoint kp{12, 0, 0, 1, 0};
  EXPECT_THROW(render_heatmap(std::span(&kp, 1), 1, 12, 12), InvalidAnnotation);
}

BoxAnnotation centered(double cx, double cy, double w, double h) {
  return {cx - w / 2, cy - h / 2, w, h, 0};
}

TEST(MakeTargets, ExactDivision) {
  const BoxAnnotation b = centered(12, 12, 8, 6);
  const auto t = make_targets(std::span(&b, 1), 4, 32, 32);
  ASSERT_EQ(t.num_keypoints, 1);
  EXPECT_EQ(t.keypoints[0].x, 3);
  EXPECT_EQ(t.keypoints[0].y, 3);
  EXPECT_EQ(t.offset_map(0, 0, 3, 3), 0.0f);
  EXPECT_EQ(t.offset_map(0, 1, 3, 3), 0.0f);
  EXPECT_EQ(t.size_map(0, 0, 3, 3), 2.0f);
  EXPECT_EQ(t.size_map(0, 1, 3, 3), 1.5f);
  EXPECT_EQ(t.heatmap(0, 0, 3, 3), 1.0f);
}

TEST(MakeTargets, FractionalOffset) {
  const BoxAnnotation b = centered(13, 15, 6, 4);
  const auto t = make_targets(std::span(&b, 1), 4, 32, 32);
  EXPECT_EQ(t.keypoints[0].x, 3);
  EXPECT_EQ(t.keypoints[0].y, 3);
  EXPECT_FLOAT_EQ(t.offset_map(0, 0, 3, 3), 0.25f);
  EXPECT_FLOAT_EQ(t.offset_map(0, 1, 3, 3), 0.75f);
}

TEST(MakeTargets, EmptyAnnotations) {
  const auto t = make_targets(std::span<const BoxAnnotation>(), 4, 30, 30);
  EXPECT_EQ(t.num_keypoints, 0);
  EXPECT_EQ(t.heatmap.shape(), (Shape{1, 1, 8, 8}));
  for (const auto* m : {&t.heatmap, &t.size_map, &t.offset_map})
    for (float v : m->span()) EXPECT_EQ(v, 0.0f);
}

TEST(MakeTargets, CollisionKeepsBothAndLastWins) {
  const std::vector<BoxAnnotation> boxes{centered(13, 13, 6, 6), centered(14, 14, 10, 2)};
  const auto t = make_targets(boxes, 4, 32, 32);
  EXPECT_EQ(t.num_keypoints, 2);
  ASSERT_EQ(t.collisions.size(), 1u);
  EXPECT_EQ(t.collisions[0].first_box, 0);
  EXPECT_EQ(t.collisions[0].second_box, 1);
  EXPECT_FLOAT_EQ(t.size_map(0, 0, 3, 3), 2.5f);
  EXPECT_FLOAT_EQ(t.offset_map(0, 0, 3, 3), 0.5f);
}

TEST(MakeTargets, InvalidBoxes) {
  const BoxAnnotation zero{1, 1, 0, 3, 0};
  EXPECT_THROW(make_targets(std::span(&zero, 1), 4, 32, 32), InvalidAnnotation);
  const BoxAnnotation outside{30, 1, 5, 3, 0};
  EXPECT_THROW(make_targets(std::span(&outside, 1), 4, 32, 32), InvalidAnnotation);
  const BoxAnnotation ok{1, 1, 3, 3, 0};
  EXPECT_THROW(make_targets(std::span(&ok, 1), 0, 32, 32), ConfigError);
}

TEST(MakeTargets, InvariantsOnGeneratedScenes) {
  SceneConfig cfg;
  cfg.count_range = {0, 40};
  for (int i = 0; i < 10; ++i) {
    const auto scene = generate_scene(cfg, Rng::derive(77, i));
    for (int stride : {4, 8}) {
      const auto t = make_targets(scene, stride);
      EXPECT_EQ(t.num_keypoints, scene.count());
      float mx = 0;
      for (float v : t.heatmap.span()) {
        ASSERT_GE(v, 0.0f);
        ASSERT_LE(v, 1.0f);
        mx = std::max(mx, v);
      }
      EXPECT_EQ(mx == 1.0f, t.num_keypoints >= 1);
      for (const auto& k : t.keypoints) {
        EXPECT_EQ(t.heatmap(0, 0, k.y, k.x), 1.0f);
        for (int a = 0; a < 2; ++a) {
          EXPECT_GE(t.offset_map(0, a, k.y, k.x), 0.0f);
          EXPECT_LT(t.offset_map(0, a, k.y, k.x), 1.0f);
        }
      }
      const auto again = make_targets(scene, stride);
      EXPECT_EQ(again.heatmap, t.heatmap);
      EXPECT_EQ(again.size_map, t.size_map);
    }
    // Distinct LR cells can only merge, never split.
    const auto hr = make_targets(scene, 4);
    const auto lr = make_targets(scene, 8);
    EXPECT_EQ(lr.num_keypoints, hr.num_keypoints);
    EXPECT_GE(lr.collisions.size(), hr.collisions.size());
  }
}

}  // namespace
}  // namespace madanet
