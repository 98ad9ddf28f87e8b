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

#pragma once

#include <span>
#include <vector>

#include "madanet/scene.hpp"

namespace madanet {

struct Keypoint {
  int x = 0;  // cell column
  int y = 0;  // cell row
  int class_id = 0;
  int radius = 1;
  int box_index = 0;
};

/// Two boxes whose centers quantize to the same cell.
struct CellCollision {
  int first_box = 0;
  int second_box = 0;
  int x = 0;
  int y = 0;
};

/// Ground truth at one stride. Maps are (1, C, h, w) for the heatmap and
/// (1, 2, h, w) for size (w, h in cells) and offset (x, y in [0, 1)).
struct TargetMaps {
  Tensor<float> heatmap;
  Tensor<float> size_map;
  Tensor<float> offset_map;
  std::vector<Keypoint> keypoints;
  std::vector<CellCollision> collisions;
  int stride = 1;
  int num_keypoints = 0;
};

/// Largest radius (in cells, floored, at least 1) such that shifting the box
/// corners by that radius in the worst direction keeps IoU >= min_overlap.
int gaussian_radius(double box_w, double box_h, double min_overlap = 0.7);

/// Peak-preserving Gaussian splats (sigma = (2r + 1) / 6) into a
/// (1, C, H, W) map; overlaps combine by maximum and every keypoint cell is
/// exactly 1.
Tensor<float> render_heatmap(std::span<const Keypoint> keypoints, int classes,
                             int height, int width);

/// Renders targets for `boxes` on an image_h x image_w image at `stride`.
/// Maps are ceil(image / stride) in each axis. When two centers share a cell
/// both keypoints are kept, the later box wins the size/offset entries and
/// the pair is recorded in `collisions`.
TargetMaps make_targets(std::span<const BoxAnnotation> boxes, int stride,
                        int image_h, int image_w, int classes = 1);

inline TargetMaps make_targets(const AnnotatedScene& scene, int stride,
                               int classes = 1) {
  return make_targets(scene.boxes, stride, scene.height(), scene.width(), classes);
}

}  // namespace madanet
