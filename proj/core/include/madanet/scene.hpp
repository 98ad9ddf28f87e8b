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

#include <cstdint>
#include <string>
#include <vector>

#include "madanet/tensor.hpp"

namespace madanet {

/// Axis-aligned box in pixels (COCO x/y/width/height convention).
struct BoxAnnotation {
  double x_min = 0;
  double y_min = 0;
  double width = 0;
  double height = 0;
  int class_id = 0;

  double center_x() const { return x_min + width / 2; }
  double center_y() const { return y_min + height / 2; }
  bool operator==(const BoxAnnotation&) const = default;
};

/// Image (1 x 3 x H x W, values in [0, 1]) with its ground-truth boxes.
struct AnnotatedScene {
  Tensor<float> image;
  std::vector<BoxAnnotation> boxes;
  std::string scene_id;
  std::uint64_t seed = 0;

  int width() const { return image.shape().w; }
  int height() const { return image.shape().h; }
  int count() const { return static_cast<int>(boxes.size()); }
};

/// Throws InvalidAnnotation unless the box has positive extent and lies
/// inside a width x height image.
void validate_box(const BoxAnnotation& box, int image_width, int image_height,
                  const std::string& context);

double box_iou(const BoxAnnotation& a, const BoxAnnotation& b);

}  // namespace madanet
