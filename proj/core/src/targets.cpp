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

#include "madanet/targets.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>

namespace madanet {

void validate_box(const BoxAnnotation& box, int image_width, int image_height,
                  const std::string& context) {
  if (!(box.width > 0) || !(box.height > 0)) {
    throw InvalidAnnotation(context + ": box has non-positive size " +
                            std::to_string(box.width) + "x" +
                            std::to_string(box.height));
  }
  if (box.x_min < 0 || box.y_min < 0 || box.x_min + box.width > image_width ||
      box.y_min + box.height > image_height) {
    throw InvalidAnnotation(context + ": box outside " +
                            std::to_string(image_width) + "x" +
                            std::to_string(image_height) + " image");
  }
  if (box.class_id < 0) throw InvalidAnnotation(context + ": negative class id");
}

double box_iou(const BoxAnnotation& a, const BoxAnnotation& b) {
  const double ix = std::max(0.0, std::min(a.x_min + a.width, b.x_min + b.width) -
                                      std::max(a.x_min, b.x_min));
  const double iy = std::max(0.0, std::min(a.y_min + a.height, b.y_min + b.height) -
                                      std::max(a.y_min, b.y_min));
  const double inter = ix * iy;
  const double uni = a.width * a.height + b.width * b.height - inter;
  return uni > 0 ? inter / uni : 0.0;
}

int gaussian_radius(double box_w, double box_h, double min_overlap) {
  if (!(box_w > 0) || !(box_h > 0)) {
    throw InvalidAnnotation("gaussian_radius: non-positive box " +
                            std::to_string(box_w) + "x" + std::to_string(box_h));
  }
  if (!(min_overlap > 0) || !(min_overlap < 1)) {
    throw ConfigError("gaussian_radius: min_overlap must be in (0, 1)");
  }
  const double w = box_w, h = box_h, m = min_overlap;
  // One corner in, one out: (1+m)(w-r)(h-r) >= 2m wh, smaller root.
  const double b1 = w + h;
  const double c1 = w * h * (1 - m) / (1 + m);
  const double r1 = (b1 - std::sqrt(b1 * b1 - 4 * c1)) / 2;
  // Both corners in: (w-2r)(h-2r) >= m wh, smaller root.
  const double b2 = 2 * (w + h);
  const double c2 = (1 - m) * w * h;
  const double r2 = (b2 - std::sqrt(b2 * b2 - 16 * c2)) / 8;
  // Both corners out: wh >= m (w+2r)(h+2r), larger root.
  const double a3 = 4 * m;
  const double b3 = 2 * m * (w + h);
  const double c3 = (m - 1) * w * h;
  const double r3 = (-b3 + std::sqrt(b3 * b3 - 4 * a3 * c3)) / (2 * a3);
  const double r = std::min({r1, r2, r3});
  return std::max(1, static_cast<int>(std::floor(r)));
}

Tensor<float> render_heatmap(std::span<const Keypoint> keypoints, int classes,
                             int height, int width) {
  Tensor<float> heat(Shape{1, classes, height, width}, 0.0f);
  for (const auto& k : keypoints) {
    if (k.x < 0 || k.x >= width || k.y < 0 || k.y >= height || k.class_id < 0 ||
        k.class_id >= classes || k.radius < 1) {
      throw InvalidAnnotation("keypoint (" + std::to_string(k.x) + ", " +
                              std::to_string(k.y) + ") outside " +
                              std::to_string(width) + "x" + std::to_string(height) +
                              " grid");
    }
    const double sigma = (2.0 * k.radius + 1.0) / 6.0;
    const double denom = 2.0 * sigma * sigma;
    float* plane = heat.plane(0, k.class_id);
    for (int dy = -k.radius; dy <= k.radius; ++dy) {
      const int y = k.y + dy;
      if (y < 0 || y >= height) continue;
      for (int dx = -k.radius; dx <= k.radius; ++dx) {
        const int x = k.x + dx;
        if (x < 0 || x >= width) continue;
        const float g = static_cast<float>(std::exp(-(dx * dx + dy * dy) / denom));
        float& cell = plane[y * width + x];
        cell = std::max(cell, g);
      }
    }
  }
  for (const auto& k : keypoints) heat(0, k.class_id, k.y, k.x) = 1.0f;
  return heat;
}

TargetMaps make_targets(std::span<const BoxAnnotation> boxes, int stride,
                        int image_h, int image_w, int classes) {
  if (stride < 1) throw ConfigError("stride must be >= 1");
  const int h = (image_h + stride - 1) / stride;
  const int w = (image_w + stride - 1) / stride;
  TargetMaps t;
  t.stride = stride;
  t.size_map = Tensor<float>(Shape{1, 2, h, w}, 0.0f);
  t.offset_map = Tensor<float>(Shape{1, 2, h, w}, 0.0f);
  std::map<std::pair<int, int>, int> owner;  // (class, cell index) -> box
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const BoxAnnotation& b = boxes[i];
    validate_box(b, image_w, image_h, "box " + std::to_string(i));
    if (b.class_id >= classes) {
      throw InvalidAnnotation("box " + std::to_string(i) + ": class " +
                              std::to_string(b.class_id) + " >= " +
                              std::to_string(classes));
    }
    const double cx = b.center_x() / stride;
    const double cy = b.center_y() / stride;
    Keypoint k;
    k.x = static_cast<int>(std::floor(cx));
    k.y = static_cast<int>(std::floor(cy));
    k.class_id = b.class_id;
    k.box_index = static_cast<int>(i);
    k.radius = gaussian_radius(b.width / stride, b.height / stride);
    if (k.x >= w || k.y >= h) {
      throw InvalidAnnotation("box " + std::to_string(i) + ": center off grid");
    }
    auto [it, inserted] = owner.try_emplace({k.class_id, k.y * w + k.x}, k.box_index);
    if (!inserted) {
      t.collisions.push_back({it->second, k.box_index, k.x, k.y});
      it->second = k.box_index;
    }
    t.size_map(0, 0, k.y, k.x) = static_cast<float>(b.width / stride);
    t.size_map(0, 1, k.y, k.x) = static_cast<float>(b.height / stride);
    t.offset_map(0, 0, k.y, k.x) = static_cast<float>(cx - k.x);
    t.offset_map(0, 1, k.y, k.x) = static_cast<float>(cy - k.y);
    t.keypoints.push_back(k);
  }
  t.num_keypoints = static_cast<int>(t.keypoints.size());
  t.heatmap = render_heatmap(t.keypoints, classes, h, w);
  return t;
}

}  // namespace madanet
