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
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "madanet/rng.hpp"
#include "madanet/scene.hpp"

namespace madanet {

/// Parameters of the synthetic trap-scene generator.
struct SceneConfig {
  int image_size = 128;
  std::pair<int, int> count_range{1, 80};
  std::pair<double, double> blob_scale_range{8.0, 14.0};  // body length, px
  std::pair<double, double> rotation_range{0.0, 360.0};   // degrees
  // Upper bound on the IoU between any two placed boxes.
  double occlusion_target = 0.3;
  std::uint64_t background_texture_seed = 7;
  int max_retries = 400;  // placement attempts per object

  void validate() const;
};

/// Geometry of one moth-like object: an elongated body with two wing lobes
/// swept back by `fold` radians.
struct Blob {
  double cx = 0;
  double cy = 0;
  double length = 0;
  double rotation = 0;  // radians
  double fold = 0;      // radians
  float tint[3] = {0, 0, 0};
};

/// True when the pixel center (px + 0.5, py + 0.5) is covered by the blob.
bool blob_covers(const Blob& blob, int px, int py);

/// Tight bounds of the pixels covered by `blob` without clipping, as
/// [x0, x1) x [y0, y1). Empty blobs return x0 == x1.
struct PixelBounds {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};
PixelBounds blob_pixel_bounds(const Blob& blob);

struct GeneratedScene {
  AnnotatedScene scene;
  std::vector<Blob> blobs;  // same order as scene.boxes
};

/// Deterministic in (config, seed). Throws PlacementError if the requested
/// count cannot be placed under the occlusion bound.
GeneratedScene generate_scene_detailed(const SceneConfig& config, std::uint64_t seed);
AnnotatedScene generate_scene(const SceneConfig& config, std::uint64_t seed);

struct DatasetSplit {
  std::vector<AnnotatedScene> train;
  std::vector<AnnotatedScene> test;
};

/// `count` scenes with per-scene seeds derived from `master_seed`, shuffled
/// into train/test by `train_ratio` (rounded to nearest).
DatasetSplit generate_dataset(const SceneConfig& config, int count,
                              std::uint64_t master_seed, double train_ratio = 0.7);

/// What `madanet generate` reads: scene parameters plus dataset size,
/// split and seed. JSON keys are the SceneConfig fields plus "count",
/// "train_ratio" and "seed".
struct DatasetConfig {
  SceneConfig scene;
  int count = 400;
  double train_ratio = 0.7;
  std::uint64_t seed = 0;

  void validate() const;
};

DatasetConfig parse_dataset_config(const std::string& json_text);
std::string dataset_config_to_json(const DatasetConfig& config);

/// One augmentation step. A missing parameter is drawn from the op's default
/// range using the augmentation seed.
struct AugmentOp {
  enum class Kind { kHFlip, kContrast, kBrightness, kSaturation };
  Kind kind = Kind::kHFlip;
  std::optional<double> param;
};

/// Parses "hflip", "contrast", "contrast(1.2)", "brightness(-0.1)", ... and
/// throws ConfigError on an unknown name.
AugmentOp parse_augment_op(const std::string& text);

/// Photometric ops leave boxes untouched; hflip mirrors them. Pixel values
/// are clipped to [0, 1] and snapped to 8-bit levels.
AnnotatedScene augment(const AnnotatedScene& scene, const std::vector<AugmentOp>& ops,
                       std::uint64_t seed);

/// Training-time policy: hflip with probability 1/2, then contrast,
/// brightness and saturation with drawn parameters.
AnnotatedScene random_augment(const AnnotatedScene& scene, Rng& rng);

/// DIR/annotations.json plus DIR/images/<scene_id>.png.
void save_dataset(const std::vector<AnnotatedScene>& scenes,
                  const std::filesystem::path& dir);
std::vector<AnnotatedScene> load_dataset(const std::filesystem::path& dir);

}  // namespace madanet
