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

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "madanet/decode_eval.hpp"
#include "madanet/network.hpp"

namespace madanet {

struct InferResult {
  int width = 0;   // original image size; detections are in its pixels
  int height = 0;
  std::vector<Detection> lr;
  std::vector<Detection> hr;
  PredictionMaps lr_maps;
  PredictionMaps hr_maps;
};

/// Runs the network in evaluation mode on a (1, 3, H, W) image. Images of a
/// different size are bilinearly resized to the model input and detections
/// mapped back.
InferResult infer_image(MadaCenterNet<float>& net, const Tensor<float>& image,
                        const DecodeOptions& options = {});

/// The "hot" colormap: black, red, yellow, white as t goes 0 -> 1, with
/// r = 3t, g = 3t - 1, b = 3t - 2 each clamped to [0, 1].
std::array<std::uint8_t, 3> hot_color(float t);

/// Interleaved RGB of `image` with one-pixel green box outlines.
std::vector<std::uint8_t> draw_detections(const Tensor<float>& image,
                                          const std::vector<Detection>& detections);

/// Side-by-side heatmaps, LR (bicubically upsized to the HR grid) on the
/// left and HR on the right, each panel nearest-scaled by `scale`, with a
/// 4 pixel white gutter.
std::vector<std::uint8_t> render_heatmaps(const PredictionMaps& lr, const PredictionMaps& hr,
                                          int scale, int* width, int* height);

/// Writes OUT/detections.json, OUT/overlay.png and OUT/heatmaps.png for the
/// checkpoint in `ckpt` and the PNG at `image`.
void run_inference(const std::filesystem::path& ckpt, const std::filesystem::path& image,
                   const std::filesystem::path& out_dir, const DecodeOptions& options = {});

}  // namespace madanet
