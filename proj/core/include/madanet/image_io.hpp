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
#include <vector>

#include "madanet/tensor.hpp"

namespace madanet {

/// Reads an 8-bit PNG as (1, 3, H, W) floats k / 255. Gray and alpha
/// channels are converted to RGB.
Tensor<float> read_png(const std::filesystem::path& path);

/// Writes (1, 3, H, W) floats in [0, 1] as 8-bit RGB, rounding to nearest.
void write_png(const std::filesystem::path& path, const Tensor<float>& image);

/// Writes interleaved 8-bit RGB.
void write_png_rgb8(const std::filesystem::path& path, int width, int height,
                    const std::vector<std::uint8_t>& rgb);

inline std::uint8_t to_u8(float v) {
  const float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  return static_cast<std::uint8_t>(c * 255.0f + 0.5f);
}
inline float from_u8(std::uint8_t k) { return static_cast<float>(k) / 255.0f; }

/// Snaps every value to the nearest k / 255 so PNG round trips are exact.
void quantize_u8(Tensor<float>& image);

}  // namespace madanet
