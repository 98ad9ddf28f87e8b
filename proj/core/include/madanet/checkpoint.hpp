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

#include <filesystem>
#include <memory>
#include <string>

#include "madanet/network.hpp"
#include "madanet/optimizer.hpp"

namespace madanet {

inline constexpr int kCheckpointFormatVersion = 1;

/// Where a run stands; saved with every checkpoint so training can resume.
struct TrainState {
  int epoch = 0;  // completed epochs
  long step = 0;  // completed optimizer steps
  std::string shuffle_rng;
  std::string augment_rng;
};

/// Writes DIR/manifest.json and DIR/weights.bin. Tensors are stored as
/// little-endian float32 in visit order: parameters, normalization buffers
/// and, when `optimizer` is given, its moment estimates. `train_config` is
/// stored verbatim as JSON text (may be empty).
void save_checkpoint(const std::filesystem::path& dir, MadaCenterNet<float>& net,
                     const TrainState& state, const Adam* optimizer = nullptr,
                     const std::string& train_config = "");

struct LoadedCheckpoint {
  ModelConfig model;
  TrainState state;
  std::string train_config;
  std::unique_ptr<MadaCenterNet<float>> net;
};

/// Rebuilds the network from the manifest and restores every tensor. Throws
/// ManifestError when the format version, names or shapes disagree and
/// LoadError when files are missing or truncated.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

/// Restores the optimizer moments (and step count) saved with `dir`.
void load_optimizer_state(const std::filesystem::path& dir, Adam& optimizer);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace madanet
