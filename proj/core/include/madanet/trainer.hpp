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
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "madanet/checkpoint.hpp"
#include "madanet/decode_eval.hpp"
#include "madanet/losses.hpp"
#include "madanet/network.hpp"
#include "madanet/optimizer.hpp"
#include "madanet/scene.hpp"

namespace madanet {

struct TrainConfig {
  std::string preset = "full";
  AdamConfig optimizer;
  int batch_size = 4;
  int epochs = 100;
  long max_steps = 0;  // stop after this many steps; 0 means no limit
  std::uint64_t seed = 0;
  std::string data_dir;  // dataset directory (annotations.json + images/)
  int train_limit = 0;   // use only the first N scenes; 0 means all
  int checkpoint_every = 10;  // epochs
  double clip_norm = 10.0;
  bool augment = true;
  ModelConfig model;
  LossConfig loss;

  void validate() const;
};

/// "full" (512 px, 100 epochs), "desk" (128 px, 30 epochs) or "overfit"
/// (8 scenes at 64 px, no augmentation, 2000 steps).
TrainConfig train_preset(const std::string& name);

/// Starts from the preset named by the "preset" key (default "full") and
/// applies every other key on top. Unknown keys throw ConfigError.
TrainConfig parse_train_config(const std::string& json_text);
TrainConfig load_train_config(const std::filesystem::path& path);
std::string train_config_to_json(const TrainConfig& config);

struct StepLog {
  long step = 0;
  int epoch = 0;
  double total = 0;
  double lr_focal = 0, lr_size = 0, lr_offset = 0;
  double hr_focal = 0, hr_size = 0, hr_offset = 0;
  double grad_norm = 0;
};

struct TrainOptions {
  bool resume = false;             // continue from the checkpoint in out_dir
  bool write_files = true;         // checkpoints and CSV logs
  std::ostream* progress = nullptr;  // one line per epoch
};

struct TrainResult {
  std::unique_ptr<MadaCenterNet<float>> net;
  TrainState state;
  std::vector<StepLog> log;  // steps run by this call
  std::filesystem::path checkpoint_dir;
};

/// Adam on the summed two-stage loss, LR targets at lr_stride and HR targets
/// at hr_stride. Deterministic in the config. A non-finite loss throws
/// NumericError and leaves the last written checkpoint untouched.
TrainResult train(const TrainConfig& config, const std::vector<AnnotatedScene>& scenes,
                  const std::filesystem::path& out_dir, const TrainOptions& options = {});

/// Loads config.data_dir and trains on it.
TrainResult train(const TrainConfig& config, const std::filesystem::path& out_dir,
                  const TrainOptions& options = {});

std::string step_log_csv(const std::vector<StepLog>& log);

struct EvalOptions {
  DecodeOptions decode;
  double iou_threshold = 0.5;
  double score_threshold = 0.3;
  int batch_size = 8;
};

/// LR and HR decoded separately over the same scenes.
struct ScaleEvaluation {
  EvalReport lr;
  EvalReport hr;

  std::string to_json() const;
  std::string difference_csv() const { return ae_difference_csv(lr, hr); }
};

ScaleEvaluation evaluate_model(MadaCenterNet<float>& net,
                               const std::vector<AnnotatedScene>& scenes,
                               const EvalOptions& options = {});

/// Scores rendered targets as if they were predictions.
ScaleEvaluation evaluate_oracle(const ModelConfig& model,
                                const std::vector<AnnotatedScene>& scenes,
                                const EvalOptions& options = {});

/// Writes `path` plus <stem>_lr_by_count.csv, <stem>_hr_by_count.csv and
/// <stem>_ae_difference.csv beside it.
void write_evaluation(const ScaleEvaluation& eval, const std::filesystem::path& path);

}  // namespace madanet
