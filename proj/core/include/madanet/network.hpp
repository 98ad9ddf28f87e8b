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

#include <map>
#include <string>

#include "madanet/backbone.hpp"
#include "madanet/madalink.hpp"
#include "madanet/prediction.hpp"

namespace madanet {

struct ModelConfig {
  int input_size = 128;
  int hr_stride = 4;   // R
  int lr_stride = 8;   // must be 2R
  int num_classes = 1;
  int branch_channels = 16;  // width of the upsampling and GRKC paths
  HourglassConfig hourglass;  // taps are filled in from the tap policy
  AttentionConfig attention;
  bool use_grkc = true;
  bool use_attention = true;
  bool use_deformable = true;

  void validate() const;
  int lr_map_size() const { return input_size / lr_stride; }
  int hr_map_size() const { return input_size / hr_stride; }
  /// Blocks of the LR hourglass whose outputs feed the link.
  std::set<int> lr_taps() const;
  /// Blocks of the HR hourglass that receive attention injections.
  std::set<int> hr_taps() const;
};

/// Two-stage keypoint network: an LR hourglass at stride 2R whose deformed
/// internal features guide an HR hourglass at stride R through cross-scale
/// attention.
template <typename T>
class MadaCenterNet {
 public:
  struct LrStage {
    Var<T> features;              // F^d, the LR hourglass output
    std::map<int, Var<T>> taps;   // deformed internal features by block
    PredictionTriple<T> pred;
  };
  struct Upsampled {
    Var<T> up;  // from the LR prediction maps
    Var<T> in;  // from the LR features
  };
  struct Output {
    PredictionTriple<T> lr;
    PredictionTriple<T> hr;
  };

  MadaCenterNet() = default;
  MadaCenterNet(Rng& rng, ModelConfig config);

  Var<T> stem(const Var<T>& image, Phase phase);
  LrStage lr_stage(const Var<T>& stem_features, Phase phase);
  Upsampled upsample_transform(const PredictionTriple<T>& lr_pred, const Var<T>& features,
                               Phase phase);
  Var<T> grkc_fuse(const Var<T>& image, const Var<T>& in, const Var<T>& up, Phase phase);
  PredictionTriple<T> hr_stage(const Var<T>& fused, const std::map<int, Var<T>>& lr_taps,
                               Phase phase);
  /// The HR stage without attention injections (a plain stacked hourglass).
  PredictionTriple<T> hr_stage_plain(const Var<T>& fused, Phase phase);
  Output forward(const Var<T>& image, Phase phase);

  void visit(const std::string& prefix, StateVisitor<T>& v);
  const ModelConfig& config() const { return config_; }

  Hourglass<T>& lr_hourglass() { return lr_hourglass_; }
  Hourglass<T>& hr_hourglass() { return hr_hourglass_; }
  std::map<int, AttentionLink<T>>& links() { return links_; }
  std::map<int, DeformableConv<T>>& deformables() { return deformables_; }
  ConvBlock<T>& lr_head_trunk() { return lr_head_.trunk; }
  Conv2d<T>& lr_head_output() { return lr_head_.out; }
  Conv2d<T>& hr_head_output() { return hr_head_.out; }

 private:
  struct Head {
    ConvBlock<T> trunk;
    Conv2d<T> out;
  };
  Head make_head(Rng& rng);
  PredictionTriple<T> run_head(Head& head, const Var<T>& x, int stride, Phase phase);
  void visit_head(Head& head, const std::string& prefix, StateVisitor<T>& v);

  ModelConfig config_;
  ConvBlock<T> stem_conv_;
  ResidualBlock<T> stem_res_;
  Hourglass<T> lr_hourglass_;
  std::map<int, DeformableConv<T>> deformables_;
  Head lr_head_;
  ConvBlock<T> up_maps_;
  ConvBlock<T> in_pre_;
  ConvBlock<T> in_post_;
  ConvBlock<T> grkc_conv_;
  ResidualBlock<T> grkc_res_;
  ConvBlock<T> fuse_conv_;
  ResidualBlock<T> fuse_res_;
  Hourglass<T> hr_hourglass_;
  std::map<int, AttentionLink<T>> links_;
  Head hr_head_;
};

}  // namespace madanet
