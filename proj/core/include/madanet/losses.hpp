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

#include "madanet/prediction.hpp"
#include "madanet/targets.hpp"

namespace madanet {

struct LossConfig {
  double alpha = 2.0;
  double beta = 4.0;
  double lambda_size = 1.0;
  double lambda_offset = 0.1;
  double weight_lr = 1.0;
  double weight_hr = 1.0;
  double epsilon = 1e-6;  // predictions are clipped to [eps, 1 - eps]

  void validate() const;
};

// Batched losses take one TargetMaps per batch item and return the mean of
// the per-image losses as a scalar Var.

/// Penalty-reduced focal loss over the heatmap, normalized by max(N, 1).
template <typename T>
Var<T> focal_loss(const Var<T>& heatmap, std::span<const TargetMaps> gt,
                  const LossConfig& cfg);

/// Mean over keypoints of |w - w*| + |h - h*| read at keypoint cells.
template <typename T>
Var<T> size_loss(const Var<T>& size, std::span<const TargetMaps> gt);

/// Mean over keypoints of the L1 distance to the stored fractional offsets.
template <typename T>
Var<T> offset_loss(const Var<T>& offset, std::span<const TargetMaps> gt);

template <typename T>
struct StageLoss {
  Var<T> total;
  Var<T> focal;
  Var<T> size;
  Var<T> offset;
};

/// focal + lambda_offset * offset + lambda_size * size.
template <typename T>
StageLoss<T> stage_loss(const PredictionTriple<T>& pred, std::span<const TargetMaps> gt,
                        const LossConfig& cfg);

/// Weighted sum of already computed components, for callers that assemble
/// the stage loss themselves.
template <typename T>
Var<T> combine_stage(const Var<T>& focal, const Var<T>& offset, const Var<T>& size,
                     const LossConfig& cfg);

template <typename T>
struct TotalLoss {
  Var<T> total;
  StageLoss<T> lr;
  StageLoss<T> hr;
};

/// weight_lr * stage(LR) + weight_hr * stage(HR).
template <typename T>
TotalLoss<T> total_loss(const PredictionTriple<T>& lr_pred, const PredictionTriple<T>& hr_pred,
                        std::span<const TargetMaps> lr_gt, std::span<const TargetMaps> hr_gt,
                        const LossConfig& cfg);

}  // namespace madanet
