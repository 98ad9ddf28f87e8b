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

#include "madanet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "madanet/ops.hpp"

namespace madanet {
namespace {

void check_batch(const Shape& pred, std::span<const TargetMaps> gt,
                 const Tensor<float> TargetMaps::*map, const char* what) {
  if (static_cast<std::size_t>(pred.n) != gt.size()) {
    throw ShapeError(std::string(what) + ": batch of " + std::to_string(pred.n) +
                     " predictions vs " + std::to_string(gt.size()) + " targets");
  }
  for (const auto& t : gt) {
    const Shape s = (t.*map).shape();
    if (s.c != pred.c || s.h != pred.h || s.w != pred.w) {
      throw ShapeError(std::string(what) + ": prediction " + pred.str() +
                       " vs target " + s.str());
    }
  }
}

// Shared body of the two keypoint-wise L1 losses.
template <typename T>
Var<T> keypoint_l1(const Var<T>& pred, std::span<const TargetMaps> gt,
                   const Tensor<float> TargetMaps::*map, const char* what) {
  check_batch(pred.shape(), gt, map, what);
  const int batch = pred.shape().n;
  double total = 0;
  for (int n = 0; n < batch; ++n) {
    const TargetMaps& t = gt[n];
    if (t.num_keypoints == 0) continue;
    double acc = 0;
    for (const auto& k : t.keypoints)
      for (int c = 0; c < 2; ++c)
        acc += std::abs(static_cast<double>(pred.value()(n, c, k.y, k.x)) -
                        (t.*map)(0, c, k.y, k.x));
    total += acc / t.num_keypoints;
  }
  Tensor<T> out(Shape{}, T(total / batch));
  std::vector<TargetMaps> saved(gt.begin(), gt.end());
  return make_result<T>(std::move(out), {pred},
                        [pred, saved = std::move(saved), map](const Tensor<T>& g) {
    Tensor<T>* gp = pred.grad_sink();
    if (!gp) return;
    const int batch = pred.shape().n;
    for (int n = 0; n < batch; ++n) {
      const TargetMaps& t = saved[n];
      if (t.num_keypoints == 0) continue;
      const T scale = g[0] / T(t.num_keypoints * batch);
      for (const auto& k : t.keypoints)
        for (int c = 0; c < 2; ++c) {
          const double d = static_cast<double>(pred.value()(n, c, k.y, k.x)) -
                           (t.*map)(0, c, k.y, k.x);
          if (d > 0) (*gp)(n, c, k.y, k.x) += scale;
          if (d < 0) (*gp)(n, c, k.y, k.x) -= scale;
        }
    }
  });
}

}  // namespace

void LossConfig::validate() const {
  if (!(alpha > 0) || !(beta > 0)) throw ConfigError("focal alpha and beta must be > 0");
  if (lambda_size < 0 || lambda_offset < 0 || weight_lr < 0 || weight_hr < 0) {
    throw ConfigError("loss weights must be >= 0");
  }
  if (!(epsilon > 0) || !(epsilon < 0.5)) throw ConfigError("epsilon must be in (0, 0.5)");
}

template <typename T>
Var<T> focal_loss(const Var<T>& heatmap, std::span<const TargetMaps> gt,
                  const LossConfig& cfg) {
  check_batch(heatmap.shape(), gt, &TargetMaps::heatmap, "focal_loss");
  const Shape s = heatmap.shape();
  const std::size_t per_image = static_cast<std::size_t>(s.c) * s.plane();
  const double a = cfg.alpha, b = cfg.beta, eps = cfg.epsilon;
  auto dloss = std::make_shared<Tensor<T>>(s);
  double total = 0;
  for (int n = 0; n < s.n; ++n) {
    const float* y = gt[n].heatmap.data();
    const T* p = heatmap.value().plane(n, 0);
    T* d = dloss->plane(n, 0);
    const double norm = std::max(gt[n].num_keypoints, 1) * static_cast<double>(s.n);
    double acc = 0;
    for (std::size_t i = 0; i < per_image; ++i) {
      const double raw = p[i];
      const bool clipped = raw < eps || raw > 1 - eps;
      const double q = std::clamp(raw, eps, 1 - eps);
      double f, df;
      if (y[i] == 1.0f) {
        f = std::pow(1 - q, a) * std::log(q);
        df = -a * std::pow(1 - q, a - 1) * std::log(q) + std::pow(1 - q, a) / q;
      } else {
        const double wneg = std::pow(1.0 - y[i], b);
        f = wneg * std::pow(q, a) * std::log(1 - q);
        df = wneg * (a * std::pow(q, a - 1) * std::log(1 - q) - std::pow(q, a) / (1 - q));
      }
      acc += f;
      d[i] = clipped ? T(0) : T(-df / norm);
    }
    total += -acc / std::max(gt[n].num_keypoints, 1);
  }
  Tensor<T> out(Shape{}, T(total / s.n));
  return make_result<T>(std::move(out), {heatmap}, [heatmap, dloss](const Tensor<T>& g) {
    if (auto* gh = heatmap.grad_sink()) {
      const T* d = dloss->data();
      for (std::size_t i = 0; i < gh->size(); ++i) (*gh)[i] += g[0] * d[i];
    }
  });
}

template <typename T>
Var<T> size_loss(const Var<T>& size, std::span<const TargetMaps> gt) {
  return keypoint_l1(size, gt, &TargetMaps::size_map, "size_loss");
}

template <typename T>
Var<T> offset_loss(const Var<T>& offset, std::span<const TargetMaps> gt) {
  return keypoint_l1(offset, gt, &TargetMaps::offset_map, "offset_loss");
}

template <typename T>
Var<T> combine_stage(const Var<T>& focal, const Var<T>& offset, const Var<T>& size,
                     const LossConfig& cfg) {
  return ops::add(ops::add(focal, ops::scale(offset, cfg.lambda_offset)),
                  ops::scale(size, cfg.lambda_size));
}

template <typename T>
StageLoss<T> stage_loss(const PredictionTriple<T>& pred, std::span<const TargetMaps> gt,
                        const LossConfig& cfg) {
  StageLoss<T> out;
  out.focal = focal_loss(pred.heatmap, gt, cfg);
  out.size = size_loss(pred.size, gt);
  out.offset = offset_loss(pred.offset, gt);
  out.total = combine_stage(out.focal, out.offset, out.size, cfg);
  return out;
}

template <typename T>
TotalLoss<T> total_loss(const PredictionTriple<T>& lr_pred, const PredictionTriple<T>& hr_pred,
                        std::span<const TargetMaps> lr_gt, std::span<const TargetMaps> hr_gt,
                        const LossConfig& cfg) {
  TotalLoss<T> out;
  out.lr = stage_loss(lr_pred, lr_gt, cfg);
  out.hr = stage_loss(hr_pred, hr_gt, cfg);
  out.total = ops::add(ops::scale(out.lr.total, cfg.weight_lr),
                       ops::scale(out.hr.total, cfg.weight_hr));
  return out;
}

#define MADANET_INSTANTIATE_LOSSES(T)                                               \
  template Var<T> focal_loss(const Var<T>&, std::span<const TargetMaps>,            \
                             const LossConfig&);                                    \
  template Var<T> size_loss(const Var<T>&, std::span<const TargetMaps>);            \
  template Var<T> offset_loss(const Var<T>&, std::span<const TargetMaps>);          \
  template Var<T> combine_stage(const Var<T>&, const Var<T>&, const Var<T>&,        \
                                const LossConfig&);                                 \
  template StageLoss<T> stage_loss(const PredictionTriple<T>&,                      \
                                   std::span<const TargetMaps>, const LossConfig&); \
  template TotalLoss<T> total_loss(const PredictionTriple<T>&,                      \
                                   const PredictionTriple<T>&,                      \
                                   std::span<const TargetMaps>,                     \
                                   std::span<const TargetMaps>, const LossConfig&);

MADANET_INSTANTIATE_LOSSES(float)
MADANET_INSTANTIATE_LOSSES(double)

#undef MADANET_INSTANTIATE_LOSSES

}  // namespace madanet
