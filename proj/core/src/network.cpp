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

#include "madanet/network.hpp"

#include <string>

namespace madanet {
namespace {

// Heatmap logit bias so the initial prediction is about 0.01 everywhere.
constexpr double kHeatmapBias = -4.6;

void check_image(const Shape& s, int size) {
  if (s.c != 3 || s.h != size || s.w != size) {
    throw ShapeError("expected image (N,3," + std::to_string(size) + "," +
                     std::to_string(size) + "), got " + s.str());
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (hr_stride < 1) throw ConfigError("hr_stride must be >= 1");
  if (lr_stride != 2 * hr_stride) {
    throw ConfigError("lr_stride must be twice hr_stride, got " + std::to_string(lr_stride) +
                      " and " + std::to_string(hr_stride));
  }
  if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
  if (branch_channels < 1) throw ConfigError("branch_channels must be >= 1");
  hourglass.validate();
  attention.validate();
  const int unit = lr_stride << hourglass.depth;
  if (input_size < unit || input_size % unit) {
    throw ConfigError("input_size " + std::to_string(input_size) +
                      " must be a multiple of lr_stride * 2^depth = " + std::to_string(unit));
  }
}

std::set<int> ModelConfig::lr_taps() const { return hourglass.interior_blocks(1, 2); }
std::set<int> ModelConfig::hr_taps() const { return hourglass.interior_blocks(2, 3); }

template <typename T>
MadaCenterNet<T>::MadaCenterNet(Rng& rng, ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const int c0 = config_.hourglass.channels.front();
  const int b = config_.branch_channels;
  const int maps = config_.num_classes + 4;

  stem_conv_ = ConvBlock<T>(rng, 3, c0, config_.lr_stride, config_.lr_stride, 0, true);
  stem_res_ = ResidualBlock<T>(rng, c0, c0);

  HourglassConfig lr_cfg = config_.hourglass;
  lr_cfg.taps = config_.lr_taps();
  lr_hourglass_ = Hourglass<T>(rng, lr_cfg);
  const auto blocks = lr_cfg.blocks();
  if (config_.use_attention && config_.use_deformable) {
    for (int t : lr_cfg.taps) {
      const int ch = blocks[t].out_channels;
      deformables_.emplace(t, DeformableConv<T>(rng, ch, ch));
    }
  }
  lr_head_ = make_head(rng);

  up_maps_ = ConvBlock<T>(rng, maps, b);
  in_pre_ = ConvBlock<T>(rng, c0, b);
  in_post_ = ConvBlock<T>(rng, b, b);
  int fused = 2 * b;
  if (config_.use_grkc) {
    grkc_conv_ = ConvBlock<T>(rng, 3, b, config_.hr_stride, config_.hr_stride, 0, true);
    grkc_res_ = ResidualBlock<T>(rng, b, b);
    fused += b;
  }
  fuse_conv_ = ConvBlock<T>(rng, fused, c0);
  fuse_res_ = ResidualBlock<T>(rng, c0, c0);

  HourglassConfig hr_cfg = config_.hourglass;
  hr_cfg.taps = config_.hr_taps();
  hr_hourglass_ = Hourglass<T>(rng, hr_cfg);
  if (config_.use_attention) {
    for (int t : hr_cfg.taps) {
      links_.emplace(t, AttentionLink<T>(rng, blocks[t].out_channels, config_.attention));
    }
  }
  hr_head_ = make_head(rng);
}

template <typename T>
typename MadaCenterNet<T>::Head MadaCenterNet<T>::make_head(Rng& rng) {
  const int c0 = config_.hourglass.channels.front();
  Head head;
  head.trunk = ConvBlock<T>(rng, c0, c0);
  head.out = Conv2d<T>(rng, c0, config_.num_classes + 4, 1, 1, 0);
  T* bias = head.out.bias().mutable_value().data();
  for (int c = 0; c < config_.num_classes; ++c) bias[c] = T(kHeatmapBias);
  return head;
}

template <typename T>
PredictionTriple<T> MadaCenterNet<T>::run_head(Head& head, const Var<T>& x, int stride,
                                               Phase phase) {
  const int classes = config_.num_classes;
  Var<T> raw = head.out.forward(head.trunk.forward(x, phase));
  PredictionTriple<T> p;
  p.heatmap = ops::sigmoid(ops::slice_channels(raw, 0, classes));
  p.offset = ops::slice_channels(raw, classes, 2);
  p.size = ops::slice_channels(raw, classes + 2, 2);
  p.stride = stride;
  return p;
}

template <typename T>
Var<T> MadaCenterNet<T>::stem(const Var<T>& image, Phase phase) {
  check_image(image.shape(), config_.input_size);
  return stem_res_.forward(stem_conv_.forward(image, phase), phase);
}

template <typename T>
typename MadaCenterNet<T>::LrStage MadaCenterNet<T>::lr_stage(const Var<T>& stem_features,
                                                              Phase phase) {
  LrStage out;
  HourglassOutput<T> hg = lr_hourglass_.forward(stem_features, phase);
  out.features = hg.output;
  for (auto& [index, tap] : hg.taps) {
    auto d = deformables_.find(index);
    out.taps[index] = d == deformables_.end() ? tap : d->second.forward(tap);
  }
  out.pred = run_head(lr_head_, out.features, config_.lr_stride, phase);
  return out;
}

template <typename T>
typename MadaCenterNet<T>::Upsampled MadaCenterNet<T>::upsample_transform(
    const PredictionTriple<T>& lr_pred, const Var<T>& features, Phase phase) {
  Upsampled out;
  Var<T> maps = ops::concat_channels<T>({lr_pred.heatmap, lr_pred.offset, lr_pred.size});
  out.up = up_maps_.forward(ops::upsample_bicubic2x(maps), phase);
  out.in = in_post_.forward(ops::upsample_bicubic2x(in_pre_.forward(features, phase)), phase);
  return out;
}

template <typename T>
Var<T> MadaCenterNet<T>::grkc_fuse(const Var<T>& image, const Var<T>& in, const Var<T>& up,
                                   Phase phase) {
  require_same_shape(in.shape(), up.shape(), "grkc_fuse");
  std::vector<Var<T>> parts{in, up};
  if (config_.use_grkc) {
    check_image(image.shape(), config_.input_size);
    Var<T> g = grkc_res_.forward(grkc_conv_.forward(image, phase), phase);
    require_same_shape(g.shape(), in.shape(), "grkc_fuse");
    parts.push_back(g);
  }
  return fuse_res_.forward(fuse_conv_.forward(ops::concat_channels(parts), phase), phase);
}

template <typename T>
PredictionTriple<T> MadaCenterNet<T>::hr_stage(const Var<T>& fused,
                                               const std::map<int, Var<T>>& lr_taps,
                                               Phase phase) {
  std::map<int, Injection<T>> injections;
  for (auto& [index, link] : links_) {
    auto lr = lr_taps.find(index);
    if (lr == lr_taps.end()) {
      throw ShapeError("no LR tap for HR block " + std::to_string(index));
    }
    const AttentionLink<T>* l = &link;
    const Var<T> guide = lr->second;
    injections[index] = [l, guide](const Var<T>& h, const Var<T>* skip) {
      return skip ? ops::add(h, l->decoder(h, guide, *skip))
                  : ops::add(h, l->encoder(h, guide));
    };
  }
  HourglassOutput<T> hg = hr_hourglass_.forward(fused, phase, injections);
  return run_head(hr_head_, hg.output, config_.hr_stride, phase);
}

template <typename T>
PredictionTriple<T> MadaCenterNet<T>::hr_stage_plain(const Var<T>& fused, Phase phase) {
  return run_head(hr_head_, hr_hourglass_.forward(fused, phase).output, config_.hr_stride, phase);
}

template <typename T>
typename MadaCenterNet<T>::Output MadaCenterNet<T>::forward(const Var<T>& image, Phase phase) {
  Output out;
  LrStage lr = lr_stage(stem(image, phase), phase);
  Upsampled u = upsample_transform(lr.pred, lr.features, phase);
  Var<T> fused = grkc_fuse(image, u.in, u.up, phase);
  out.hr = hr_stage(fused, lr.taps, phase);
  out.lr = std::move(lr.pred);
  return out;
}

template <typename T>
void MadaCenterNet<T>::visit_head(Head& head, const std::string& prefix, StateVisitor<T>& v) {
  head.trunk.visit(join_name(prefix, "trunk"), v);
  head.out.visit(join_name(prefix, "out"), v);
}

template <typename T>
void MadaCenterNet<T>::visit(const std::string& prefix, StateVisitor<T>& v) {
  stem_conv_.visit(join_name(prefix, "stem.conv"), v);
  stem_res_.visit(join_name(prefix, "stem.res"), v);
  lr_hourglass_.visit(join_name(prefix, "lr_hourglass"), v);
  for (auto& [index, d] : deformables_) {
    d.visit(join_name(prefix, "deform" + std::to_string(index)), v);
  }
  visit_head(lr_head_, join_name(prefix, "lr_head"), v);
  up_maps_.visit(join_name(prefix, "upsample.maps"), v);
  in_pre_.visit(join_name(prefix, "upsample.in_pre"), v);
  in_post_.visit(join_name(prefix, "upsample.in_post"), v);
  if (config_.use_grkc) {
    grkc_conv_.visit(join_name(prefix, "grkc.conv"), v);
    grkc_res_.visit(join_name(prefix, "grkc.res"), v);
  }
  fuse_conv_.visit(join_name(prefix, "fuse.conv"), v);
  fuse_res_.visit(join_name(prefix, "fuse.res"), v);
  hr_hourglass_.visit(join_name(prefix, "hr_hourglass"), v);
  for (auto& [index, link] : links_) {
    link.visit(join_name(prefix, "attention" + std::to_string(index)), v);
  }
  visit_head(hr_head_, join_name(prefix, "hr_head"), v);
}

template class MadaCenterNet<float>;
template class MadaCenterNet<double>;

}  // namespace madanet
