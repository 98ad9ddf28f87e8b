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

#include "madanet/backbone.hpp"

#include <string>

namespace madanet {

template <typename T>
Conv2d<T>::Conv2d(Rng& rng, int in, int out, int kernel, int stride, int pad)
    : weight_(he_normal<T>(rng, out, in, kernel, kernel)),
      bias_(parameter_filled<T>(Shape{1, out, 1, 1}, T(0))),
      geometry_{stride, pad} {}

template <typename T>
Var<T> Conv2d<T>::forward(const Var<T>& x) const {
  return ops::conv2d(x, weight_, bias_, geometry_);
}

template <typename T>
void Conv2d<T>::visit(const std::string& prefix, StateVisitor<T>& v) {
  v.parameter(join_name(prefix, "weight"), weight_);
  v.parameter(join_name(prefix, "bias"), bias_);
}

template <typename T>
BatchNorm<T>::BatchNorm(int channels)
    : gamma_(parameter_filled<T>(Shape{1, channels, 1, 1}, T(1))),
      beta_(parameter_filled<T>(Shape{1, channels, 1, 1}, T(0))),
      state_{Tensor<T>(Shape{1, channels, 1, 1}, T(0)),
             Tensor<T>(Shape{1, channels, 1, 1}, T(1))} {}

template <typename T>
Var<T> BatchNorm<T>::forward(const Var<T>& x, Phase phase) {
  return ops::batch_norm(x, gamma_, beta_, state_, phase == Phase::kTrain,
                         kMomentum, kEps);
}

template <typename T>
void BatchNorm<T>::visit(const std::string& prefix, StateVisitor<T>& v) {
  v.parameter(join_name(prefix, "gamma"), gamma_);
  v.parameter(join_name(prefix, "beta"), beta_);
  v.buffer(join_name(prefix, "running_mean"), state_.running_mean);
  v.buffer(join_name(prefix, "running_var"), state_.running_var);
}

template <typename T>
ConvBlock<T>::ConvBlock(Rng& rng, int in, int out, int kernel, int stride,
                        bool rectify)
    : ConvBlock(rng, in, out, kernel, stride, kernel / 2, rectify) {}

template <typename T>
ConvBlock<T>::ConvBlock(Rng& rng, int in, int out, int kernel, int stride,
                        int pad, bool rectify)
    : conv_(rng, in, out, kernel, stride, pad), norm_(out), rectify_(rectify) {}

template <typename T>
Var<T> ConvBlock<T>::forward(const Var<T>& x, Phase phase) {
  if (x.shape().c != conv_.in_channels()) {
    throw ShapeError("conv block expects " + std::to_string(conv_.in_channels()) +
                     " channels, got " + x.shape().str());
  }
  Var<T> y = norm_.forward(conv_.forward(x), phase);
  return rectify_ ? ops::relu(y) : y;
}

template <typename T>
void ConvBlock<T>::visit(const std::string& prefix, StateVisitor<T>& v) {
  conv_.visit(join_name(prefix, "conv"), v);
  norm_.visit(join_name(prefix, "norm"), v);
}

template <typename T>
ResidualBlock<T>::ResidualBlock(Rng& rng, int in, int out, int stride)
    : first_(rng, in, out, 3, stride, true),
      second_(rng, out, out, 3, 1, false),
      has_projection_(in != out || stride != 1),
      stride_(stride) {
  if (has_projection_) projection_ = ConvBlock<T>(rng, in, out, 1, stride, 0, false);
}

template <typename T>
Var<T> ResidualBlock<T>::forward(const Var<T>& x, Phase phase) {
  Var<T> branch = second_.forward(first_.forward(x, phase), phase);
  Var<T> shortcut = has_projection_ ? projection_.forward(x, phase) : x;
  return ops::add(branch, shortcut);
}

template <typename T>
void ResidualBlock<T>::visit(const std::string& prefix, StateVisitor<T>& v) {
  first_.visit(join_name(prefix, "branch1"), v);
  second_.visit(join_name(prefix, "branch2"), v);
  if (has_projection_) projection_.visit(join_name(prefix, "shortcut"), v);
}

std::vector<BlockInfo> HourglassConfig::blocks() const {
  std::vector<BlockInfo> out;
  const auto& c = channels;
  out.push_back({0, BlockRole::kEncoder, 0, c[0], c[0]});
  for (int d = 1; d <= depth; ++d) {
    out.push_back({d, BlockRole::kEncoder, d, c[d - 1], c[d]});
  }
  out.push_back({depth + 1, BlockRole::kBottleneck, depth, c[depth], c[depth]});
  for (int d = depth - 1; d >= 0; --d) {
    out.push_back({static_cast<int>(out.size()), BlockRole::kDecoder, d,
                   c[d + 1], c[d]});
  }
  out.push_back({static_cast<int>(out.size()), BlockRole::kOutput, 0, c[0], c[0]});
  return out;
}

std::set<int> HourglassConfig::interior_blocks(int skip_first, int skip_last) const {
  std::set<int> out;
  for (int i = skip_first; i < block_count() - skip_last; ++i) out.insert(i);
  return out;
}

void HourglassConfig::validate() const {
  if (depth < 1) throw ConfigError("hourglass depth must be >= 1");
  if (static_cast<int>(channels.size()) != depth + 1) {
    throw ConfigError("hourglass needs depth + 1 = " + std::to_string(depth + 1) +
                      " channel counts, got " + std::to_string(channels.size()));
  }
  for (int c : channels) {
    if (c < 1) throw ConfigError("hourglass channel counts must be >= 1");
  }
  for (int t : taps) {
    if (t < 0 || t >= block_count()) {
      throw ConfigError("hourglass tap " + std::to_string(t) + " out of range");
    }
  }
}

template <typename T>
Hourglass<T>::Hourglass(Rng& rng, HourglassConfig config)
    : config_(std::move(config)) {
  config_.validate();
  info_ = config_.blocks();
  for (const auto& b : info_) {
    const int stride = (b.role == BlockRole::kEncoder && b.level > 0) ? 2 : 1;
    blocks_.emplace_back(rng, b.in_channels, b.out_channels, stride);
  }
}

template <typename T>
HourglassOutput<T> Hourglass<T>::forward(
    const Var<T>& x, Phase phase, const std::map<int, Injection<T>>& injections) {
  const int factor = 1 << config_.depth;
  if (x.shape().h % factor || x.shape().w % factor) {
    throw ShapeError("hourglass input " + x.shape().str() +
                     " not divisible by 2^" + std::to_string(config_.depth));
  }
  HourglassOutput<T> result;
  std::vector<Var<T>> skips(config_.depth);
  Var<T> h = x;
  for (const auto& b : info_) {
    Var<T>* skip = nullptr;
    if (b.role == BlockRole::kDecoder) {
      h = ops::upsample_nearest2x(h);
      skip = &skips[b.level];
    }
    Var<T> out = blocks_[b.index].forward(h, phase);
    if (config_.taps.count(b.index)) result.taps[b.index] = out;
    const Shape expected = skip ? skip->shape() : out.shape();
    auto inj = injections.find(b.index);
    if (inj != injections.end()) {
      out = inj->second(out, skip);
      if (out.shape() != expected) {
        throw ShapeError("injection at block " + std::to_string(b.index) +
                         " returned " + out.shape().str() + ", expected " +
                         expected.str());
      }
    } else if (skip) {
      out = ops::add(out, *skip);
    }
    if (b.role == BlockRole::kEncoder && b.level < config_.depth) {
      skips[b.level] = out;
    }
    h = out;
  }
  result.output = h;
  return result;
}

template <typename T>
void Hourglass<T>::visit(const std::string& prefix, StateVisitor<T>& v) {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].visit(join_name(prefix, "block" + std::to_string(i)), v);
  }
}

template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm<float>;
template class BatchNorm<double>;
template class ConvBlock<float>;
template class ConvBlock<double>;
template class ResidualBlock<float>;
template class ResidualBlock<double>;
template class Hourglass<float>;
template class Hourglass<double>;

}  // namespace madanet
