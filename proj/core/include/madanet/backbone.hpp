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

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "madanet/module.hpp"

namespace madanet {

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(Rng& rng, int in, int out, int kernel, int stride, int pad);

  Var<T> forward(const Var<T>& x) const;
  void visit(const std::string& prefix, StateVisitor<T>& v);

  int in_channels() const { return weight_.shape().c; }
  int out_channels() const { return weight_.shape().n; }
  Var<T>& weight() { return weight_; }
  Var<T>& bias() { return bias_; }
  ops::ConvGeometry geometry() const { return geometry_; }

 private:
  Var<T> weight_;
  Var<T> bias_;
  ops::ConvGeometry geometry_;
};

template <typename T>
class BatchNorm {
 public:
  static constexpr double kMomentum = 0.1;
  static constexpr double kEps = 1e-5;

  BatchNorm() = default;
  explicit BatchNorm(int channels);

  Var<T> forward(const Var<T>& x, Phase phase);
  void visit(const std::string& prefix, StateVisitor<T>& v);

  Var<T>& gamma() { return gamma_; }
  Var<T>& beta() { return beta_; }

 private:
  Var<T> gamma_;
  Var<T> beta_;
  ops::BatchNormState<T> state_;
};

/// Convolution, batch normalization, optional rectifier.
template <typename T>
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(Rng& rng, int in, int out, int kernel = 3, int stride = 1,
            bool rectify = true);
  /// Explicit padding (the default is kernel / 2).
  ConvBlock(Rng& rng, int in, int out, int kernel, int stride, int pad,
            bool rectify);

  Var<T> forward(const Var<T>& x, Phase phase);
  void visit(const std::string& prefix, StateVisitor<T>& v);

  int in_channels() const { return conv_.in_channels(); }
  int out_channels() const { return conv_.out_channels(); }
  Conv2d<T>& conv() { return conv_; }
  BatchNorm<T>& norm() { return norm_; }

 private:
  Conv2d<T> conv_;
  BatchNorm<T> norm_;
  bool rectify_ = true;
};

/// branch(x) + shortcut(x); branch is two 3x3 conv blocks (the second without
/// rectifier), shortcut is identity or a 1x1 projection with normalization.
template <typename T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(Rng& rng, int in, int out, int stride = 1);

  Var<T> forward(const Var<T>& x, Phase phase);
  void visit(const std::string& prefix, StateVisitor<T>& v);

  int in_channels() const { return first_.in_channels(); }
  int out_channels() const { return second_.out_channels(); }
  int stride() const { return stride_; }
  ConvBlock<T>& first() { return first_; }
  ConvBlock<T>& second() { return second_; }
  bool has_projection() const { return has_projection_; }

 private:
  ConvBlock<T> first_;
  ConvBlock<T> second_;
  bool has_projection_ = false;
  ConvBlock<T> projection_;
  int stride_ = 1;
};

enum class BlockRole { kEncoder, kBottleneck, kDecoder, kOutput };

struct BlockInfo {
  int index = 0;
  BlockRole role = BlockRole::kEncoder;
  int level = 0;  // spatial scale is input / 2^level
  int in_channels = 0;
  int out_channels = 0;
};

struct HourglassConfig {
  int depth = 3;
  std::vector<int> channels{32, 48, 64, 80};  // one per level, depth + 1
  std::set<int> taps;                         // block indices exposed

  /// Blocks in execution order: one encoder block per level (levels >= 1
  /// downsample), a bottleneck block, one decoder block per level from
  /// depth-1 to 0 (each merged with the encoder skip of its level) and an
  /// output block.
  int block_count() const { return 2 * depth + 3; }
  std::vector<BlockInfo> blocks() const;
  /// Every block index except the first `skip_first` and last `skip_last`.
  std::set<int> interior_blocks(int skip_first, int skip_last) const;
  void validate() const;
};

template <typename T>
struct HourglassOutput {
  Var<T> output;
  std::map<int, Var<T>> taps;
};

/// Replaces the output of the block at a tap. For encoder and bottleneck
/// blocks `skip` is null and the result replaces the block output. For
/// decoder blocks `skip` is the encoder feature of the same level and the
/// result replaces the merged value, whose default is block_out + *skip.
template <typename T>
using Injection = std::function<Var<T>(const Var<T>& block_out, const Var<T>* skip)>;

template <typename T>
class Hourglass {
 public:
  Hourglass() = default;
  Hourglass(Rng& rng, HourglassConfig config);

  /// Spatial dims of `x` must be divisible by 2^depth.
  HourglassOutput<T> forward(const Var<T>& x, Phase phase,
                             const std::map<int, Injection<T>>& injections = {});
  void visit(const std::string& prefix, StateVisitor<T>& v);

  const HourglassConfig& config() const { return config_; }
  std::vector<ResidualBlock<T>>& blocks() { return blocks_; }

 private:
  HourglassConfig config_;
  std::vector<BlockInfo> info_;
  std::vector<ResidualBlock<T>> blocks_;
};

/// The identity injection: returns the value the hourglass would have used.
template <typename T>
Var<T> identity_injection(const Var<T>& block_out, const Var<T>* skip) {
  return skip ? ops::add(block_out, *skip) : block_out;
}

}  // namespace madanet
