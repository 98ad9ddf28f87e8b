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

#include <string>

#include "madanet/backbone.hpp"

namespace madanet {

/// 3x3 deformable convolution whose per-tap offsets come from a 3x3
/// convolution over the same input. The offset predictor starts at zero, so
/// an untrained layer is an ordinary convolution.
template <typename T>
class DeformableConv {
 public:
  static constexpr int kKernel = 3;
  static constexpr int kOffsetChannels = 2 * kKernel * kKernel;

  DeformableConv() = default;
  DeformableConv(Rng& rng, int in, int out);

  Var<T> forward(const Var<T>& x) const;
  /// Deformable convolution with externally supplied offsets
  /// (N, 18, H, W); channel 2t is the row and 2t+1 the column displacement.
  Var<T> forward_with_offsets(const Var<T>& x, const Var<T>& offsets) const;
  /// The equivalent plain 3x3 convolution (same weights, zero offsets).
  Var<T> forward_regular(const Var<T>& x) const;
  void visit(const std::string& prefix, StateVisitor<T>& v);

  Var<T>& weight() { return weight_; }
  Var<T>& bias() { return bias_; }
  Conv2d<T>& offset_predictor() { return offsets_; }

 private:
  Var<T> weight_;
  Var<T> bias_;
  Conv2d<T> offsets_;
};

struct AttentionConfig {
  int d_k = 16;
  int max_tokens = 4096;
  // Average-pool oversized taps by 2x2 until they fit instead of failing.
  bool pool_oversize = false;

  void validate() const;
};

/// Cross-scale attention between an HR tap (queries and values) and a
/// deformed LR tap (keys). The LR tap is bilinearly upsampled to the HR grid
/// so that both sides hold the same number of tokens. The four token-wise
/// linear maps are 1x1 convolutions with bias.
template <typename T>
class AttentionLink {
 public:
  AttentionLink() = default;
  AttentionLink(Rng& rng, int channels, AttentionConfig config);

  /// softmax(Q K^T / sqrt(d_k)) V followed by the output map.
  Var<T> encoder(const Var<T>& hr_tap, const Var<T>& lr_deformed) const;
  /// encoder(hr_tap, lr_deformed) + skip.
  Var<T> decoder(const Var<T>& hr_tap, const Var<T>& lr_deformed,
                 const Var<T>& skip) const;
  /// The attention matrix used by encoder(), (N, 1, tokens, tokens).
  Tensor<T> weights(const Var<T>& hr_tap, const Var<T>& lr_deformed) const;

  void visit(const std::string& prefix, StateVisitor<T>& v);

  const AttentionConfig& config() const { return config_; }
  Conv2d<T>& query() { return query_; }
  Conv2d<T>& key() { return key_; }
  Conv2d<T>& value() { return value_; }
  Conv2d<T>& output() { return output_; }

 private:
  struct Prepared {
    Var<T> hr;
    Var<T> lr;
    int pooled = 0;
  };
  Prepared prepare(const Var<T>& hr_tap, const Var<T>& lr_deformed) const;

  AttentionConfig config_;
  Conv2d<T> query_;
  Conv2d<T> key_;
  Conv2d<T> value_;
  Conv2d<T> output_;
};

}  // namespace madanet
