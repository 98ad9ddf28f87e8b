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

#include <vector>

#include "madanet/autograd.hpp"

// Differentiable primitives over NCHW Vars. Each op validates shapes and
// throws ShapeError on mismatch. Instantiated for float and double.
namespace madanet::ops {

struct ConvGeometry {
  int stride = 1;
  int pad = 0;
};

inline int conv_out_extent(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, double s);
template <typename T> Var<T> relu(const Var<T>& a);
template <typename T> Var<T> sigmoid(const Var<T>& a);

/// Sum of every element, as a 1x1x1x1 scalar.
template <typename T> Var<T> sum(const Var<T>& a);
/// Sum of a * weights elementwise; `weights` is a constant.
template <typename T> Var<T> dot_const(const Var<T>& a, const Tensor<T>& weights);

template <typename T> Var<T> concat_channels(const std::vector<Var<T>>& parts);
template <typename T> Var<T> slice_channels(const Var<T>& a, int begin, int count);
/// Stacks N=1 tensors along the batch axis.
template <typename T> Var<T> stack_batch(const std::vector<Var<T>>& parts);

/// Cross-correlation with weight (Cout, Cin, kh, kw) and optional bias
/// (1, Cout, 1, 1); pass an undefined Var for no bias.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
              ConvGeometry geometry);

/// Running statistics owned by a normalization layer.
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
};

/// Per-channel normalization. In training mode batch statistics are used and
/// the running estimates are updated with `momentum`; otherwise the running
/// estimates are used.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  BatchNormState<T>& state, bool training, double momentum,
                  double eps);

template <typename T> Var<T> upsample_nearest2x(const Var<T>& x);
template <typename T> Var<T> avg_pool2x2(const Var<T>& x);

/// Bilinear resize, half-pixel centers, edge clamp.
template <typename T> Var<T> resize_bilinear(const Var<T>& x, int out_h, int out_w);
/// x2 bicubic upsampling (Keys kernel, a = -0.5), half-pixel centers, edge clamp.
template <typename T> Var<T> upsample_bicubic2x(const Var<T>& x);

/// Samples x (N,C,H,W) at fractional points coords (N,2,P,1), channel 0 is
/// the x (column) coordinate and channel 1 the y (row) coordinate. Returns
/// (N,C,P,1). Points outside the image read zeros.
template <typename T> Var<T> bilinear_sample(const Var<T>& x, const Var<T>& coords);

/// Deformable convolution. offsets is (N, 2*kh*kw, Ho, Wo) with channel 2t
/// holding the row displacement and 2t+1 the column displacement of tap t.
template <typename T>
Var<T> deform_conv2d(const Var<T>& x, const Var<T>& offsets,
                     const Var<T>& weight, const Var<T>& bias,
                     ConvGeometry geometry);

/// softmax(Q^T K / sqrt(d)) applied to V, over flattened spatial tokens.
/// q, k: (N, d, h, w); v: (N, dv, h, w); returns (N, dv, h, w).
template <typename T>
Var<T> scaled_dot_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v);

/// The attention matrix (N, 1, tokens, tokens) computed by the same path as
/// scaled_dot_attention. Not differentiable.
template <typename T>
Tensor<T> attention_weights(const Tensor<T>& q, const Tensor<T>& k);

}  // namespace madanet::ops
