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

#include "madanet/madalink.hpp"

namespace madanet {

template <typename T>
DeformableConv<T>::DeformableConv(Rng& rng, int in, int out)
    : weight_(he_normal<T>(rng, out, in, kKernel, kKernel)),
      bias_(parameter_filled<T>(Shape{1, out, 1, 1}, T(0))),
      offsets_(rng, in, kOffsetChannels, kKernel, 1, kKernel / 2) {
  offsets_.weight().mutable_value().fill(T(0));
}

template <typename T>
Var<T> DeformableConv<T>::forward(const Var<T>& x) const {
  return forward_with_offsets(x, offsets_.forward(x));
}

template <typename T>
Var<T> DeformableConv<T>::forward_with_offsets(const Var<T>& x,
                                               const Var<T>& offsets) const {
  return ops::deform_conv2d(x, offsets, weight_, bias_,
                            ops::ConvGeometry{1, kKernel / 2});
}

template <typename T>
Var<T> DeformableConv<T>::forward_regular(const Var<T>& x) const {
  return ops::conv2d(x, weight_, bias_, ops::ConvGeometry{1, kKernel / 2});
}

template <typename T>
void DeformableConv<T>::visit(const std::string& prefix, StateVisitor<T>& v) {
  v.parameter(join_name(prefix, "weight"), weight_);
  v.parameter(join_name(prefix, "bias"), bias_);
  offsets_.visit(join_name(prefix, "offset"), v);
}

void AttentionConfig::validate() const {
  if (d_k < 1) throw ConfigError("attention d_k must be >= 1");
  if (max_tokens < 1) throw ConfigError("attention max_tokens must be >= 1");
}

template <typename T>
AttentionLink<T>::AttentionLink(Rng& rng, int channels, AttentionConfig config)
    : config_(config),
      query_(rng, channels, config.d_k, 1, 1, 0),
      key_(rng, channels, config.d_k, 1, 1, 0),
      value_(rng, channels, config.d_k, 1, 1, 0),
      output_(rng, config.d_k, channels, 1, 1, 0) {
  config_.validate();
  // Start as a no-op contribution; the link learns its way in.
  output_.weight().mutable_value().fill(T(0));
}

template <typename T>
typename AttentionLink<T>::Prepared AttentionLink<T>::prepare(
    const Var<T>& hr_tap, const Var<T>& lr_deformed) const {
  const Shape hs = hr_tap.shape();
  const Shape ls = lr_deformed.shape();
  if (ls.n != hs.n || ls.c != hs.c || ls.h * 2 != hs.h || ls.w * 2 != hs.w) {
    throw ShapeError("attention: LR tap " + ls.str() +
                     " must have half the spatial size of HR tap " + hs.str());
  }
  if (hs.c != query_.in_channels()) {
    throw ShapeError("attention: expected " + std::to_string(query_.in_channels()) +
                     " channels, got " + hs.str());
  }
  Prepared p{hr_tap, ops::resize_bilinear(lr_deformed, hs.h, hs.w), 0};
  while (p.hr.shape().plane() > static_cast<std::size_t>(config_.max_tokens)) {
    if (!config_.pool_oversize) {
      throw CapacityError("attention over " + std::to_string(hs.h * hs.w) +
                          " tokens exceeds max_tokens=" +
                          std::to_string(config_.max_tokens) +
                          "; enable pool_oversize or use a smaller input");
    }
    if (p.hr.shape().h % 2 || p.hr.shape().w % 2) {
      throw CapacityError("attention tap " + p.hr.shape().str() +
                          " cannot be pooled below max_tokens");
    }
    p.hr = ops::avg_pool2x2(p.hr);
    p.lr = ops::avg_pool2x2(p.lr);
    ++p.pooled;
  }
  return p;
}

template <typename T>
Var<T> AttentionLink<T>::encoder(const Var<T>& hr_tap,
                                 const Var<T>& lr_deformed) const {
  Prepared p = prepare(hr_tap, lr_deformed);
  Var<T> attended = ops::scaled_dot_attention(
      query_.forward(p.hr), key_.forward(p.lr), value_.forward(p.hr));
  Var<T> out = output_.forward(attended);
  for (int i = 0; i < p.pooled; ++i) out = ops::upsample_nearest2x(out);
  return out;
}

template <typename T>
Var<T> AttentionLink<T>::decoder(const Var<T>& hr_tap, const Var<T>& lr_deformed,
                                 const Var<T>& skip) const {
  require_same_shape(skip.shape(), hr_tap.shape(), "attention decoder skip");
  return ops::add(encoder(hr_tap, lr_deformed), skip);
}

template <typename T>
Tensor<T> AttentionLink<T>::weights(const Var<T>& hr_tap,
                                    const Var<T>& lr_deformed) const {
  NoGradGuard guard;
  Prepared p = prepare(hr_tap, lr_deformed);
  return ops::attention_weights(query_.forward(p.hr).value(),
                                key_.forward(p.lr).value());
}

template <typename T>
void AttentionLink<T>::visit(const std::string& prefix, StateVisitor<T>& v) {
  query_.visit(join_name(prefix, "query"), v);
  key_.visit(join_name(prefix, "key"), v);
  value_.visit(join_name(prefix, "value"), v);
  output_.visit(join_name(prefix, "output"), v);
}

template class DeformableConv<float>;
template class DeformableConv<double>;
template class AttentionLink<float>;
template class AttentionLink<double>;

}  // namespace madanet
