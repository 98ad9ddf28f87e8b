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

#include "madanet/optimizer.hpp"

#include <cmath>

namespace madanet {

void AdamConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning rate must be > 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw ConfigError("Adam betas must be in [0, 1)");
  }
  if (!(epsilon > 0)) throw ConfigError("Adam epsilon must be > 0");
}

Adam::Adam(AdamConfig config, Parameters params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  for (auto& [name, p] : params_) {
    m_.emplace_back(p->shape());
    v_.emplace_back(p->shape());
  }
}

void Adam::zero_grad() {
  for (auto& [name, p] : params_) p->zero_grad();
}

double Adam::clip_grad_norm(double max_norm) {
  double sq = 0;
  for (auto& [name, p] : params_) {
    if (p->grad().empty()) continue;
    for (float g : p->grad().span()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const float s = static_cast<float>(max_norm / norm);
    for (auto& [name, p] : params_) {
      if (p->grad().empty()) continue;
      for (float& g : p->mutable_grad().span()) g *= s;
    }
  }
  return norm;
}

void Adam::step() {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1 - std::pow(b2, static_cast<double>(t_));
  const double lr = config_.learning_rate;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var<float>& p = *params_[i].second;
    if (p.grad().empty()) continue;
    const float* g = p.grad().data();
    float* w = p.mutable_value().data();
    float* m = m_[i].data();
    float* v = v_[i].data();
    for (std::size_t k = 0; k < m_[i].size(); ++k) {
      m[k] = static_cast<float>(b1 * m[k] + (1 - b1) * g[k]);
      v[k] = static_cast<float>(b2 * v[k] + (1 - b2) * static_cast<double>(g[k]) * g[k]);
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      w[k] = static_cast<float>(w[k] - lr * mhat / (std::sqrt(vhat) + config_.epsilon));
    }
  }
}

}  // namespace madanet
