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
#include <utility>
#include <vector>

#include "madanet/autograd.hpp"

namespace madanet {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Adaptive-moment optimizer over a fixed, ordered parameter list.
class Adam {
 public:
  using Parameters = std::vector<std::pair<std::string, Var<float>*>>;

  Adam(AdamConfig config, Parameters params);

  void zero_grad();
  /// Rescales all gradients so their global L2 norm is at most max_norm and
  /// returns the norm before clipping. A non-positive max_norm disables it.
  double clip_grad_norm(double max_norm);
  void step();

  const AdamConfig& config() const { return config_; }
  const Parameters& parameters() const { return params_; }
  long steps() const { return t_; }
  void set_steps(long t) { t_ = t; }
  std::vector<Tensor<float>>& first_moments() { return m_; }
  std::vector<Tensor<float>>& second_moments() { return v_; }

 private:
  AdamConfig config_;
  Parameters params_;
  std::vector<Tensor<float>> m_;
  std::vector<Tensor<float>> v_;
  long t_ = 0;
};

}  // namespace madanet
