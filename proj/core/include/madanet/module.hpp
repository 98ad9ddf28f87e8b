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
#include <string>
#include <utility>
#include <vector>

#include "madanet/autograd.hpp"
#include "madanet/ops.hpp"
#include "madanet/rng.hpp"

namespace madanet {

enum class Phase { kTrain, kEval };

/// Walks the named state of a module tree in a fixed order.
template <typename T>
class StateVisitor {
 public:
  virtual ~StateVisitor() = default;
  virtual void parameter(const std::string& name, Var<T>& value) = 0;
  virtual void buffer(const std::string& /*name*/, Tensor<T>& /*value*/) {}
};

template <typename T, typename Module>
std::vector<std::pair<std::string, Var<T>*>> named_parameters(Module& m) {
  struct Collect : StateVisitor<T> {
    std::vector<std::pair<std::string, Var<T>*>> out;
    void parameter(const std::string& name, Var<T>& v) override {
      out.emplace_back(name, &v);
    }
  } collect;
  m.visit("", collect);
  return std::move(collect.out);
}

template <typename T, typename Module>
std::size_t parameter_count(Module& m) {
  std::size_t total = 0;
  for (auto& [name, v] : named_parameters<T>(m)) total += v->value().size();
  return total;
}

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

/// Weight of shape (out, in, k, k) drawn from N(0, 2 / fan_in).
template <typename T>
Var<T> he_normal(Rng& rng, int out, int in, int kh, int kw) {
  Tensor<T> w(Shape{out, in, kh, kw});
  const double stddev = std::sqrt(2.0 / (static_cast<double>(in) * kh * kw));
  for (auto& v : w.span()) v = T(rng.normal() * stddev);
  return Var<T>(std::move(w), true);
}

template <typename T>
Var<T> parameter_filled(Shape shape, T value) {
  return Var<T>(Tensor<T>(shape, value), true);
}

}  // namespace madanet
