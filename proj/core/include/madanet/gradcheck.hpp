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

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "madanet/autograd.hpp"

namespace madanet {

enum class Precision { kFloat, kDouble };

struct GradcheckGroup {
  std::string name;
  std::size_t checked = 0;  // elements perturbed
  double max_rel_error = 0;
};

struct GradcheckReport {
  std::string op;
  Precision precision = Precision::kDouble;
  double step = 0;
  std::vector<GradcheckGroup> groups;

  double max_rel_error() const;
  bool passed(double tolerance) const { return max_rel_error() < tolerance; }
  std::string to_json() const;
};

/// Names accepted by gradcheck().
const std::vector<std::string>& gradcheck_ops();

/// Central differences (step 1e-5 in double, 1e-3 in float) against the
/// analytic gradient of a small instance of `op`. Each group's error is
/// max|analytic - numeric| / max(max|analytic|, max|numeric|, floor), where
/// floor is 1e-6 (double) or 1e-3 (float) times max(1, |loss|).
/// Unknown names throw ConfigError.
GradcheckReport gradcheck(const std::string& op, std::uint64_t seed = 0,
                          Precision precision = Precision::kDouble);

/// The core comparison, exposed for tests: `loss` rebuilds the scalar from
/// the current leaf values; every element of each group (up to
/// `max_elements`, evenly spaced) is perturbed.
template <typename T>
std::vector<GradcheckGroup> compare_gradients(
    const std::function<Var<T>()>& loss,
    const std::vector<std::pair<std::string, Var<T>*>>& groups, double step,
    std::size_t max_elements = 64);

}  // namespace madanet
