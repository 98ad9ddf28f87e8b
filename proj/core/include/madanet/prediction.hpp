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

#include "madanet/autograd.hpp"

namespace madanet {

/// One stage's predicted maps, all (N, ., h, w) with shared spatial dims.
/// The heatmap has already passed through the sigmoid.
template <typename T>
struct PredictionTriple {
  Var<T> heatmap;  // (N, C, h, w) in (0, 1)
  Var<T> offset;   // (N, 2, h, w), x then y, in cells
  Var<T> size;     // (N, 2, h, w), width then height, in cells
  int stride = 1;
};

}  // namespace madanet
