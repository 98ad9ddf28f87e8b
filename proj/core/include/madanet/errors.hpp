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

#include <stdexcept>
#include <string>

namespace madanet {

// Every error raised by the library carries a short machine-readable kind
// ("shape", "annotation", ...) so the CLI can emit a structured error line.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define MADANET_DEFINE_ERROR(Name, kind_string)                 \
  class Name : public Error {                                   \
   public:                                                      \
    explicit Name(const std::string& message)                   \
        : Error(kind_string, message) {}                        \
  }

MADANET_DEFINE_ERROR(ShapeError, "shape");
MADANET_DEFINE_ERROR(InvalidAnnotation, "annotation");
MADANET_DEFINE_ERROR(ConfigError, "config");
MADANET_DEFINE_ERROR(NumericError, "numeric");
MADANET_DEFINE_ERROR(CapacityError, "capacity");
MADANET_DEFINE_ERROR(PlacementError, "placement");
MADANET_DEFINE_ERROR(IoError, "io");
MADANET_DEFINE_ERROR(LoadError, "load");
MADANET_DEFINE_ERROR(EvalError, "eval");
MADANET_DEFINE_ERROR(ManifestError, "manifest");

#undef MADANET_DEFINE_ERROR

}  // namespace madanet
