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

// JSON mapping for the configuration structs. Internal to the library.

#pragma once

#include <set>
#include <string>

#include "json.hpp"
#include "madanet/errors.hpp"
#include "madanet/losses.hpp"
#include "madanet/network.hpp"
#include "madanet/synthdata.hpp"

namespace madanet::detail {

using nlohmann::json;

/// Reads declared keys from one JSON object and rejects any others.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }

  template <typename V>
  void read(const char* key, V& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<V>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline json to_json_value(const HourglassConfig& c) {
  return {{"depth", c.depth}, {"channels", c.channels}};
}

inline void read_into(const json& j, HourglassConfig& c, const std::string& where) {
  ObjectReader r(j, where);
  r.read("depth", c.depth);
  r.read("channels", c.channels);
  r.finish();
}

inline json to_json_value(const AttentionConfig& c) {
  return {{"d_k", c.d_k}, {"max_tokens", c.max_tokens}, {"pool_oversize", c.pool_oversize}};
}

inline void read_into(const json& j, AttentionConfig& c, const std::string& where) {
  ObjectReader r(j, where);
  r.read("d_k", c.d_k);
  r.read("max_tokens", c.max_tokens);
  r.read("pool_oversize", c.pool_oversize);
  r.finish();
}

inline json to_json_value(const ModelConfig& c) {
  return {{"input_size", c.input_size},
          {"hr_stride", c.hr_stride},
          {"lr_stride", c.lr_stride},
          {"num_classes", c.num_classes},
          {"branch_channels", c.branch_channels},
          {"hourglass", to_json_value(c.hourglass)},
          {"attention", to_json_value(c.attention)},
          {"use_grkc", c.use_grkc},
          {"use_attention", c.use_attention},
          {"use_deformable", c.use_deformable}};
}

inline void read_into(const json& j, ModelConfig& c, const std::string& where) {
  ObjectReader r(j, where);
  r.read("input_size", c.input_size);
  r.read("hr_stride", c.hr_stride);
  r.read("lr_stride", c.lr_stride);
  r.read("num_classes", c.num_classes);
  r.read("branch_channels", c.branch_channels);
  if (auto* h = r.child("hourglass")) read_into(*h, c.hourglass, where + ".hourglass");
  if (auto* a = r.child("attention")) read_into(*a, c.attention, where + ".attention");
  r.read("use_grkc", c.use_grkc);
  r.read("use_attention", c.use_attention);
  r.read("use_deformable", c.use_deformable);
  r.finish();
}

inline json to_json_value(const LossConfig& c) {
  return {{"alpha", c.alpha},
          {"beta", c.beta},
          {"lambda_size", c.lambda_size},
          {"lambda_offset", c.lambda_offset},
          {"weight_lr", c.weight_lr},
          {"weight_hr", c.weight_hr},
          {"epsilon", c.epsilon}};
}

inline void read_into(const json& j, LossConfig& c, const std::string& where) {
  ObjectReader r(j, where);
  r.read("alpha", c.alpha);
  r.read("beta", c.beta);
  r.read("lambda_size", c.lambda_size);
  r.read("lambda_offset", c.lambda_offset);
  r.read("weight_lr", c.weight_lr);
  r.read("weight_hr", c.weight_hr);
  r.read("epsilon", c.epsilon);
  r.finish();
}

inline json to_json_value(const SceneConfig& c) {
  return {{"image_size", c.image_size},
          {"count_range", {c.count_range.first, c.count_range.second}},
          {"blob_scale_range", {c.blob_scale_range.first, c.blob_scale_range.second}},
          {"rotation_range", {c.rotation_range.first, c.rotation_range.second}},
          {"occlusion_target", c.occlusion_target},
          {"background_texture_seed", c.background_texture_seed},
          {"max_retries", c.max_retries}};
}

inline void read_into(const json& j, SceneConfig& c, const std::string& where) {
  ObjectReader r(j, where);
  r.read("image_size", c.image_size);
  r.read("count_range", c.count_range);
  r.read("blob_scale_range", c.blob_scale_range);
  r.read("rotation_range", c.rotation_range);
  r.read("occlusion_target", c.occlusion_target);
  r.read("background_texture_seed", c.background_texture_seed);
  r.read("max_retries", c.max_retries);
  r.finish();
}

inline json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(where + ": malformed JSON: " + e.what());
  }
}

}  // namespace madanet::detail
