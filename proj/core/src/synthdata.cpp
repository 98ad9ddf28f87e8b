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

#include "madanet/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>

#include "config_json.hpp"
#include "json.hpp"
#include "madanet/image_io.hpp"
#include "madanet/targets.hpp"

namespace madanet {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr double kDegToRad = std::numbers::pi / 180.0;

double hash_uniform(std::uint64_t seed, std::int64_t a, std::int64_t b) {
  const std::uint64_t key = static_cast<std::uint64_t>(a) * 0x9E3779B1ULL ^
                            static_cast<std::uint64_t>(b) * 0x85EBCA77C2B2AE63ULL;
  return static_cast<double>(Rng::derive(seed, key) >> 11) * 0x1.0p-53;
}

// Smooth lattice noise in [0, 1].
double value_noise(std::uint64_t seed, double x, double y, double cell) {
  const double gx = x / cell, gy = y / cell;
  const auto ix = static_cast<std::int64_t>(std::floor(gx));
  const auto iy = static_cast<std::int64_t>(std::floor(gy));
  double tx = gx - ix, ty = gy - iy;
  tx = tx * tx * (3 - 2 * tx);
  ty = ty * ty * (3 - 2 * ty);
  const double v00 = hash_uniform(seed, ix, iy);
  const double v10 = hash_uniform(seed, ix + 1, iy);
  const double v01 = hash_uniform(seed, ix, iy + 1);
  const double v11 = hash_uniform(seed, ix + 1, iy + 1);
  return (v00 * (1 - tx) + v10 * tx) * (1 - ty) + (v01 * (1 - tx) + v11 * tx) * ty;
}

struct Ellipse {
  double cx, cy, a, b, cos_t, sin_t;
  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double u = (dx * cos_t + dy * sin_t) / a;
    const double v = (-dx * sin_t + dy * cos_t) / b;
    return u * u + v * v <= 1.0;
  }
};

struct BlobParts {
  Ellipse body;
  Ellipse wings[2];
};

BlobParts blob_parts(const Blob& blob) {
  const double L = blob.length;
  const double ct = std::cos(blob.rotation), st = std::sin(blob.rotation);
  BlobParts parts{{blob.cx, blob.cy, 0.5 * L, 0.17 * L, ct, st}, {}, };
  const double root_x = blob.cx + 0.08 * L * ct;
  const double root_y = blob.cy + 0.08 * L * st;
  for (int s = 0; s < 2; ++s) {
    const double side = s == 0 ? -1.0 : 1.0;
    const double phi = blob.rotation + side * (std::numbers::pi / 2 + blob.fold);
    const double cp = std::cos(phi), sp = std::sin(phi);
    parts.wings[s] = {root_x + 0.3 * L * cp, root_y + 0.3 * L * sp, 0.32 * L,
                      0.15 * L, cp, sp};
  }
  return parts;
}

// 0 = uncovered, 1 = body, 2 = wing.
int coverage(const BlobParts& parts, int px, int py) {
  const double x = px + 0.5, y = py + 0.5;
  if (parts.body.contains(x, y)) return 1;
  if (parts.wings[0].contains(x, y) || parts.wings[1].contains(x, y)) return 2;
  return 0;
}

struct Window {
  int x0, y0, x1, y1;
};

Window blob_window(const Blob& blob) {
  const double reach = 0.8 * blob.length + 1.0;
  return {static_cast<int>(std::floor(blob.cx - reach)),
          static_cast<int>(std::floor(blob.cy - reach)),
          static_cast<int>(std::ceil(blob.cx + reach)) + 1,
          static_cast<int>(std::ceil(blob.cy + reach)) + 1};
}

void paint_background(Tensor<float>& image, const SceneConfig& config,
                      std::uint64_t scene_seed, Rng& rng) {
  const float base[3] = {0.86f, 0.84f, 0.72f};
  const double shade = rng.uniform(-0.04, 0.04);
  const int n = config.image_size;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double coarse = value_noise(config.background_texture_seed, x, y, 24.0);
      const double fine = value_noise(config.background_texture_seed ^ 0xF00D, x, y, 5.0);
      const double grain = hash_uniform(scene_seed, x, y);
      const double f = 0.9 + 0.08 * coarse + 0.04 * fine + 0.02 * grain + shade;
      for (int c = 0; c < 3; ++c) image(0, c, y, x) = static_cast<float>(base[c] * f);
    }
  }
}

void paint_blob(Tensor<float>& image, const Blob& blob, std::uint64_t seed, int index) {
  const BlobParts parts = blob_parts(blob);
  const Window win = blob_window(blob);
  const int n = image.shape().w;
  for (int y = std::max(0, win.y0); y < std::min(n, win.y1); ++y) {
    for (int x = std::max(0, win.x0); x < std::min(n, win.x1); ++x) {
      const int part = coverage(parts, x, y);
      if (!part) continue;
      const double speckle = 0.9 + 0.1 * hash_uniform(seed + index, x, y);
      const double tone = (part == 1 ? 0.7 : 1.0) * speckle;
      for (int c = 0; c < 3; ++c) {
        image(0, c, y, x) = static_cast<float>(blob.tint[c] * tone);
      }
    }
  }
}

}  // namespace

void SceneConfig::validate() const {
  if (image_size < 64) throw ConfigError("image_size must be >= 64");
  if (count_range.first < 0 || count_range.first > count_range.second) {
    throw ConfigError("count_range must satisfy 0 <= min <= max");
  }
  if (!(blob_scale_range.first > 0) || blob_scale_range.first > blob_scale_range.second) {
    throw ConfigError("blob_scale_range must satisfy 0 < min <= max");
  }
  if (rotation_range.first > rotation_range.second) {
    throw ConfigError("rotation_range must satisfy min <= max");
  }
  if (occlusion_target < 0 || occlusion_target > 1) {
    throw ConfigError("occlusion_target must be in [0, 1]");
  }
  if (max_retries < 1) throw ConfigError("max_retries must be >= 1");
}

void DatasetConfig::validate() const {
  scene.validate();
  if (count < 0) throw ConfigError("count must be >= 0");
  if (!(train_ratio >= 0 && train_ratio <= 1)) throw ConfigError("train_ratio must be in [0, 1]");
}

DatasetConfig parse_dataset_config(const std::string& json_text) {
  nlohmann::json j = detail::parse_json(json_text, "dataset config");
  if (!j.is_object()) throw ConfigError("dataset config: expected a JSON object");
  DatasetConfig c;
  try {
    if (j.contains("count")) c.count = j["count"].get<int>();
    if (j.contains("train_ratio")) c.train_ratio = j["train_ratio"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset config: ") + e.what());
  }
  j.erase("count");
  j.erase("train_ratio");
  j.erase("seed");
  detail::read_into(j, c.scene, "dataset");
  c.validate();
  return c;
}

std::string dataset_config_to_json(const DatasetConfig& c) {
  nlohmann::json j = detail::to_json_value(c.scene);
  j["count"] = c.count;
  j["train_ratio"] = c.train_ratio;
  j["seed"] = c.seed;
  return j.dump(2);
}

bool blob_covers(const Blob& blob, int px, int py) {
  return coverage(blob_parts(blob), px, py) != 0;
}

PixelBounds blob_pixel_bounds(const Blob& blob) {
  const BlobParts parts = blob_parts(blob);
  const Window win = blob_window(blob);
  PixelBounds b{win.x1, win.y1, win.x0, win.y0};
  for (int y = win.y0; y < win.y1; ++y) {
    for (int x = win.x0; x < win.x1; ++x) {
      if (!coverage(parts, x, y)) continue;
      b.x0 = std::min(b.x0, x);
      b.y0 = std::min(b.y0, y);
      b.x1 = std::max(b.x1, x + 1);
      b.y1 = std::max(b.y1, y + 1);
    }
  }
  if (b.x1 <= b.x0) return PixelBounds{};
  return b;
}

GeneratedScene generate_scene_detailed(const SceneConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const int n = config.image_size;
  const int count =
      static_cast<int>(rng.uniform_int(config.count_range.first, config.count_range.second));
  GeneratedScene out;
  AnnotatedScene& scene = out.scene;
  scene.image = Tensor<float>(Shape{1, 3, n, n});
  scene.seed = seed;
  paint_background(scene.image, config, seed, rng);
  for (int i = 0; i < count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < config.max_retries && !placed; ++attempt) {
      Blob blob;
      blob.cx = rng.uniform(0, n);
      blob.cy = rng.uniform(0, n);
      blob.length = rng.uniform(config.blob_scale_range.first, config.blob_scale_range.second);
      blob.rotation =
          rng.uniform(config.rotation_range.first, config.rotation_range.second) * kDegToRad;
      blob.fold = rng.uniform(0.15, 0.8);
      const double jitter = rng.normal(0.0, 0.03);
      blob.tint[0] = static_cast<float>(0.42 + jitter);
      blob.tint[1] = static_cast<float>(0.30 + jitter);
      blob.tint[2] = static_cast<float>(0.18 + 0.5 * jitter);
      const PixelBounds pb = blob_pixel_bounds(blob);
      if (pb.x1 <= pb.x0 || pb.x0 < 0 || pb.y0 < 0 || pb.x1 > n || pb.y1 > n) continue;
      const BoxAnnotation box{static_cast<double>(pb.x0), static_cast<double>(pb.y0),
                              static_cast<double>(pb.x1 - pb.x0),
                              static_cast<double>(pb.y1 - pb.y0), 0};
      const bool too_close = std::any_of(scene.boxes.begin(), scene.boxes.end(),
                                         [&](const BoxAnnotation& other) {
                                           return box_iou(box, other) > config.occlusion_target;
                                         });
      if (too_close) continue;
      scene.boxes.push_back(box);
      out.blobs.push_back(blob);
      placed = true;
    }
    if (!placed) {
      throw PlacementError("placed " + std::to_string(scene.boxes.size()) + " of " +
                           std::to_string(count) + " objects within occlusion target " +
                           std::to_string(config.occlusion_target));
    }
  }
  for (std::size_t i = 0; i < out.blobs.size(); ++i) {
    paint_blob(scene.image, out.blobs[i], seed, static_cast<int>(i));
  }
  quantize_u8(scene.image);
  return out;
}

AnnotatedScene generate_scene(const SceneConfig& config, std::uint64_t seed) {
  return generate_scene_detailed(config, seed).scene;
}

DatasetSplit generate_dataset(const SceneConfig& config, int count,
                              std::uint64_t master_seed, double train_ratio) {
  if (count < 0) throw ConfigError("scene count must be >= 0");
  if (train_ratio < 0 || train_ratio > 1) throw ConfigError("train_ratio must be in [0, 1]");
  std::vector<AnnotatedScene> scenes;
  scenes.reserve(count);
  for (int i = 0; i < count; ++i) {
    AnnotatedScene s = generate_scene(config, Rng::derive(master_seed, i));
    char id[32];
    std::snprintf(id, sizeof(id), "scene_%06d", i);
    s.scene_id = id;
    scenes.push_back(std::move(s));
  }
  std::vector<int> order(count);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle(Rng::derive(master_seed, 0x5917ULL << 32));
  for (int i = count - 1; i > 0; --i) {
    std::swap(order[i], order[shuffle.uniform_int(0, i)]);
  }
  const int train_count = static_cast<int>(std::lround(train_ratio * count));
  DatasetSplit split;
  std::vector<int> train(order.begin(), order.begin() + train_count);
  std::vector<int> test(order.begin() + train_count, order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  for (int i : train) split.train.push_back(std::move(scenes[i]));
  for (int i : test) split.test.push_back(std::move(scenes[i]));
  return split;
}

AugmentOp parse_augment_op(const std::string& text) {
  std::string name = text;
  std::optional<double> param;
  const auto open = text.find('(');
  if (open != std::string::npos) {
    if (text.back() != ')') throw ConfigError("malformed augmentation '" + text + "'");
    name = text.substr(0, open);
    try {
      param = std::stod(text.substr(open + 1, text.size() - open - 2));
    } catch (const std::exception&) {
      throw ConfigError("malformed augmentation parameter in '" + text + "'");
    }
  }
  AugmentOp op;
  op.param = param;
  if (name == "hflip") {
    op.kind = AugmentOp::Kind::kHFlip;
  } else if (name == "contrast") {
    op.kind = AugmentOp::Kind::kContrast;
  } else if (name == "brightness") {
    op.kind = AugmentOp::Kind::kBrightness;
  } else if (name == "saturation") {
    op.kind = AugmentOp::Kind::kSaturation;
  } else {
    throw ConfigError("unknown augmentation '" + name + "'");
  }
  return op;
}

AnnotatedScene augment(const AnnotatedScene& scene, const std::vector<AugmentOp>& ops,
                       std::uint64_t seed) {
  Rng rng(seed);
  AnnotatedScene out = scene;
  Tensor<float>& img = out.image;
  const int h = img.shape().h, w = img.shape().w;
  const std::size_t plane = img.shape().plane();
  for (const auto& op : ops) {
    switch (op.kind) {
      case AugmentOp::Kind::kHFlip: {
        for (int c = 0; c < 3; ++c)
          for (int y = 0; y < h; ++y) {
            float* row = img.plane(0, c) + static_cast<std::size_t>(y) * w;
            std::reverse(row, row + w);
          }
        for (auto& b : out.boxes) b.x_min = w - b.x_min - b.width;
        break;
      }
      case AugmentOp::Kind::kContrast: {
        const float f = static_cast<float>(op.param.value_or(rng.uniform(0.8, 1.2)));
        double total = 0;
        for (std::size_t i = 0; i < plane; ++i)
          total += 0.299 * img.plane(0, 0)[i] + 0.587 * img.plane(0, 1)[i] +
                   0.114 * img.plane(0, 2)[i];
        const float mean = static_cast<float>(total / plane);
        for (auto& v : img.span()) v = v * f + mean * (1.0f - f);
        break;
      }
      case AugmentOp::Kind::kBrightness: {
        const float b = static_cast<float>(op.param.value_or(rng.uniform(-0.1, 0.1)));
        for (auto& v : img.span()) v = v + b;
        break;
      }
      case AugmentOp::Kind::kSaturation: {
        const float s = static_cast<float>(op.param.value_or(rng.uniform(0.8, 1.2)));
        for (std::size_t i = 0; i < plane; ++i) {
          float* r = img.plane(0, 0) + i;
          float* g = img.plane(0, 1) + i;
          float* bl = img.plane(0, 2) + i;
          const float gray = 0.299f * *r + 0.587f * *g + 0.114f * *bl;
          *r = *r * s + gray * (1.0f - s);
          *g = *g * s + gray * (1.0f - s);
          *bl = *bl * s + gray * (1.0f - s);
        }
        break;
      }
    }
    for (auto& v : img.span()) v = std::clamp(v, 0.0f, 1.0f);
  }
  quantize_u8(img);
  return out;
}

AnnotatedScene random_augment(const AnnotatedScene& scene, Rng& rng) {
  std::vector<AugmentOp> ops;
  if (rng.uniform() < 0.5) ops.push_back({AugmentOp::Kind::kHFlip, std::nullopt});
  ops.push_back({AugmentOp::Kind::kContrast, rng.uniform(0.8, 1.2)});
  ops.push_back({AugmentOp::Kind::kBrightness, rng.uniform(-0.1, 0.1)});
  ops.push_back({AugmentOp::Kind::kSaturation, rng.uniform(0.8, 1.2)});
  return augment(scene, ops, 0);
}

void save_dataset(const std::vector<AnnotatedScene>& scenes, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ec) throw IoError("cannot create " + (dir / "images").string() + ": " + ec.message());
  json images = json::array();
  json annotations = json::array();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const AnnotatedScene& s = scenes[i];
    std::string stem = s.scene_id;
    if (stem.empty()) {
      char id[32];
      std::snprintf(id, sizeof(id), "scene_%06zu", i);
      stem = id;
    }
    const std::string file = "images/" + stem + ".png";
    write_png(dir / file, s.image);
    images.push_back({{"id", i}, {"file", file}, {"width", s.width()}, {"height", s.height()}});
    for (const auto& b : s.boxes) {
      annotations.push_back({{"image_id", i},
                             {"bbox", {b.x_min, b.y_min, b.width, b.height}},
                             {"class_id", b.class_id}});
    }
  }
  const json doc{{"images", images}, {"annotations", annotations}};
  std::ofstream os(dir / "annotations.json");
  if (!os) throw IoError("cannot write " + (dir / "annotations.json").string());
  os << doc.dump(1) << "\n";
}

std::vector<AnnotatedScene> load_dataset(const fs::path& dir) {
  const fs::path ann = dir / "annotations.json";
  std::ifstream is(ann);
  if (!is) throw LoadError("cannot open " + ann.string());
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::exception& e) {
    throw LoadError("malformed JSON in " + ann.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("images") || !doc["images"].is_array() ||
      !doc.contains("annotations") || !doc["annotations"].is_array()) {
    throw LoadError(ann.string() + ": expected 'images' and 'annotations' arrays");
  }
  std::vector<AnnotatedScene> scenes;
  std::map<long long, std::size_t> index_of;
  const auto& images = doc["images"];
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& rec = images[i];
    const std::string where = "image record " + std::to_string(i);
    try {
      const long long id = rec.at("id").get<long long>();
      const std::string file = rec.at("file").get<std::string>();
      const int width = rec.at("width").get<int>();
      const int height = rec.at("height").get<int>();
      if (!fs::exists(dir / file)) throw LoadError(where + ": missing image file " + file);
      AnnotatedScene s;
      s.image = read_png(dir / file);
      if (s.width() != width || s.height() != height) {
        throw LoadError(where + ": image is " + std::to_string(s.width()) + "x" +
                        std::to_string(s.height()) + ", record says " +
                        std::to_string(width) + "x" + std::to_string(height));
      }
      s.scene_id = fs::path(file).stem().string();
      if (!index_of.emplace(id, scenes.size()).second) {
        throw LoadError(where + ": duplicate id " + std::to_string(id));
      }
      scenes.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw LoadError(where + ": " + e.what());
    } catch (const IoError& e) {
      throw LoadError(where + ": " + e.what());
    }
  }
  const auto& anns = doc["annotations"];
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const auto& rec = anns[i];
    const std::string where = "annotation record " + std::to_string(i);
    try {
      const long long image_id = rec.at("image_id").get<long long>();
      const auto& bbox = rec.at("bbox");
      if (!bbox.is_array() || bbox.size() != 4) throw LoadError(where + ": bbox must have 4 numbers");
      auto it = index_of.find(image_id);
      if (it == index_of.end()) {
        throw LoadError(where + ": unknown image_id " + std::to_string(image_id));
      }
      AnnotatedScene& s = scenes[it->second];
      BoxAnnotation b{bbox[0].get<double>(), bbox[1].get<double>(), bbox[2].get<double>(),
                      bbox[3].get<double>(), rec.value("class_id", 0)};
      try {
        validate_box(b, s.width(), s.height(), where);
      } catch (const InvalidAnnotation& e) {
        throw LoadError(e.what());
      }
      s.boxes.push_back(b);
    } catch (const json::exception& e) {
      throw LoadError(where + ": " + e.what());
    }
  }
  return scenes;
}

}  // namespace madanet
