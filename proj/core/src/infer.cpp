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

#include "madanet/infer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "madanet/checkpoint.hpp"
#include "madanet/image_io.hpp"
#include "madanet/ops.hpp"

namespace madanet {

InferResult infer_image(MadaCenterNet<float>& net, const Tensor<float>& image,
                        const DecodeOptions& options) {
  const Shape s = image.shape();
  if (s.n != 1 || s.c != 3) throw ShapeError("infer expects one RGB image, got " + s.str());
  const int size = net.config().input_size;
  NoGradGuard guard;
  Var<float> x(image, false);
  if (s.h != size || s.w != size) x = ops::resize_bilinear(x, size, size);
  auto out = net.forward(x, Phase::kEval);
  InferResult r;
  r.width = s.w;
  r.height = s.h;
  r.lr_maps = prediction_maps(out.lr, 0);
  r.hr_maps = prediction_maps(out.hr, 0);
  r.lr = decode(r.lr_maps, options);
  r.hr = decode(r.hr_maps, options);
  const double sx = static_cast<double>(s.w) / size;
  const double sy = static_cast<double>(s.h) / size;
  for (auto* list : {&r.lr, &r.hr}) {
    for (Detection& d : *list) {
      d.center_x *= sx;
      d.center_y *= sy;
      d.box.x_min *= sx;
      d.box.y_min *= sy;
      d.box.width *= sx;
      d.box.height *= sy;
    }
  }
  return r;
}

std::array<std::uint8_t, 3> hot_color(float t) {
  auto ramp = [t](float shift) { return to_u8(3.0f * t - shift); };
  return {ramp(0), ramp(1), ramp(2)};
}

std::vector<std::uint8_t> draw_detections(const Tensor<float>& image,
                                          const std::vector<Detection>& detections) {
  const int w = image.shape().w, h = image.shape().h;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) rgb[(y * w + x) * 3 + c] = to_u8(image(0, c, y, x));
  auto put = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    std::uint8_t* p = &rgb[(y * w + x) * 3];
    p[0] = 0;
    p[1] = 255;
    p[2] = 0;
  };
  for (const Detection& d : detections) {
    const int x0 = static_cast<int>(std::floor(d.box.x_min));
    const int y0 = static_cast<int>(std::floor(d.box.y_min));
    const int x1 = static_cast<int>(std::ceil(d.box.x_min + d.box.width)) - 1;
    const int y1 = static_cast<int>(std::ceil(d.box.y_min + d.box.height)) - 1;
    for (int x = x0; x <= x1; ++x) {
      put(x, y0);
      put(x, y1);
    }
    for (int y = y0; y <= y1; ++y) {
      put(x0, y);
      put(x1, y);
    }
  }
  return rgb;
}

std::vector<std::uint8_t> render_heatmaps(const PredictionMaps& lr, const PredictionMaps& hr,
                                          int scale, int* width, int* height) {
  constexpr int kGutter = 4;
  Tensor<float> lr_up;
  {
    NoGradGuard guard;
    lr_up = ops::upsample_bicubic2x(Var<float>(lr.heatmap, false)).value();
  }
  const Shape hs = hr.heatmap.shape();
  if (lr_up.shape().h != hs.h || lr_up.shape().w != hs.w) {
    throw ShapeError("LR heatmap " + lr.heatmap.shape().str() + " is not half of HR " +
                     hs.str());
  }
  const int pw = hs.w * scale, ph = hs.h * scale;
  *width = 2 * pw + kGutter;
  *height = ph;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(*width) * ph * 3, 255);
  auto paint = [&](const Tensor<float>& map, int x_origin) {
    for (int y = 0; y < ph; ++y) {
      for (int x = 0; x < pw; ++x) {
        // Class maximum per cell.
        float v = 0;
        for (int c = 0; c < map.shape().c; ++c) v = std::max(v, map(0, c, y / scale, x / scale));
        const auto col = hot_color(std::clamp(v, 0.0f, 1.0f));
        std::copy(col.begin(), col.end(), &rgb[(y * *width + x_origin + x) * 3]);
      }
    }
  };
  paint(lr_up, 0);
  paint(hr.heatmap, pw + kGutter);
  return rgb;
}

void run_inference(const std::filesystem::path& ckpt, const std::filesystem::path& image_path,
                   const std::filesystem::path& out_dir, const DecodeOptions& options) {
  LoadedCheckpoint loaded = load_checkpoint(ckpt);
  Tensor<float> image = read_png(image_path);
  InferResult r = infer_image(*loaded.net, image, options);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  nlohmann::json j;
  j["image"] = image_path.string();
  j["width"] = r.width;
  j["height"] = r.height;
  j["count"] = r.hr.size();
  j["lr_count"] = r.lr.size();
  j["detections"] = nlohmann::json::parse(detections_to_json(r.hr));
  j["lr_detections"] = nlohmann::json::parse(detections_to_json(r.lr));
  const auto json_path = out_dir / "detections.json";
  std::ofstream out(json_path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + json_path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing " + json_path.string());

  write_png_rgb8(out_dir / "overlay.png", r.width, r.height, draw_detections(image, r.hr));
  int w = 0, h = 0;
  const auto maps = render_heatmaps(r.lr_maps, r.hr_maps, loaded.model.hr_stride, &w, &h);
  write_png_rgb8(out_dir / "heatmaps.png", w, h, maps);
}

}  // namespace madanet
