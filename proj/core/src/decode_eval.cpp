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

#include "madanet/decode_eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace madanet {

template <typename T>
PredictionMaps prediction_maps(const PredictionTriple<T>& pred, int index) {
  auto item = [index](const Var<T>& v) {
    const Shape s = v.shape();
    if (index < 0 || index >= s.n) {
      throw ShapeError("prediction index " + std::to_string(index) + " out of " + s.str());
    }
    Tensor<float> out(Shape{1, s.c, s.h, s.w});
    const T* src = v.value().plane(index, 0);
    std::transform(src, src + out.size(), out.data(), [](T x) { return float(x); });
    return out;
  };
  return {item(pred.heatmap), item(pred.offset), item(pred.size), pred.stride};
}

template PredictionMaps prediction_maps(const PredictionTriple<float>&, int);
template PredictionMaps prediction_maps(const PredictionTriple<double>&, int);

PredictionMaps prediction_maps(const TargetMaps& targets) {
  return {targets.heatmap, targets.offset_map, targets.size_map, targets.stride};
}

std::vector<Peak> extract_peaks(const Tensor<float>& heatmap, const DecodeOptions& options) {
  const Shape s = heatmap.shape();
  if (s.n != 1) throw ShapeError("extract_peaks expects one image, got " + s.str());
  if (options.kernel < 1 || options.kernel % 2 == 0) {
    throw ConfigError("peak kernel must be odd and positive");
  }
  const int r = options.kernel / 2;
  std::vector<Peak> peaks;
  for (int c = 0; c < s.c; ++c) {
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) {
        const float v = heatmap(0, c, y, x);
        if (!(v > options.threshold)) continue;
        bool is_max = true;
        for (int dy = -r; dy <= r && is_max; ++dy) {
          for (int dx = -r; dx <= r; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= s.h || xx < 0 || xx >= s.w) continue;
            if (heatmap(0, c, yy, xx) > v) {
              is_max = false;
              break;
            }
          }
        }
        if (is_max) peaks.push_back({x, y, c, v});
      }
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const Peak& a, const Peak& b) { return a.score > b.score; });
  if (options.max_detections >= 0 &&
      peaks.size() > static_cast<std::size_t>(options.max_detections)) {
    peaks.resize(options.max_detections);
  }
  return peaks;
}

std::vector<Detection> decode_boxes(std::span<const Peak> peaks, const PredictionMaps& pred,
                                    DecodeDiagnostics* diagnostics) {
  const Shape hs = pred.heatmap.shape();
  if (pred.offset.shape() != Shape{1, 2, hs.h, hs.w} ||
      pred.size.shape() != Shape{1, 2, hs.h, hs.w}) {
    throw ShapeError("decode_boxes: maps disagree with heatmap " + hs.str());
  }
  std::vector<Detection> out;
  out.reserve(peaks.size());
  const double stride = pred.stride;
  for (const Peak& p : peaks) {
    Detection d;
    d.center_x = (p.x + static_cast<double>(pred.offset(0, 0, p.y, p.x))) * stride;
    d.center_y = (p.y + static_cast<double>(pred.offset(0, 1, p.y, p.x))) * stride;
    double w = pred.size(0, 0, p.y, p.x) * stride;
    double h = pred.size(0, 1, p.y, p.x) * stride;
    if (w < 1 || h < 1) {
      if (diagnostics) ++diagnostics->clamped_sizes;
      w = std::max(w, 1.0);
      h = std::max(h, 1.0);
    }
    d.box = {d.center_x - w / 2, d.center_y - h / 2, w, h, p.class_id};
    d.score = p.score;
    d.class_id = p.class_id;
    out.push_back(d);
  }
  return out;
}

namespace {

// All-point interpolated area under the PR curve.
double average_precision(std::vector<std::pair<double, bool>> ranked, int positives) {
  if (positives == 0) return ranked.empty() ? 1.0 : 0.0;
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (const auto& [score, hit] : ranked) {
    (hit ? tp : fp)++;
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / positives);
  }
  for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i) {
    precision[i] = std::max(precision[i], precision[i + 1]);
  }
  double ap = 0, previous = 0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    ap += (recall[i] - previous) * precision[i];
    previous = recall[i];
  }
  return ap;
}

}  // namespace

EvalReport evaluate(std::span<const ImageDetections> detections,
                    std::span<const ImageTruth> truths, double iou_threshold,
                    double score_threshold) {
  if (!(iou_threshold > 0) || iou_threshold > 1) throw ConfigError("iou_threshold must be in (0, 1]");
  std::unordered_map<std::string, std::size_t> truth_index;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (!truth_index.emplace(truths[i].image_id, i).second) {
      throw EvalError("duplicate ground-truth image id '" + truths[i].image_id + "'");
    }
  }
  if (detections.size() != truths.size()) {
    throw EvalError(std::to_string(detections.size()) + " detection sets for " +
                    std::to_string(truths.size()) + " images");
  }
  EvalReport report;
  report.iou_threshold = iou_threshold;
  report.score_threshold = score_threshold;

  struct Ranked {
    double score;
    std::size_t image;
    std::size_t det;
  };
  std::vector<Ranked> ranked;
  std::vector<bool> claimed(truths.size(), false);
  int positives = 0;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    auto it = truth_index.find(detections[i].image_id);
    if (it == truth_index.end()) {
      throw EvalError("detections for unknown image id '" + detections[i].image_id + "'");
    }
    if (claimed[it->second]) {
      throw EvalError("duplicate detection set for image id '" + detections[i].image_id + "'");
    }
    claimed[it->second] = true;
    const ImageTruth& gt = truths[it->second];
    ImageResult r;
    r.image_id = gt.image_id;
    r.gt_count = static_cast<int>(gt.boxes.size());
    r.pred_count = static_cast<int>(std::count_if(
        detections[i].detections.begin(), detections[i].detections.end(),
        [&](const Detection& d) { return d.score >= score_threshold; }));
    r.abs_error = absolute_error(r.pred_count, r.gt_count);
    report.per_image.push_back(r);
    positives += r.gt_count;
    for (std::size_t k = 0; k < detections[i].detections.size(); ++k) {
      ranked.push_back({detections[i].detections[k].score, i, k});
    }
  }

  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Ranked& a, const Ranked& b) { return a.score > b.score; });
  std::vector<std::vector<bool>> matched(detections.size());
  for (std::size_t i = 0; i < detections.size(); ++i) {
    matched[i].assign(truths[truth_index.at(detections[i].image_id)].boxes.size(), false);
  }
  std::vector<std::pair<double, bool>> outcomes;
  outcomes.reserve(ranked.size());
  for (const Ranked& r : ranked) {
    const auto& boxes = truths[truth_index.at(detections[r.image].image_id)].boxes;
    const BoxAnnotation& box = detections[r.image].detections[r.det].box;
    int best = -1;
    double best_iou = iou_threshold;
    for (std::size_t g = 0; g < boxes.size(); ++g) {
      if (matched[r.image][g]) continue;
      const double iou = box_iou(box, boxes[g]);
      if (iou >= best_iou) {
        if (best < 0 || iou > best_iou) best = static_cast<int>(g);
        best_iou = iou;
      }
    }
    if (best >= 0) matched[r.image][best] = true;
    outcomes.emplace_back(r.score, best >= 0);
  }
  report.ap = average_precision(std::move(outcomes), positives);

  for (const auto& r : report.per_image) {
    report.total_ae += r.abs_error;
    CountBin& bin = report.ae_by_count[r.gt_count];
    bin.mean_ae += r.abs_error;
    bin.images++;
  }
  for (auto& [count, bin] : report.ae_by_count) bin.mean_ae /= bin.images;
  report.mae = report.per_image.empty()
                   ? 0.0
                   : static_cast<double>(report.total_ae) / report.per_image.size();
  return report;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["num_images"] = per_image.size();
  j["mae"] = mae;
  j["ap"] = ap;
  j["total_ae"] = total_ae;
  j["iou_threshold"] = iou_threshold;
  j["score_threshold"] = score_threshold;
  j["per_image"] = nlohmann::json::array();
  for (const auto& r : per_image) {
    j["per_image"].push_back({{"image_id", r.image_id},
                              {"gt_count", r.gt_count},
                              {"pred_count", r.pred_count},
                              {"ae", r.abs_error}});
  }
  j["ae_by_count"] = nlohmann::json::array();
  for (const auto& [count, bin] : ae_by_count) {
    j["ae_by_count"].push_back({{"count", count}, {"images", bin.images}, {"mean_ae", bin.mean_ae}});
  }
  return j.dump(2);
}

std::string EvalReport::ae_by_count_csv() const {
  std::ostringstream out;
  out << "count,images,mean_ae\n";
  char line[96];
  for (const auto& [count, bin] : ae_by_count) {
    std::snprintf(line, sizeof line, "%d,%d,%.6f\n", count, bin.images, bin.mean_ae);
    out << line;
  }
  return out.str();
}

std::string ae_difference_csv(const EvalReport& lr, const EvalReport& hr) {
  if (lr.ae_by_count.size() != hr.ae_by_count.size() ||
      lr.per_image.size() != hr.per_image.size()) {
    throw EvalError("LR and HR reports cover different images");
  }
  std::ostringstream out;
  out << "count,images,lr_mean_ae,hr_mean_ae,difference\n";
  char line[160];
  for (const auto& [count, bin] : lr.ae_by_count) {
    auto it = hr.ae_by_count.find(count);
    if (it == hr.ae_by_count.end() || it->second.images != bin.images) {
      throw EvalError("LR and HR reports disagree on count " + std::to_string(count));
    }
    std::snprintf(line, sizeof line, "%d,%d,%.6f,%.6f,%.6f\n", count, bin.images, bin.mean_ae,
                  it->second.mean_ae, bin.mean_ae - it->second.mean_ae);
    out << line;
  }
  return out.str();
}

std::string detections_to_json(std::span<const Detection> detections) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& d : detections) {
    j.push_back({{"center", {d.center_x, d.center_y}},
                 {"box", {d.box.x_min, d.box.y_min, d.box.width, d.box.height}},
                 {"score", d.score},
                 {"class_id", d.class_id}});
  }
  return j.dump(2);
}

}  // namespace madanet
