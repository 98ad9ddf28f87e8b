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

#include <map>
#include <span>
#include <string>
#include <vector>

#include "madanet/prediction.hpp"
#include "madanet/scene.hpp"
#include "madanet/targets.hpp"

namespace madanet {

/// One stage's maps for a single image, detached from the graph.
struct PredictionMaps {
  Tensor<float> heatmap;  // (1, C, h, w)
  Tensor<float> offset;   // (1, 2, h, w)
  Tensor<float> size;     // (1, 2, h, w)
  int stride = 1;
};

/// Item `index` of a batched prediction.
template <typename T>
PredictionMaps prediction_maps(const PredictionTriple<T>& pred, int index);

/// Treats rendered targets as a perfect prediction.
PredictionMaps prediction_maps(const TargetMaps& targets);

struct Peak {
  int x = 0;
  int y = 0;
  int class_id = 0;
  float score = 0;
};

struct DecodeOptions {
  int kernel = 3;
  float threshold = 0.3f;
  int max_detections = 256;
};

/// Cells that equal the maximum of their kernel x kernel neighborhood and
/// exceed the threshold, highest score first (equal scores in row-major
/// cell order), truncated to max_detections.
std::vector<Peak> extract_peaks(const Tensor<float>& heatmap, const DecodeOptions& options = {});

struct Detection {
  double center_x = 0;
  double center_y = 0;
  BoxAnnotation box;
  double score = 0;
  int class_id = 0;
};

struct DecodeDiagnostics {
  int clamped_sizes = 0;  // predicted extents below one pixel
};

/// center = (cell + offset) * stride, extent = size * stride, box centered on
/// center. Extents below one pixel are clamped to one and counted.
std::vector<Detection> decode_boxes(std::span<const Peak> peaks, const PredictionMaps& pred,
                                    DecodeDiagnostics* diagnostics = nullptr);

inline std::vector<Detection> decode(const PredictionMaps& pred,
                                     const DecodeOptions& options = {},
                                     DecodeDiagnostics* diagnostics = nullptr) {
  const auto peaks = extract_peaks(pred.heatmap, options);
  return decode_boxes(peaks, pred, diagnostics);
}

inline int absolute_error(int pred_count, int gt_count) {
  return pred_count > gt_count ? pred_count - gt_count : gt_count - pred_count;
}

struct ImageDetections {
  std::string image_id;
  std::vector<Detection> detections;
};

struct ImageTruth {
  std::string image_id;
  std::vector<BoxAnnotation> boxes;
};

struct ImageResult {
  std::string image_id;
  int gt_count = 0;
  int pred_count = 0;
  int abs_error = 0;
};

struct CountBin {
  int images = 0;
  double mean_ae = 0;
};

struct EvalReport {
  std::vector<ImageResult> per_image;
  double mae = 0;
  double ap = 0;
  long total_ae = 0;
  std::map<int, CountBin> ae_by_count;  // keyed by ground-truth count
  double iou_threshold = 0.5;
  double score_threshold = 0.3;

  std::string to_json() const;
  /// count,images,mean_ae rows.
  std::string ae_by_count_csv() const;
};

/// Counts use detections with score >= score_threshold; AP is all-point
/// interpolated over every supplied detection, matched greedily in score
/// order to the best unmatched box at IoU >= iou_threshold. Image ids must
/// match one to one.
EvalReport evaluate(std::span<const ImageDetections> detections,
                    std::span<const ImageTruth> truths, double iou_threshold = 0.5,
                    double score_threshold = 0.3);

/// Per ground-truth count: mean AE of `lr` minus mean AE of `hr`, as CSV
/// rows count,images,lr_mean_ae,hr_mean_ae,difference. Both reports must
/// cover the same images.
std::string ae_difference_csv(const EvalReport& lr, const EvalReport& hr);

/// [{"center":[x,y],"box":[x,y,w,h],"score":s,"class_id":c}, ...]
std::string detections_to_json(std::span<const Detection> detections);

}  // namespace madanet
