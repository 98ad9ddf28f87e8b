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

#include "madanet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "json.hpp"
#include "madanet/backbone.hpp"
#include "madanet/losses.hpp"
#include "madanet/madalink.hpp"
#include "madanet/network.hpp"
#include "madanet/ops.hpp"
#include "madanet/targets.hpp"

namespace madanet {

template <typename T>
std::vector<GradcheckGroup> compare_gradients(
    const std::function<Var<T>()>& loss,
    const std::vector<std::pair<std::string, Var<T>*>>& groups, double step,
    std::size_t max_elements) {
  // Groups whose true gradient is zero (a bias ahead of normalization, a key
  // bias under softmax) would otherwise report pure rounding noise.
  for (auto& [name, v] : groups) v->zero_grad();
  Var<T> root = loss();
  const double floor = (sizeof(T) == sizeof(double) ? 1e-5 : 1e-2) *
                       std::max(1.0, std::abs(static_cast<double>(root.value()[0])));
  backward(root);
  std::vector<GradcheckGroup> out;
  for (auto& [name, v] : groups) {
    const Tensor<T> analytic = v->grad().empty() ? Tensor<T>(v->shape(), T(0)) : v->grad();
    const std::size_t n = v->value().size();
    const std::size_t count = std::min(n, max_elements);
    double max_diff = 0, max_a = 0, max_n = 0;
    NoGradGuard guard;
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t i = count == n ? k : k * n / count;
      T& x = v->mutable_value()[i];
      const T saved = x;
      auto at = [&](double h) {
        x = T(saved + h);
        const double f = loss().value()[0];
        x = saved;
        return f;
      };
      const double a = analytic[i];
      double numeric = (at(step) - at(-step)) / (2 * step);
      // A ReLU kink inside the stencil spoils the central difference. Retry
      // narrower, and one-sided so one of the two probes avoids the kink.
      if (std::abs(a - numeric) > 1e-5 * std::max(std::abs(a), floor)) {
        const double h = step / 10;
        const double f0 = at(0), up = at(h), down = at(-h);
        for (double candidate : {(up - down) / (2 * h), (up - f0) / h, (f0 - down) / h}) {
          if (std::abs(a - candidate) < std::abs(a - numeric)) numeric = candidate;
        }
      }
      max_diff = std::max(max_diff, std::abs(a - numeric));
      max_a = std::max(max_a, std::abs(a));
      max_n = std::max(max_n, std::abs(numeric));
    }
    out.push_back({name, count, max_diff / std::max({max_a, max_n, floor})});
  }
  return out;
}

template std::vector<GradcheckGroup> compare_gradients<float>(
    const std::function<Var<float>()>&, const std::vector<std::pair<std::string, Var<float>*>>&,
    double, std::size_t);
template std::vector<GradcheckGroup> compare_gradients<double>(
    const std::function<Var<double>()>&,
    const std::vector<std::pair<std::string, Var<double>*>>&, double, std::size_t);

namespace {

template <typename T>
Var<T> random_leaf(Rng& rng, Shape s, double lo, double hi) {
  Tensor<T> t(s);
  for (auto& v : t.span()) v = T(rng.uniform(lo, hi));
  return Var<T>(std::move(t), true);
}

template <typename T>
Tensor<T> random_tensor(Rng& rng, Shape s) {
  Tensor<T> t(s);
  for (auto& v : t.span()) v = T(rng.uniform(-1, 1));
  return t;
}

// Moves every parameter off its initial value so zero-initialized paths
// carry gradient.
template <typename T, typename Module>
void jitter(Module& m, Rng& rng, double scale) {
  for (auto& [name, v] : named_parameters<T>(m)) {
    for (auto& x : v->mutable_value().span()) x = T(x + scale * rng.normal());
  }
}

template <typename T, typename Module>
std::vector<std::pair<std::string, Var<T>*>> with_params(
    Module& m, std::vector<std::pair<std::string, Var<T>*>> leaves) {
  for (auto& p : named_parameters<T>(m)) leaves.push_back(p);
  return leaves;
}

// Small scenes for the loss checks: a 16x16 image at stride 4 and 8.
std::vector<TargetMaps> loss_targets(int stride) {
  const std::vector<BoxAnnotation> a{{1, 2, 6, 5, 0}, {9, 8, 5, 7, 0}};
  const std::vector<BoxAnnotation> b{{4, 3, 6, 9, 0}};
  return {make_targets(a, stride, 16, 16), make_targets(b, stride, 16, 16)};
}

template <typename T>
PredictionTriple<T> random_prediction(Rng& rng, int size, int stride) {
  PredictionTriple<T> p;
  p.heatmap = random_leaf<T>(rng, Shape{2, 1, size, size}, 0.05, 0.95);
  p.offset = random_leaf<T>(rng, Shape{2, 2, size, size}, -0.3, 1.3);
  p.size = random_leaf<T>(rng, Shape{2, 2, size, size}, 0.2, 3.0);
  p.stride = stride;
  return p;
}

template <typename T>
std::vector<std::pair<std::string, Var<T>*>> prediction_groups(PredictionTriple<T>& p,
                                                               const std::string& prefix) {
  return {{prefix + "heatmap", &p.heatmap}, {prefix + "offset", &p.offset},
          {prefix + "size", &p.size}};
}

template <typename T>
std::vector<GradcheckGroup> run(const std::string& op, Rng& rng, double h) {
  using Groups = std::vector<std::pair<std::string, Var<T>*>>;
  if (op == "linear") {
    Conv2d<T> lin(rng, 4, 3, 1, 1, 0);
    jitter<T>(lin, rng, 0.1);
    Var<T> x = random_leaf<T>(rng, Shape{1, 4, 2, 2}, -1, 1);
    const Tensor<T> c = random_tensor<T>(rng, Shape{1, 3, 2, 2});
    return compare_gradients<T>([&] { return ops::dot_const(lin.forward(x), c); },
                                with_params<T>(lin, Groups{{"input", &x}}), h);
  }
  if (op == "conv_block" || op == "residual_block") {
    Var<T> x = random_leaf<T>(rng, Shape{2, 2, 4, 4}, -1, 1);
    const Tensor<T> c = random_tensor<T>(rng, Shape{2, 2, 4, 4});
    if (op == "conv_block") {
      ConvBlock<T> block(rng, 2, 2);
      jitter<T>(block, rng, 0.1);
      return compare_gradients<T>(
          [&] { return ops::dot_const(block.forward(x, Phase::kTrain), c); },
          with_params<T>(block, Groups{{"input", &x}}), h);
    }
    ResidualBlock<T> block(rng, 2, 2);
    jitter<T>(block, rng, 0.1);
    return compare_gradients<T>(
        [&] { return ops::dot_const(block.forward(x, Phase::kTrain), c); },
        with_params<T>(block, Groups{{"input", &x}}), h);
  }
  if (op == "bilinear_sample") {
    Var<T> x = random_leaf<T>(rng, Shape{1, 2, 4, 4}, -1, 1);
    Var<T> coords = random_leaf<T>(rng, Shape{1, 2, 12, 1}, -0.7, 3.7);
    const Tensor<T> c = random_tensor<T>(rng, Shape{1, 2, 12, 1});
    return compare_gradients<T>(
        [&] { return ops::dot_const(ops::bilinear_sample(x, coords), c); },
        Groups{{"input", &x}, {"coords", &coords}}, h);
  }
  if (op == "deformable_conv") {
    DeformableConv<T> d(rng, 2, 2);
    jitter<T>(d, rng, 0.1);
    Var<T> x = random_leaf<T>(rng, Shape{1, 2, 5, 5}, -1, 1);
    const Tensor<T> c = random_tensor<T>(rng, Shape{1, 2, 5, 5});
    return compare_gradients<T>([&] { return ops::dot_const(d.forward(x), c); },
                                with_params<T>(d, Groups{{"input", &x}}), h);
  }
  if (op == "bicubic") {
    Var<T> x = random_leaf<T>(rng, Shape{1, 2, 3, 4}, -1, 1);
    const Tensor<T> c = random_tensor<T>(rng, Shape{1, 2, 6, 8});
    return compare_gradients<T>(
        [&] { return ops::dot_const(ops::upsample_bicubic2x(x), c); },
        Groups{{"input", &x}}, h);
  }
  if (op == "attention_encoder" || op == "attention_decoder") {
    AttentionConfig cfg;
    cfg.d_k = 3;
    AttentionLink<T> link(rng, 2, cfg);
    jitter<T>(link, rng, 0.3);
    Var<T> hr = random_leaf<T>(rng, Shape{1, 2, 4, 4}, -1, 1);
    Var<T> lr = random_leaf<T>(rng, Shape{1, 2, 2, 2}, -1, 1);
    Var<T> skip = random_leaf<T>(rng, Shape{1, 2, 4, 4}, -1, 1);
    const Tensor<T> c = random_tensor<T>(rng, Shape{1, 2, 4, 4});
    if (op == "attention_encoder") {
      return compare_gradients<T>([&] { return ops::dot_const(link.encoder(hr, lr), c); },
                                  with_params<T>(link, Groups{{"hr", &hr}, {"lr", &lr}}), h);
    }
    // The full decoder path, LR features entering through a deformable conv.
    DeformableConv<T> d(rng, 2, 2);
    jitter<T>(d, rng, 0.1);
    Groups groups = with_params<T>(link, Groups{{"hr", &hr}, {"lr", &lr}, {"skip", &skip}});
    for (auto& [name, v] : named_parameters<T>(d)) groups.emplace_back("deform." + name, v);
    return compare_gradients<T>(
        [&] { return ops::dot_const(link.decoder(hr, d.forward(lr), skip), c); }, groups, h);
  }
  if (op == "focal_loss" || op == "size_loss" || op == "offset_loss" || op == "stage_loss") {
    const auto gt = loss_targets(4);
    LossConfig cfg;
    PredictionTriple<T> p = random_prediction<T>(rng, 4, 4);
    if (op == "focal_loss") {
      return compare_gradients<T>([&] { return focal_loss(p.heatmap, gt, cfg); },
                                  Groups{{"heatmap", &p.heatmap}}, h);
    }
    if (op == "size_loss") {
      return compare_gradients<T>([&] { return size_loss(p.size, gt); },
                                  Groups{{"size", &p.size}}, h);
    }
    if (op == "offset_loss") {
      return compare_gradients<T>([&] { return offset_loss(p.offset, gt); },
                                  Groups{{"offset", &p.offset}}, h);
    }
    return compare_gradients<T>([&] { return stage_loss(p, gt, cfg).total; },
                                prediction_groups(p, ""), h);
  }
  if (op == "total_loss") {
    const auto lr_gt = loss_targets(8);
    const auto hr_gt = loss_targets(4);
    LossConfig cfg;
    cfg.weight_lr = 0.7;
    PredictionTriple<T> lr = random_prediction<T>(rng, 2, 8);
    PredictionTriple<T> hr = random_prediction<T>(rng, 4, 4);
    Groups groups = prediction_groups(lr, "lr.");
    for (auto& g : prediction_groups(hr, "hr.")) groups.push_back(g);
    return compare_gradients<T>([&] { return total_loss(lr, hr, lr_gt, hr_gt, cfg).total; },
                                groups, h);
  }
  if (op == "network") {
    ModelConfig cfg;
    cfg.input_size = 32;
    cfg.hourglass.depth = 2;
    cfg.hourglass.channels = {3, 4, 4};
    cfg.branch_channels = 2;
    cfg.attention.d_k = 2;
    MadaCenterNet<T> net(rng, cfg);
    jitter<T>(net, rng, 0.05);
    Var<T> image = random_leaf<T>(rng, Shape{2, 3, 32, 32}, 0, 1);
    const std::vector<BoxAnnotation> a{{3, 4, 9, 7, 0}, {18, 15, 8, 11, 0}};
    const std::vector<BoxAnnotation> b{{10, 6, 12, 14, 0}};
    const std::vector<TargetMaps> lr_gt{make_targets(a, 8, 32, 32), make_targets(b, 8, 32, 32)};
    const std::vector<TargetMaps> hr_gt{make_targets(a, 4, 32, 32), make_targets(b, 4, 32, 32)};
    LossConfig loss_cfg;
    return compare_gradients<T>(
        [&] {
          auto out = net.forward(image, Phase::kTrain);
          return total_loss(out.lr, out.hr, lr_gt, hr_gt, loss_cfg).total;
        },
        with_params<T>(net, Groups{}), h, 8);
  }
  throw ConfigError("unknown gradcheck op '" + op + "'");
}

}  // namespace

double GradcheckReport::max_rel_error() const {
  double m = 0;
  for (const auto& g : groups) m = std::max(m, g.max_rel_error);
  return m;
}

std::string GradcheckReport::to_json() const {
  nlohmann::json j;
  j["op"] = op;
  j["precision"] = precision == Precision::kDouble ? "double" : "float";
  j["step"] = step;
  j["max_rel_error"] = max_rel_error();
  j["groups"] = nlohmann::json::array();
  for (const auto& g : groups) {
    j["groups"].push_back({{"name", g.name}, {"checked", g.checked},
                           {"max_rel_error", g.max_rel_error}});
  }
  return j.dump(2);
}

const std::vector<std::string>& gradcheck_ops() {
  static const std::vector<std::string> names{
      "linear",          "conv_block",        "residual_block",    "bilinear_sample",
      "deformable_conv", "bicubic",           "attention_encoder", "attention_decoder",
      "focal_loss",      "size_loss",         "offset_loss",       "stage_loss",
      "total_loss",      "network"};
  return names;
}

GradcheckReport gradcheck(const std::string& op, std::uint64_t seed, Precision precision) {
  const auto& names = gradcheck_ops();
  const auto it = std::find(names.begin(), names.end(), op);
  if (it == names.end()) throw ConfigError("unknown gradcheck op '" + op + "'");
  Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(it - names.begin())));
  GradcheckReport report;
  report.op = op;
  report.precision = precision;
  if (precision == Precision::kDouble) {
    report.step = 1e-5;
    report.groups = run<double>(op, rng, report.step);
  } else {
    report.step = 1e-3;
    report.groups = run<float>(op, rng, report.step);
  }
  return report;
}

}  // namespace madanet
