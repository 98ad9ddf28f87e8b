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

#include "madanet/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "config_json.hpp"
#include "madanet/synthdata.hpp"
#include "madanet/targets.hpp"

namespace madanet {
namespace {

using detail::json;

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

Tensor<float> stack_images(const std::vector<const AnnotatedScene*>& batch) {
  const Shape s = batch.front()->image.shape();
  Tensor<float> out(Shape{static_cast<int>(batch.size()), 3, s.h, s.w});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::copy_n(batch[i]->image.data(), s.numel(), out.plane(static_cast<int>(i), 0));
  }
  return out;
}

void check_scene_sizes(const std::vector<AnnotatedScene>& scenes, int size, bool manifest) {
  for (const auto& s : scenes) {
    if (s.width() != size || s.height() != size) {
      const std::string msg = "scene '" + s.scene_id + "' is " + std::to_string(s.width()) +
                              "x" + std::to_string(s.height()) + " but the model expects " +
                              std::to_string(size) + "x" + std::to_string(size);
      if (manifest) throw ManifestError(msg);
      throw ConfigError(msg);
    }
  }
}

double value_of(const Var<float>& v) { return v.value()[0]; }

}  // namespace

void TrainConfig::validate() const {
  optimizer.validate();
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (train_limit < 0) throw ConfigError("train_limit must be >= 0");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  model.validate();
  loss.validate();
}

TrainConfig train_preset(const std::string& name) {
  TrainConfig c;
  c.preset = name;
  if (name == "full") {
    c.model.input_size = 512;
  } else if (name == "desk") {
    c.model.input_size = 128;
    c.epochs = 30;
  } else if (name == "overfit") {
    c.model.input_size = 64;
    c.epochs = 1000;
    c.batch_size = 8;  // full batch: one step per epoch over the 8 scenes
    c.max_steps = 2000;
    c.train_limit = 8;
    c.augment = false;
    c.checkpoint_every = 1000;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected full, desk or overfit)");
  }
  return c;
}

TrainConfig parse_train_config(const std::string& json_text) {
  const json j = detail::parse_json(json_text, "train config");
  if (!j.is_object()) throw ConfigError("train config: expected a JSON object");
  TrainConfig c = train_preset(j.value("preset", std::string("full")));
  detail::ObjectReader r(j, "train");
  r.read("preset", c.preset);
  if (auto* o = r.child("optimizer")) {
    detail::ObjectReader ro(*o, "train.optimizer");
    ro.read("learning_rate", c.optimizer.learning_rate);
    ro.read("beta1", c.optimizer.beta1);
    ro.read("beta2", c.optimizer.beta2);
    ro.read("epsilon", c.optimizer.epsilon);
    ro.finish();
  }
  r.read("batch_size", c.batch_size);
  r.read("epochs", c.epochs);
  r.read("max_steps", c.max_steps);
  r.read("seed", c.seed);
  r.read("data_dir", c.data_dir);
  r.read("train_limit", c.train_limit);
  r.read("checkpoint_every", c.checkpoint_every);
  r.read("clip_norm", c.clip_norm);
  r.read("augment", c.augment);
  if (auto* m = r.child("model")) detail::read_into(*m, c.model, "train.model");
  if (auto* l = r.child("loss")) detail::read_into(*l, c.loss, "train.loss");
  r.finish();
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  return parse_train_config(read_text(path));
}

std::string train_config_to_json(const TrainConfig& c) {
  json j;
  j["preset"] = c.preset;
  j["optimizer"] = {{"learning_rate", c.optimizer.learning_rate},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"epsilon", c.optimizer.epsilon}};
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["max_steps"] = c.max_steps;
  j["seed"] = c.seed;
  j["data_dir"] = c.data_dir;
  j["train_limit"] = c.train_limit;
  j["checkpoint_every"] = c.checkpoint_every;
  j["clip_norm"] = c.clip_norm;
  j["augment"] = c.augment;
  j["model"] = detail::to_json_value(c.model);
  j["loss"] = detail::to_json_value(c.loss);
  return j.dump(2);
}

std::string step_log_csv(const std::vector<StepLog>& log) {
  std::ostringstream out;
  out << "step,epoch,total,lr_focal,lr_size,lr_offset,hr_focal,hr_size,hr_offset,grad_norm\n";
  char line[320];
  for (const auto& s : log) {
    std::snprintf(line, sizeof line, "%ld,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", s.step,
                  s.epoch, s.total, s.lr_focal, s.lr_size, s.lr_offset, s.hr_focal, s.hr_size,
                  s.hr_offset, s.grad_norm);
    out << line;
  }
  return out.str();
}

TrainResult train(const TrainConfig& config, const std::vector<AnnotatedScene>& all_scenes,
                  const std::filesystem::path& out_dir, const TrainOptions& options) {
  config.validate();
  std::vector<AnnotatedScene> scenes = all_scenes;
  if (config.train_limit > 0 && scenes.size() > static_cast<std::size_t>(config.train_limit)) {
    scenes.resize(config.train_limit);
  }
  if (scenes.empty()) throw ConfigError("no training scenes");
  check_scene_sizes(scenes, config.model.input_size, false);
  const std::string config_json = train_config_to_json(config);

  TrainResult result;
  result.checkpoint_dir = out_dir;
  Rng init(Rng::derive(config.seed, 1));
  result.net = std::make_unique<MadaCenterNet<float>>(init, config.model);
  Rng shuffle(Rng::derive(config.seed, 2));
  Rng augment_rng(Rng::derive(config.seed, 3));
  Adam adam(config.optimizer, named_parameters<float>(*result.net));
  TrainState& state = result.state;
  std::vector<StepLog> history;

  if (options.resume) {
    LoadedCheckpoint ckpt = load_checkpoint(out_dir);
    if (model_config_to_json(ckpt.model) != model_config_to_json(config.model)) {
      throw ManifestError("checkpoint in " + out_dir.string() +
                          " was trained with a different model config");
    }
    result.net = std::move(ckpt.net);
    adam = Adam(config.optimizer, named_parameters<float>(*result.net));
    load_optimizer_state(out_dir, adam);
    state = ckpt.state;
    shuffle.set_state(state.shuffle_rng);
    augment_rng.set_state(state.augment_rng);
    // Keep the logged steps that the checkpoint covers.
    std::ifstream in(out_dir / "loss_log.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      StepLog s;
      if (std::sscanf(line.c_str(), "%ld,%d,%lg,%lg,%lg,%lg,%lg,%lg,%lg,%lg", &s.step, &s.epoch,
                      &s.total, &s.lr_focal, &s.lr_size, &s.lr_offset, &s.hr_focal, &s.hr_size,
                      &s.hr_offset, &s.grad_norm) == 10 &&
          s.step <= state.step) {
        history.push_back(s);
      }
    }
  }

  auto checkpoint = [&] {
    state.shuffle_rng = shuffle.state();
    state.augment_rng = augment_rng.state();
    if (!options.write_files) return;
    save_checkpoint(out_dir, *result.net, state, &adam, config_json);
    std::vector<StepLog> all = history;
    all.insert(all.end(), result.log.begin(), result.log.end());
    write_text(out_dir / "loss_log.csv", step_log_csv(all));
  };

  const int hr = config.model.hr_stride, lr = config.model.lr_stride;
  const std::size_t n = scenes.size();
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  bool out_of_steps = config.max_steps > 0 && state.step >= config.max_steps;
  for (int epoch = state.epoch; epoch < config.epochs && !out_of_steps; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i) {
      std::swap(order[i], order[shuffle.uniform_int(0, static_cast<std::int64_t>(i))]);
    }
    double epoch_loss = 0;
    int epoch_steps = 0;
    for (std::size_t begin = 0; begin < n; begin += batch) {
      if (config.max_steps > 0 && state.step >= config.max_steps) {
        out_of_steps = true;
        break;
      }
      std::vector<AnnotatedScene> augmented;
      std::vector<const AnnotatedScene*> items;
      const std::size_t end = std::min(n, begin + batch);
      augmented.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const AnnotatedScene& s = scenes[order[i]];
        if (config.augment) {
          augmented.push_back(random_augment(s, augment_rng));
          items.push_back(&augmented.back());
        } else {
          items.push_back(&s);
        }
      }
      std::vector<TargetMaps> lr_gt, hr_gt;
      for (const auto* s : items) {
        lr_gt.push_back(make_targets(*s, lr, config.model.num_classes));
        hr_gt.push_back(make_targets(*s, hr, config.model.num_classes));
      }
      adam.zero_grad();
      Var<float> image(stack_images(items), false);
      auto out = result.net->forward(image, Phase::kTrain);
      TotalLoss<float> loss = total_loss(out.lr, out.hr, lr_gt, hr_gt, config.loss);
      const double total = value_of(loss.total);
      if (!std::isfinite(total)) {
        throw NumericError("non-finite loss at step " + std::to_string(state.step + 1) +
                           " (epoch " + std::to_string(epoch) +
                           "); last good checkpoint kept in " + out_dir.string());
      }
      backward(loss.total);
      const double norm = adam.clip_grad_norm(config.clip_norm);
      if (!std::isfinite(norm)) {
        throw NumericError("non-finite gradient at step " + std::to_string(state.step + 1) +
                           "; last good checkpoint kept in " + out_dir.string());
      }
      adam.step();
      ++state.step;
      result.log.push_back({state.step, epoch, total, value_of(loss.lr.focal),
                            value_of(loss.lr.size), value_of(loss.lr.offset),
                            value_of(loss.hr.focal), value_of(loss.hr.size),
                            value_of(loss.hr.offset), norm});
      epoch_loss += total;
      ++epoch_steps;
    }
    if (epoch_steps == 0) break;
    state.epoch = epoch + 1;
    if (options.progress) {
      char line[160];
      std::snprintf(line, sizeof line, "epoch %d step %ld mean_loss %.6f\n", state.epoch,
                    state.step, epoch_loss / epoch_steps);
      *options.progress << line << std::flush;
    }
    if (state.epoch % config.checkpoint_every == 0 && state.epoch < config.epochs &&
        !out_of_steps) {
      checkpoint();
    }
  }
  checkpoint();
  return result;
}

TrainResult train(const TrainConfig& config, const std::filesystem::path& out_dir,
                  const TrainOptions& options) {
  if (config.data_dir.empty()) throw ConfigError("train config has no data_dir");
  return train(config, load_dataset(config.data_dir), out_dir, options);
}

namespace {

std::vector<ImageTruth> truths_of(const std::vector<AnnotatedScene>& scenes) {
  std::vector<ImageTruth> out;
  for (const auto& s : scenes) out.push_back({s.scene_id, s.boxes});
  return out;
}

}  // namespace

ScaleEvaluation evaluate_model(MadaCenterNet<float>& net,
                               const std::vector<AnnotatedScene>& scenes,
                               const EvalOptions& options) {
  if (scenes.empty()) throw EvalError("no scenes");
  check_scene_sizes(scenes, net.config().input_size, true);
  NoGradGuard guard;
  std::vector<ImageDetections> lr_det, hr_det;
  const std::size_t batch = static_cast<std::size_t>(std::max(1, options.batch_size));
  for (std::size_t begin = 0; begin < scenes.size(); begin += batch) {
    std::vector<const AnnotatedScene*> items;
    for (std::size_t i = begin; i < std::min(scenes.size(), begin + batch); ++i) {
      items.push_back(&scenes[i]);
    }
    auto out = net.forward(Var<float>(stack_images(items), false), Phase::kEval);
    for (std::size_t i = 0; i < items.size(); ++i) {
      const int k = static_cast<int>(i);
      lr_det.push_back({items[i]->scene_id, decode(prediction_maps(out.lr, k), options.decode)});
      hr_det.push_back({items[i]->scene_id, decode(prediction_maps(out.hr, k), options.decode)});
    }
  }
  const auto truths = truths_of(scenes);
  return {evaluate(lr_det, truths, options.iou_threshold, options.score_threshold),
          evaluate(hr_det, truths, options.iou_threshold, options.score_threshold)};
}

ScaleEvaluation evaluate_oracle(const ModelConfig& model,
                                const std::vector<AnnotatedScene>& scenes,
                                const EvalOptions& options) {
  if (scenes.empty()) throw EvalError("no scenes");
  std::vector<ImageDetections> lr_det, hr_det;
  for (const auto& s : scenes) {
    const auto lr = make_targets(s, model.lr_stride, model.num_classes);
    const auto hr = make_targets(s, model.hr_stride, model.num_classes);
    lr_det.push_back({s.scene_id, decode(prediction_maps(lr), options.decode)});
    hr_det.push_back({s.scene_id, decode(prediction_maps(hr), options.decode)});
  }
  const auto truths = truths_of(scenes);
  return {evaluate(lr_det, truths, options.iou_threshold, options.score_threshold),
          evaluate(hr_det, truths, options.iou_threshold, options.score_threshold)};
}

std::string ScaleEvaluation::to_json() const {
  json j;
  j["format"] = "madanet-eval";
  j["format_version"] = 1;
  j["lr"] = json::parse(lr.to_json());
  j["hr"] = json::parse(hr.to_json());
  j["ae_sum"] = {{"lr", lr.total_ae}, {"hr", hr.total_ae}};
  json diff = json::array();
  for (const auto& [count, bin] : lr.ae_by_count) {
    const CountBin& h = hr.ae_by_count.at(count);
    diff.push_back({{"count", count},
                    {"images", bin.images},
                    {"lr_mean_ae", bin.mean_ae},
                    {"hr_mean_ae", h.mean_ae},
                    {"difference", bin.mean_ae - h.mean_ae}});
  }
  j["ae_difference_by_count"] = std::move(diff);
  return j.dump(2);
}

void write_evaluation(const ScaleEvaluation& eval, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_text(path, eval.to_json() + "\n");
  const auto stem = path.parent_path() / path.stem();
  write_text(stem.string() + "_lr_by_count.csv", eval.lr.ae_by_count_csv());
  write_text(stem.string() + "_hr_by_count.csv", eval.hr.ae_by_count_csv());
  write_text(stem.string() + "_ae_difference.csv", eval.difference_csv());
}

}  // namespace madanet
