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

// Command-line front end: generate, train, eval, infer, gradcheck.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "madanet/checkpoint.hpp"
#include "madanet/gradcheck.hpp"
#include "madanet/infer.hpp"
#include "madanet/synthdata.hpp"
#include "madanet/trainer.hpp"

namespace fs = std::filesystem;
using namespace madanet;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

int fail(const std::string& kind, const std::string& message) {
  const nlohmann::json j{{"kind", kind}, {"message", message}};
  std::cerr << "error: " << j.dump() << std::endl;
  return kind == "usage" ? 64 : 1;
}

struct GenerateArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> count, image_size, min_count, max_count;
  std::optional<double> train_ratio;
};

int run_generate(const GenerateArgs& a) {
  DatasetConfig c = a.config.empty() ? DatasetConfig{} : parse_dataset_config(read_text(a.config));
  if (a.seed) c.seed = *a.seed;
  if (a.count) c.count = *a.count;
  if (a.image_size) c.scene.image_size = *a.image_size;
  if (a.min_count) c.scene.count_range.first = *a.min_count;
  if (a.max_count) c.scene.count_range.second = *a.max_count;
  if (a.train_ratio) c.train_ratio = *a.train_ratio;
  c.validate();
  DatasetSplit split = generate_dataset(c.scene, c.count, c.seed, c.train_ratio);
  const fs::path out(a.out);
  save_dataset(split.train, out / "train");
  save_dataset(split.test, out / "test");
  write_text(out / "dataset.json", dataset_config_to_json(c) + "\n");
  std::cout << "wrote " << split.train.size() << " train and " << split.test.size()
            << " test scenes to " << out.string() << "\n";
  return 0;
}

struct TrainArgs {
  std::string config, out, data, preset;
  std::optional<int> epochs, batch_size, train_limit, checkpoint_every, input_size;
  std::optional<long> max_steps;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::optional<bool> augment;
  bool resume = false, dry_run = false, quiet = false;
  bool no_grkc = false, no_attention = false, no_deformable = false;
};

int run_train(const TrainArgs& a) {
  TrainConfig c;
  if (!a.config.empty()) {
    nlohmann::json j = nlohmann::json::parse(read_text(a.config), nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw ConfigError(a.config + ": malformed JSON train config");
    }
    if (!a.preset.empty()) j["preset"] = a.preset;
    c = parse_train_config(j.dump());
  } else {
    c = train_preset(a.preset.empty() ? "desk" : a.preset);
  }
  if (!a.data.empty()) c.data_dir = a.data;
  if (a.epochs) c.epochs = *a.epochs;
  if (a.batch_size) c.batch_size = *a.batch_size;
  if (a.train_limit) c.train_limit = *a.train_limit;
  if (a.checkpoint_every) c.checkpoint_every = *a.checkpoint_every;
  if (a.input_size) c.model.input_size = *a.input_size;
  if (a.max_steps) c.max_steps = *a.max_steps;
  if (a.lr) c.optimizer.learning_rate = *a.lr;
  if (a.seed) c.seed = *a.seed;
  if (a.augment) c.augment = *a.augment;
  if (a.no_grkc) c.model.use_grkc = false;
  if (a.no_attention) c.model.use_attention = false;
  if (a.no_deformable) c.model.use_deformable = false;
  c.validate();
  if (a.dry_run) {
    std::cout << train_config_to_json(c) << "\n";
    return 0;
  }
  TrainOptions options;
  options.resume = a.resume;
  options.progress = a.quiet ? nullptr : &std::cout;
  TrainResult r = train(c, a.out, options);
  std::cout << "trained " << r.state.step << " steps over " << r.state.epoch
            << " epochs; checkpoint in " << r.checkpoint_dir.string() << "\n";
  return 0;
}

struct EvalArgs {
  std::string ckpt, data, out;
  bool oracle = false;
  EvalOptions options;
};

int run_eval(const EvalArgs& a) {
  const std::vector<AnnotatedScene> scenes = load_dataset(a.data);
  if (scenes.empty()) throw EvalError("no scenes in " + a.data);
  ScaleEvaluation eval;
  if (a.oracle) {
    ModelConfig model = a.ckpt.empty() ? ModelConfig{} : load_checkpoint(a.ckpt).model;
    eval = evaluate_oracle(model, scenes, a.options);
  } else {
    if (a.ckpt.empty()) throw ConfigError("eval needs --ckpt unless --oracle is given");
    LoadedCheckpoint ckpt = load_checkpoint(a.ckpt);
    eval = evaluate_model(*ckpt.net, scenes, a.options);
  }
  write_evaluation(eval, a.out);
  std::printf("images %zu  LR: MAE %.4f AP %.4f AE sum %ld  HR: MAE %.4f AP %.4f AE sum %ld\n",
              eval.hr.per_image.size(), eval.lr.mae, eval.lr.ap, eval.lr.total_ae, eval.hr.mae,
              eval.hr.ap, eval.hr.total_ae);
  return 0;
}

int run_gradcheck(const std::string& op, std::uint64_t seed, const std::string& precision,
                  std::optional<double> tolerance, bool list) {
  if (list) {
    for (const auto& name : gradcheck_ops()) std::cout << name << "\n";
    return 0;
  }
  if (precision != "double" && precision != "float") {
    throw ConfigError("precision must be double or float");
  }
  const Precision p = precision == "double" ? Precision::kDouble : Precision::kFloat;
  GradcheckReport r = gradcheck(op, seed, p);
  // Float checks only catch gross errors; the stacked network is the noisiest.
  const double tol = tolerance.value_or(p == Precision::kDouble ? 1e-4
                                        : op == "network"       ? 0.25
                                                                : 5e-2);
  std::cout << r.to_json() << "\n";
  if (!r.passed(tol)) {
    return fail("numeric", "gradcheck " + op + " max relative error " +
                               std::to_string(r.max_rel_error()) + " exceeds " +
                               std::to_string(tol));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage keypoint counting network: data, training and evaluation"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Render a synthetic dataset (train/ and test/)");
  g->add_option("--config", gen.config, "Dataset config JSON");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--seed", gen.seed, "Master seed");
  g->add_option("--count", gen.count, "Number of scenes");
  g->add_option("--image-size", gen.image_size, "Square image size in pixels");
  g->add_option("--min-count", gen.min_count, "Fewest objects per scene");
  g->add_option("--max-count", gen.max_count, "Most objects per scene");
  g->add_option("--train-ratio", gen.train_ratio, "Fraction of scenes in train/");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train and write a checkpoint directory");
  t->add_option("--config", tr.config, "Train config JSON");
  t->add_option("--out", tr.out, "Checkpoint directory")->required();
  t->add_option("--data", tr.data, "Training dataset directory");
  t->add_option("--preset", tr.preset, "full, desk or overfit");
  t->add_option("--epochs", tr.epochs);
  t->add_option("--max-steps", tr.max_steps);
  t->add_option("--batch-size", tr.batch_size);
  t->add_option("--train-limit", tr.train_limit, "Use only the first N scenes");
  t->add_option("--checkpoint-every", tr.checkpoint_every, "Epochs between checkpoints");
  t->add_option("--input-size", tr.input_size);
  t->add_option("--lr", tr.lr, "Learning rate");
  t->add_option("--seed", tr.seed);
  t->add_option("--augment", tr.augment, "true or false");
  t->add_flag("--no-grkc", tr.no_grkc, "Drop the input-image branch");
  t->add_flag("--no-attention", tr.no_attention, "Drop the cross-scale link");
  t->add_flag("--no-deformable", tr.no_deformable, "Feed LR taps to the link undeformed");
  t->add_flag("--resume", tr.resume, "Continue from the checkpoint in --out");
  t->add_flag("--dry-run", tr.dry_run, "Print the resolved config and exit");
  t->add_flag("--quiet", tr.quiet, "No per-epoch progress");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  e->add_option("--ckpt", ev.ckpt, "Checkpoint directory");
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--out", ev.out, "Report JSON path")->required();
  e->add_flag("--oracle", ev.oracle, "Score rendered targets instead of predictions");
  e->add_option("--iou", ev.options.iou_threshold, "IoU threshold for AP");
  e->add_option("--score-threshold", ev.options.score_threshold, "Counting threshold");
  e->add_option("--peak-threshold", ev.options.decode.threshold, "Peak extraction threshold");
  e->add_option("--max-det", ev.options.decode.max_detections, "Peaks kept per image");

  std::string infer_ckpt, infer_image, infer_out;
  DecodeOptions infer_decode;
  auto* inf = app.add_subcommand("infer", "Detect objects in one PNG");
  inf->add_option("--ckpt", infer_ckpt, "Checkpoint directory")->required();
  inf->add_option("--image", infer_image, "Input PNG")->required();
  inf->add_option("--out", infer_out, "Output directory")->required();
  inf->add_option("--peak-threshold", infer_decode.threshold);
  inf->add_option("--max-det", infer_decode.max_detections);

  std::string gc_op, gc_precision = "double";
  std::uint64_t gc_seed = 0;
  std::optional<double> gc_tol;
  bool gc_list = false;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of one operation");
  gc->add_option("--op", gc_op, "Operation name (see --list)");
  gc->add_option("--seed", gc_seed);
  gc->add_option("--precision", gc_precision, "double or float");
  gc->add_option("--tolerance", gc_tol, "Maximum relative error");
  gc->add_flag("--list", gc_list, "List operation names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    return fail("usage", ex.what());
  }

  try {
    if (*g) return run_generate(gen);
    if (*t) return run_train(tr);
    if (*e) return run_eval(ev);
    if (*inf) {
      run_inference(infer_ckpt, infer_image, infer_out, infer_decode);
      std::cout << "wrote " << (fs::path(infer_out) / "detections.json").string() << "\n";
      return 0;
    }
    if (*gc) {
      if (gc_op.empty() && !gc_list) throw ConfigError("gradcheck needs --op or --list");
      return run_gradcheck(gc_op, gc_seed, gc_precision, gc_tol, gc_list);
    }
  } catch (const Error& ex) {
    return fail(ex.kind(), ex.what());
  } catch (const std::exception& ex) {
    return fail("internal", ex.what());
  }
  return 0;
}
