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

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"
#include "madanet/checkpoint.hpp"
#include "madanet/synthdata.hpp"
#include "madanet/trainer.hpp"
#include "test_util.hpp"

namespace madanet {
namespace {

namespace fs = std::filesystem;

TrainConfig tiny_train_config() {
  TrainConfig c = train_preset("overfit");
  c.model.hourglass.depth = 2;
  c.model.hourglass.channels = {4, 6, 8};
  c.model.branch_channels = 3;
  c.model.attention.d_k = 2;
  c.batch_size = 2;
  c.epochs = 2;
  c.max_steps = 0;
  c.checkpoint_every = 1;
  c.augment = true;
  c.seed = 3;
  return c;
}

std::vector<AnnotatedScene> tiny_scenes(int n = 4) {
  SceneConfig sc;
  sc.image_size = 64;
  sc.count_range = {1, 3};
  return generate_dataset(sc, n, 17, 1.0).train;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TrainOptions quiet() { return {}; }

TEST(TrainConfig, Defaults) {
  TrainConfig c;
  EXPECT_DOUBLE_EQ(c.optimizer.learning_rate, 1e-3);
  EXPECT_EQ(c.batch_size, 4);
  EXPECT_EQ(c.epochs, 100);
  EXPECT_DOUBLE_EQ(c.loss.alpha, 2.0);
  EXPECT_DOUBLE_EQ(c.loss.lambda_offset, 0.1);
  EXPECT_EQ(c.model.input_size, 128);
}

TEST(TrainConfig, Presets) {
  EXPECT_EQ(train_preset("full").model.input_size, 512);
  const auto desk = train_preset("desk");
  EXPECT_EQ(desk.model.input_size, 128);
  EXPECT_EQ(desk.epochs, 30);
  const auto overfit = train_preset("overfit");
  EXPECT_EQ(overfit.model.input_size, 64);
  EXPECT_EQ(overfit.max_steps, 2000);
  EXPECT_EQ(overfit.train_limit, 8);
  EXPECT_FALSE(overfit.augment);
  EXPECT_THROW(train_preset("huge"), ConfigError);
}

TEST(TrainConfig, ParseAndRoundTrip) {
  const auto c = parse_train_config(
      R"({"preset": "desk", "epochs": 3, "optimizer": {"learning_rate": 0.01}, "model": {"use_grkc": false}})");
  EXPECT_EQ(c.preset, "desk");
  EXPECT_EQ(c.epochs, 3);
  EXPECT_DOUBLE_EQ(c.optimizer.learning_rate, 0.01);
  EXPECT_FALSE(c.model.use_grkc);
  EXPECT_EQ(c.model.input_size, 128);
  const auto again = parse_train_config(train_config_to_json(c));
  EXPECT_EQ(train_config_to_json(again), train_config_to_json(c));
}

TEST(TrainConfig, Rejects) {
  EXPECT_THROW(parse_train_config(R"({"epoch": 3})"), ConfigError);
  EXPECT_THROW(parse_train_config(R"({"model": {"depth": 3}})"), ConfigError);
  EXPECT_THROW(parse_train_config(R"({"epochs": -1})"), ConfigError);
  EXPECT_THROW(parse_train_config(R"({"batch_size": 0})"), ConfigError);
  EXPECT_THROW(parse_train_config("[1, 2"), ConfigError);
  EXPECT_THROW(load_train_config("/nonexistent/train.json"), Error);
}

TEST(Train, ZeroEpochsSavesInitialWeights) {
  auto cfg = tiny_train_config();
  cfg.epochs = 0;
  const auto dir = testing::temp_dir("zero_epochs");
  train(cfg, tiny_scenes(), dir, quiet());
  auto loaded = load_checkpoint(dir);
  Rng init(Rng::derive(cfg.seed, 1));
  MadaCenterNet<float> fresh(init, cfg.model);
  auto a = named_parameters<float>(*loaded.net);
  auto b = named_parameters<float>(fresh);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_EQ(a[i].second->value(), b[i].second->value()) << a[i].first;
  }
  EXPECT_EQ(loaded.state.step, 0);
}

TEST(Train, LogsFiniteDecreasingLoss) {
  auto cfg = tiny_train_config();
  cfg.epochs = 6;
  cfg.augment = false;
  const auto dir = testing::temp_dir("logs");
  const auto r = train(cfg, tiny_scenes(), dir, quiet());
  ASSERT_EQ(r.log.size(), 12u);
  for (const auto& s : r.log) EXPECT_TRUE(std::isfinite(s.total));
  EXPECT_LT(r.log.back().total, r.log.front().total);
  const std::string csv = slurp(dir / "loss_log.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 13);
  EXPECT_EQ(r.state.epoch, 6);
}

TEST(Train, MaxStepsStops) {
  auto cfg = tiny_train_config();
  cfg.max_steps = 3;
  cfg.epochs = 10;
  TrainOptions opt;
  opt.write_files = false;
  const auto r = train(cfg, tiny_scenes(), testing::temp_dir("max_steps"), opt);
  EXPECT_EQ(r.state.step, 3);
}

TEST(Train, TwoRunsBitIdentical) {
  auto cfg = tiny_train_config();
  const auto d1 = testing::temp_dir("det1");
  const auto d2 = testing::temp_dir("det2");
  train(cfg, tiny_scenes(), d1, quiet());
  train(cfg, tiny_scenes(), d2, quiet());
  EXPECT_EQ(slurp(d1 / "weights.bin"), slurp(d2 / "weights.bin"));
  EXPECT_EQ(slurp(d1 / "loss_log.csv"), slurp(d2 / "loss_log.csv"));
  EXPECT_EQ(slurp(d1 / "manifest.json"), slurp(d2 / "manifest.json"));
}

TEST(Train, ResumeMatchesUninterruptedRun) {
  auto cfg = tiny_train_config();
  cfg.epochs = 3;
  const auto full = testing::temp_dir("resume_full");
  train(cfg, tiny_scenes(), full, quiet());

  const auto part = testing::temp_dir("resume_part");
  auto first = cfg;
  first.epochs = 1;
  train(first, tiny_scenes(), part, quiet());
  TrainOptions resume;
  resume.resume = true;
  const auto r = train(cfg, tiny_scenes(), part, resume);
  EXPECT_EQ(r.state.epoch, 3);
  EXPECT_EQ(slurp(full / "weights.bin"), slurp(part / "weights.bin"));
  EXPECT_EQ(slurp(full / "loss_log.csv"), slurp(part / "loss_log.csv"));
}

TEST(Train, ResumeRejectsDifferentModel) {
  auto cfg = tiny_train_config();
  cfg.epochs = 1;
  const auto dir = testing::temp_dir("resume_mismatch");
  train(cfg, tiny_scenes(), dir, quiet());
  cfg.model.use_grkc = false;
  cfg.epochs = 2;
  TrainOptions resume;
  resume.resume = true;
  EXPECT_THROW(train(cfg, tiny_scenes(), dir, resume), ManifestError);
}

TEST(Train, NonFiniteInputKeepsCheckpoint) {
  auto cfg = tiny_train_config();
  cfg.epochs = 1;
  const auto dir = testing::temp_dir("nan");
  train(cfg, tiny_scenes(), dir, quiet());
  const std::string before = slurp(dir / "weights.bin");
  const std::string manifest = slurp(dir / "manifest.json");

  auto scenes = tiny_scenes();
  for (auto& s : scenes) s.image[0] = NAN;
  cfg.epochs = 2;
  cfg.augment = false;
  TrainOptions resume;
  resume.resume = true;
  EXPECT_THROW(train(cfg, scenes, dir, resume), NumericError);
  EXPECT_EQ(slurp(dir / "weights.bin"), before);
  EXPECT_EQ(slurp(dir / "manifest.json"), manifest);
}

TEST(Train, RejectsBadInputs) {
  auto cfg = tiny_train_config();
  EXPECT_THROW(train(cfg, {}, testing::temp_dir("empty_train"), quiet()), ConfigError);
  auto scenes = tiny_scenes();
  cfg.model.input_size = 128;
  EXPECT_THROW(train(cfg, scenes, testing::temp_dir("size_mismatch"), quiet()), Error);
  TrainConfig no_data;
  EXPECT_THROW(train(no_data, testing::temp_dir("no_data"), quiet()), ConfigError);
}

TEST(Checkpoint, EvaluationReproducesAfterReload) {
  auto cfg = tiny_train_config();
  const auto dir = testing::temp_dir("reload");
  auto r = train(cfg, tiny_scenes(), dir, quiet());
  EvalOptions opt;
  opt.decode.threshold = 0.01f;
  const auto scenes = tiny_scenes(6);
  const auto a = evaluate_model(*r.net, scenes, opt);
  auto loaded = load_checkpoint(dir);
  const auto b = evaluate_model(*loaded.net, scenes, opt);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(loaded.state.step, r.state.step);
  EXPECT_EQ(model_config_to_json(loaded.model), model_config_to_json(cfg.model));
}

TEST(Checkpoint, ManifestFields) {
  auto cfg = tiny_train_config();
  cfg.epochs = 1;
  const auto dir = testing::temp_dir("manifest");
  train(cfg, tiny_scenes(), dir, quiet());
  const auto j = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(j["format_version"], kCheckpointFormatVersion);
  EXPECT_EQ(j["dtype"], "float32-le");
  EXPECT_EQ(j["epoch"], 1);
  EXPECT_TRUE(j["rng_state"].contains("shuffle"));
  EXPECT_EQ(j["optimizer"]["type"], "adam");
  std::size_t total = 0;
  for (const auto& t : j["tensors"]) total += t["count"].get<std::size_t>() * 4;
  EXPECT_EQ(total, j["weights_bytes"].get<std::size_t>());
  EXPECT_EQ(fs::file_size(dir / "weights.bin"), total);
}

TEST(Checkpoint, LoadErrors) {
  auto cfg = tiny_train_config();
  cfg.epochs = 0;
  const auto dir = testing::temp_dir("load_errors");
  train(cfg, tiny_scenes(), dir, quiet());
  const std::string manifest = slurp(dir / "manifest.json");
  const std::string weights = slurp(dir / "weights.bin");

  auto j = nlohmann::json::parse(manifest);
  j["format_version"] = 99;
  std::ofstream(dir / "manifest.json") << j.dump();
  EXPECT_THROW(load_checkpoint(dir), ManifestError);

  std::ofstream(dir / "manifest.json") << manifest;
  std::ofstream(dir / "weights.bin", std::ios::binary) << weights.substr(0, weights.size() / 2);
  EXPECT_THROW(load_checkpoint(dir), LoadError);

  fs::remove(dir / "weights.bin");
  EXPECT_THROW(load_checkpoint(dir), LoadError);
  EXPECT_THROW(load_checkpoint(dir / "missing"), LoadError);
}

TEST(Evaluation, OracleIsPerfect) {
  TrainConfig cfg = tiny_train_config();
  const auto e = evaluate_oracle(cfg.model, tiny_scenes(6));
  EXPECT_EQ(e.hr.mae, 0.0);
  EXPECT_DOUBLE_EQ(e.hr.ap, 1.0);
  const auto j = nlohmann::json::parse(e.to_json());
  EXPECT_EQ(j["format"], "madanet-eval");
  EXPECT_TRUE(j.contains("ae_difference_by_count"));
  EXPECT_THROW(evaluate_oracle(cfg.model, {}), EvalError);
}

TEST(Evaluation, WritesCompanionCsvs) {
  const auto e = evaluate_oracle(tiny_train_config().model, tiny_scenes(3));
  const auto dir = testing::temp_dir("eval_files");
  write_evaluation(e, dir / "report.json");
  EXPECT_TRUE(fs::exists(dir / "report.json"));
  EXPECT_TRUE(fs::exists(dir / "report_lr_by_count.csv"));
  EXPECT_TRUE(fs::exists(dir / "report_hr_by_count.csv"));
  EXPECT_TRUE(fs::exists(dir / "report_ae_difference.csv"));
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(MADANET_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const auto dir = testing::temp_dir("cli_codes");
  EXPECT_EQ(run_cli("gradcheck --op linear"), 0);
  EXPECT_EQ(run_cli("gradcheck --op nope"), 1);
  EXPECT_EQ(run_cli("generate"), 64);
  EXPECT_EQ(run_cli("frobnicate"), 64);
  EXPECT_EQ(run_cli("eval --ckpt " + (dir / "none").string() + " --data " + dir.string() +
                    " --out " + (dir / "e.json").string()),
            1);
  EXPECT_EQ(run_cli("generate --out " + (dir / "d").string() +
                    " --count 3 --image-size 64 --max-count 2"),
            0);
  EXPECT_TRUE(fs::exists(dir / "d" / "train" / "annotations.json"));
}

}  // namespace
}  // namespace madanet
