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

#include "madanet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "config_json.hpp"

namespace madanet {
namespace {

using detail::json;

struct Entry {
  std::string name;
  Tensor<float>* tensor;
};

// Every network tensor in visit order, tagged by kind.
std::vector<Entry> network_tensors(MadaCenterNet<float>& net) {
  struct Collect : StateVisitor<float> {
    std::vector<Entry> params, buffers;
    void parameter(const std::string& name, Var<float>& v) override {
      params.push_back({"param/" + name, &v.mutable_value()});
    }
    void buffer(const std::string& name, Tensor<float>& t) override {
      buffers.push_back({"buffer/" + name, &t});
    }
  } c;
  net.visit("", c);
  c.params.insert(c.params.end(), c.buffers.begin(), c.buffers.end());
  return c.params;
}

std::vector<Entry> optimizer_tensors(Adam& adam) {
  std::vector<Entry> out;
  const auto& params = adam.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back({"adam_m/" + params[i].first, &adam.first_moments()[i]});
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back({"adam_v/" + params[i].first, &adam.second_moments()[i]});
  }
  return out;
}

void write_le(std::ostream& out, const Tensor<float>& t) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(float)));
  } else {
    for (float f : t.span()) {
      const auto bits = std::bit_cast<std::uint32_t>(f);
      const char b[4] = {char(bits), char(bits >> 8), char(bits >> 16), char(bits >> 24)};
      out.write(b, 4);
    }
  }
}

void read_le(const std::string& blob, std::size_t offset, Tensor<float>& t) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(t.data(), blob.data() + offset, t.size() * sizeof(float));
  } else {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto* b = reinterpret_cast<const unsigned char*>(blob.data() + offset + 4 * i);
      const std::uint32_t bits = b[0] | (b[1] << 8) | (b[2] << 16) | (std::uint32_t(b[3]) << 24);
      t[i] = std::bit_cast<float>(bits);
    }
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  json m;
  try {
    m = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ManifestError(path.string() + ": malformed JSON: " + e.what());
  }
  const int version = m.value("format_version", -1);
  if (version != kCheckpointFormatVersion) {
    throw ManifestError(path.string() + ": format version " + std::to_string(version) +
                        ", this build reads version " +
                        std::to_string(kCheckpointFormatVersion));
  }
  return m;
}

// Fills `entries` from the manifest table; every entry must be present with
// a matching shape.
void restore(const std::filesystem::path& dir, const json& manifest,
             const std::vector<Entry>& entries) {
  const std::string blob = read_file(dir / "weights.bin");
  const auto expected = manifest.value("weights_bytes", std::size_t{0});
  if (blob.size() != expected) {
    throw LoadError((dir / "weights.bin").string() + " has " + std::to_string(blob.size()) +
                    " bytes, manifest records " + std::to_string(expected));
  }
  std::map<std::string, const json*> table;
  for (const auto& t : manifest.at("tensors")) table[t.at("name").get<std::string>()] = &t;
  for (const Entry& e : entries) {
    auto it = table.find(e.name);
    if (it == table.end()) throw ManifestError("checkpoint has no tensor '" + e.name + "'");
    const json& t = *it->second;
    const auto dims = t.at("shape").get<std::vector<int>>();
    const Shape s = e.tensor->shape();
    if (dims != std::vector<int>{s.n, s.c, s.h, s.w}) {
      throw ManifestError("tensor '" + e.name + "' has shape " + t.at("shape").dump() +
                          ", model expects " + s.str());
    }
    const std::size_t offset = t.at("offset").get<std::size_t>();
    if (offset + e.tensor->size() * sizeof(float) > blob.size()) {
      throw LoadError((dir / "weights.bin").string() + " is truncated at '" + e.name + "'");
    }
    read_le(blob, offset, *e.tensor);
  }
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) {
  return detail::to_json_value(config).dump(2);
}

ModelConfig model_config_from_json(const std::string& text) {
  ModelConfig c;
  detail::read_into(detail::parse_json(text, "model config"), c, "model");
  c.validate();
  return c;
}

void save_checkpoint(const std::filesystem::path& dir, MadaCenterNet<float>& net,
                     const TrainState& state, const Adam* optimizer,
                     const std::string& train_config) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::vector<Entry> entries = network_tensors(net);
  if (optimizer) {
    auto extra = optimizer_tensors(const_cast<Adam&>(*optimizer));
    entries.insert(entries.end(), extra.begin(), extra.end());
  }
  json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["model"] = detail::to_json_value(net.config());
  manifest["epoch"] = state.epoch;
  manifest["step"] = state.step;
  manifest["rng_state"] = {{"shuffle", state.shuffle_rng}, {"augment", state.augment_rng}};
  manifest["optimizer"] = optimizer ? json{{"type", "adam"}, {"steps", optimizer->steps()}}
                                    : json(nullptr);
  manifest["train_config"] =
      train_config.empty() ? json(nullptr) : detail::parse_json(train_config, "train config");
  manifest["dtype"] = "float32-le";
  json table = json::array();
  const auto weights_tmp = dir / "weights.bin.tmp";
  {
    std::ofstream out(weights_tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + weights_tmp.string());
    std::size_t offset = 0;
    for (const Entry& e : entries) {
      const Shape s = e.tensor->shape();
      table.push_back({{"name", e.name},
                       {"shape", {s.n, s.c, s.h, s.w}},
                       {"offset", offset},
                       {"count", e.tensor->size()}});
      write_le(out, *e.tensor);
      offset += e.tensor->size() * sizeof(float);
    }
    manifest["weights_bytes"] = offset;
    if (!out) throw IoError("failed writing " + weights_tmp.string());
  }
  manifest["tensors"] = std::move(table);
  const auto manifest_tmp = dir / "manifest.json.tmp";
  {
    std::ofstream out(manifest_tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write " + manifest_tmp.string());
    out << manifest.dump(2) << "\n";
    if (!out) throw IoError("failed writing " + manifest_tmp.string());
  }
  std::filesystem::rename(weights_tmp, dir / "weights.bin", ec);
  if (!ec) std::filesystem::rename(manifest_tmp, dir / "manifest.json", ec);
  if (ec) throw IoError("cannot finalize checkpoint in " + dir.string() + ": " + ec.message());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  const json manifest = read_manifest(dir);
  LoadedCheckpoint out;
  try {
    detail::read_into(manifest.at("model"), out.model, "manifest.model");
    out.model.validate();
    out.state.epoch = manifest.at("epoch").get<int>();
    out.state.step = manifest.at("step").get<long>();
    out.state.shuffle_rng = manifest.at("rng_state").at("shuffle").get<std::string>();
    out.state.augment_rng = manifest.at("rng_state").at("augment").get<std::string>();
    if (!manifest.at("train_config").is_null()) out.train_config = manifest["train_config"].dump(2);
  } catch (const json::exception& e) {
    throw ManifestError((dir / "manifest.json").string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ManifestError((dir / "manifest.json").string() + ": " + e.what());
  }
  Rng unused(0);
  out.net = std::make_unique<MadaCenterNet<float>>(unused, out.model);
  try {
    restore(dir, manifest, network_tensors(*out.net));
  } catch (const json::exception& e) {
    throw ManifestError((dir / "manifest.json").string() + ": " + e.what());
  }
  return out;
}

void load_optimizer_state(const std::filesystem::path& dir, Adam& optimizer) {
  const json manifest = read_manifest(dir);
  try {
    if (manifest.at("optimizer").is_null()) {
      throw ManifestError(dir.string() + ": checkpoint has no optimizer state");
    }
    restore(dir, manifest, optimizer_tensors(optimizer));
    optimizer.set_steps(manifest["optimizer"].at("steps").get<long>());
  } catch (const json::exception& e) {
    throw ManifestError((dir / "manifest.json").string() + ": " + e.what());
  }
}

}  // namespace madanet
