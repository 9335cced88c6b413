// Copyright 2026 The uasb Authors.
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

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "uasb/downstream.h"
#include "uasb/gan.h"
#include "uasb/kmeans.h"
#include "uasb/text_encoder.h"
#include "uasb/world.h"

namespace uasb::config {

// Every tunable of a run. Vocabulary and feature sizes are owned by the
// world and copied into the model configs on resolve.
struct RunSettings {
  WorldSpec world;
  std::size_t n_speech = 2000;
  std::size_t n_text = 2000;
  std::size_t n_valid = 200;
  std::uint64_t data_seed = 1;

  gan::TrainOptions uasr;
  std::size_t restarts = 3;

  kmeans::FitOptions kmeans;
  std::size_t aux_proj_dim = 2;
  double aux_noise = 0.5;

  text::TextEncoderConfig text;
  std::uint64_t text_seed = 1;
  text::PretrainOptions pretrain;

  fusion::AssignMode assign;

  downstream::ProbeOptions probe;
  std::vector<std::uint64_t> probe_seeds{1, 2, 3, 4, 5};
  std::size_t intent_classes = 6;
  std::size_t intent_items = 1500;
  std::uint64_t intent_seed = 1;
  std::size_t tagging_items = 600;
  std::uint64_t tagging_seed = 1;
  std::size_t frame_items = 400;
};

// `key = value` lines; `#` starts a comment; blank lines ignored.
class RunConfig {
 public:
  static RunConfig parse(const std::string& text, const std::string& source = "config");
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Applies the config over the defaults. Unknown keys and malformed values
// throw ConfigError naming the key.
RunSettings resolve(const RunConfig& cfg);

// Fully resolved config, one `key = value` per line in key order. Parsing
// the output reproduces the same settings.
std::string dump(const RunSettings& s);

std::vector<std::string> known_keys();

}  // namespace uasb::config
