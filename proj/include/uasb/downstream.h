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

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uasb/fusion.h"
#include "uasb/gan.h"
#include "uasb/kmeans.h"
#include "uasb/text_encoder.h"
#include "uasb/world.h"

namespace uasb::downstream {

enum class TaskKind { kIntent, kTagging };

struct Utterance {
  FeatureSequence speech;
  std::vector<int> sentence;
  int label = 0;                  // intent
  std::vector<int> frame_labels;  // tagging
};

struct ProbeTask {
  TaskKind kind = TaskKind::kIntent;
  std::string name;
  std::size_t n_classes = 2;
  std::vector<Utterance> train, dev, test;
  std::vector<std::array<int, 3>> trigrams;  // intent: class -> designated trigram
  std::vector<int> slot_set;                 // tagging: slot phonemes
};

// Class c is the presence of designated trigram c. Items are generated
// round-robin over classes; each sentence is redrawn until exactly one
// designated trigram occurs in it, once.
ProbeTask make_intent_task(const World& world, std::size_t n_classes = 6, std::size_t n_items = 1500,
                           std::uint64_t seed = 1);

// Frames whose gold phoneme is in the slot set are labeled 1. An empty
// optional picks two phonemes.
ProbeTask make_tagging_task(const World& world, std::uint64_t seed = 1, std::size_t n_items = 600,
                            std::optional<std::vector<int>> slot_set = std::nullopt);

// Span F1 after collapsing consecutive positive frames; a predicted span
// counts only with exactly matching boundaries. Both empty gives 1.0.
double span_f1(const std::vector<std::vector<int>>& gold, const std::vector<std::vector<int>>& pred);

// Utterance -> T x k frame features.
using FeaturesFn = std::function<FeatureSequence(const Utterance&)>;

struct ProbeOptions {
  std::size_t epochs = 40;
  double lr = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  // Canonical text for the report's config hash.
  std::string describe() const;
};

struct ProbeResult {
  double metric = 0.0;  // accuracy (intent) or span F1 (tagging)
  std::string metric_name;
};

// Frozen features, z-scored with training statistics, into a linear
// softmax head trained by minibatch SGD. Intent mean-pools over time first.
ProbeResult train_probe(const ProbeTask& task, const FeaturesFn& features, const ProbeOptions& options);

// Same, with features precomputed per split (train, dev, test order).
struct SplitFeatures {
  std::vector<FeatureSequence> train, dev, test;
};
SplitFeatures compute_features(const ProbeTask& task, const FeaturesFn& features);
ProbeResult train_probe(const ProbeTask& task, const SplitFeatures& features, const ProbeOptions& options);

// Per-frame linear phoneme classifier against gold alignments of freshly
// rendered speech from `world`; returns test accuracy.
struct FrameProbeOptions {
  std::size_t n_items = 400;
  std::uint64_t data_seed = 1;
  ProbeOptions probe;
};
double frame_phoneme_probe(const std::function<FeatureSequence(const FeatureSequence&)>& features,
                           const World& world, const FrameProbeOptions& options = {});

// ----- experiment matrix

enum class Connector { kNone, kKmeans, kUasr };

struct ExperimentConfig {
  char cell = 'A';
  Connector connector = Connector::kNone;
  std::optional<text::Variant> text_model;
};

// The fixed A-F mapping. Throws ConfigError for other letters.
ExperimentConfig cell_config(char cell);

struct Artifacts {
  std::optional<gan::GeneratorConfig> gen_cfg;
  std::optional<Parameters> generator;
  std::optional<kmeans::Codebook> codebook;
  std::vector<int> cluster_dictionary;  // cluster id -> phoneme token
  std::map<text::Variant, text::TextEncoder> encoders;
  fusion::AssignMode assign;
};

// Feature construction for one cell. Throws ConfigError naming the missing
// artifact.
FeaturesFn cell_features(const ExperimentConfig& cell, const Artifacts& artifacts);

struct ReportRow {
  char cell = 'A';
  std::string seed;  // number, or "median"
  std::string task;
  std::string metric;
  double value = 0.0;
};

struct Report {
  std::string config_hash;
  std::vector<ReportRow> rows;
  std::map<char, std::string> errors;  // per-cell failures

  std::optional<double> median(char cell, const std::string& task) const;
};

Report run_matrix(const std::vector<ExperimentConfig>& cells, const std::vector<const ProbeTask*>& tasks,
                  const Artifacts& artifacts, const std::vector<std::uint64_t>& seeds,
                  const ProbeOptions& probe);

// "# config_hash=<hex>" then "cell,seed,task,metric,value".
void write_report_csv(std::ostream& out, const Report& report);

double median_of(std::vector<double> values);

}  // namespace uasb::downstream
