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

#include <functional>
#include <vector>

#include "uasb/config.h"
#include "uasb/downstream.h"

namespace uasb::pipeline {

struct Data {
  World world;
  Corpora train;
  Corpora valid;
};

// World from world.*, training corpora from data.seed, validation speech from
// an independent stream.
Data make_data(const config::RunSettings& s);

// Cluster ids on the auxiliary view (random projection to aux_proj_dim plus
// Gaussian noise), downsampled to the generator stride.
std::vector<std::vector<int>> aux_cluster_ids(const config::RunSettings& s,
                                              const std::vector<FeatureSequence>& speech);

struct UasrOutcome {
  std::vector<gan::TrainResult> runs;  // one per restart, seeds gan.seed + r
  std::size_t best = 0;                // restart chosen without labels
  Parameters generator;
};

using Progress = std::function<void(std::size_t restart, const gan::StepMetrics&)>;

// Runs gan.restarts independent trainings and keeps the restart whose
// selected checkpoint scores best under the same unsupervised criterion.
UasrOutcome train_uasr(const config::RunSettings& s, const Data& d, const Progress& progress = {});

kmeans::Codebook fit_kmeans(const config::RunSettings& s, const std::vector<FeatureSequence>& speech);

// Random variant is returned as initialised; the others are pretrained on
// `text`.
text::TextEncoder make_text_encoder(const config::RunSettings& s, text::Variant v,
                                    const std::vector<PhonemeSequence>& text,
                                    text::PretrainResult* report = nullptr);

// Cluster ids read directly as token ids (modulo the phoneme vocabulary).
std::vector<int> cluster_tokens(std::size_t k, std::size_t vocab);

}  // namespace uasb::pipeline
