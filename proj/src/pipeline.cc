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

#include "uasb/pipeline.h"

#include "uasb/errors.h"

namespace uasb::pipeline {

Data make_data(const config::RunSettings& s) {
  Data d{World::create(s.world), {}, {}};
  d.train = generate_corpora(d.world, s.n_speech, s.n_text, s.data_seed);
  d.valid = generate_corpora(d.world, s.n_valid, 1, derive_seed(s.data_seed, 0xda7a));
  for (auto& h : d.valid.speech) h.id = "valid-" + h.id;
  return d;
}

std::vector<std::vector<int>> aux_cluster_ids(const config::RunSettings& s,
                                              const std::vector<FeatureSequence>& speech) {
  const std::size_t K = s.uasr.aux_clusters;
  if (K == 0) return {};
  if (speech.empty()) throw ConfigError("aux clusters: empty corpus");
  const std::size_t d = speech.front().dim, p = s.aux_proj_dim;
  Rng rng(derive_seed(s.kmeans.seed, 0xa0c5));
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> proj(d * p);
  for (double& x : proj) x = n01(rng) / std::sqrt(double(d));
  std::normal_distribution<double> noise(0.0, s.aux_noise);

  std::vector<std::vector<float>> views;
  std::vector<float> all;
  for (const auto& h : speech) {
    std::vector<float> v(h.length() * p);
    for (std::size_t t = 0; t < h.length(); ++t)
      for (std::size_t j = 0; j < p; ++j) {
        double acc = noise(rng);
        for (std::size_t i = 0; i < d; ++i) acc += h.frame(t)[i] * proj[i * p + j];
        v[t * p + j] = static_cast<float>(acc);
      }
    all.insert(all.end(), v.begin(), v.end());
    views.push_back(std::move(v));
  }
  kmeans::FitOptions o = s.kmeans;
  o.k = K;
  const kmeans::Codebook cb = kmeans::fit(all, p, o);
  std::vector<std::vector<int>> ids;
  for (const auto& v : views) ids.push_back(gan::downsample_ids(kmeans::assign(cb, v, p), s.uasr.gen.stride));
  return ids;
}

UasrOutcome train_uasr(const config::RunSettings& s, const Data& d, const Progress& progress) {
  const auto aux = aux_cluster_ids(s, d.train.speech);
  UasrOutcome out;
  std::vector<gan::CheckpointRecord> picks;
  for (std::size_t r = 0; r < s.restarts; ++r) {
    gan::TrainOptions o = s.uasr;
    o.hp.seed = s.uasr.hp.seed + r;
    gan::StepCallback cb;
    if (progress) cb = [&progress, r](const gan::StepMetrics& m) { progress(r, m); };
    out.runs.push_back(gan::train(d.train.speech, d.train.text, d.valid.speech, o, aux, cb));
    const gan::TrainResult& run = out.runs.back();
    for (const auto& rec : run.history)
      if (rec.step == run.selected_step) {
        picks.push_back(rec);
        picks.back().step = r;
      }
  }
  std::vector<std::vector<int>> sentences;
  for (const auto& t : d.train.text) sentences.push_back(t.tokens);
  const BigramLm lm = BigramLm::estimate(sentences, s.world.vocab_size, 1.0);
  out.best = gan::select_checkpoint(picks, lm);
  out.generator = out.runs[out.best].selected.clone();
  return out;
}

kmeans::Codebook fit_kmeans(const config::RunSettings& s, const std::vector<FeatureSequence>& speech) {
  if (speech.empty()) throw ConfigError("kmeans: empty corpus");
  std::vector<float> all;
  for (const auto& h : speech) all.insert(all.end(), h.frames.begin(), h.frames.end());
  return kmeans::fit(all, speech.front().dim, s.kmeans);
}

text::TextEncoder make_text_encoder(const config::RunSettings& s, text::Variant v,
                                    const std::vector<PhonemeSequence>& text, text::PretrainResult* report) {
  text::TextEncoderConfig cfg = s.text;
  cfg.variant = v;
  text::TextEncoder enc = text::init_text_encoder(cfg, s.text_seed);
  if (v != text::Variant::kRandom) {
    text::PretrainResult r = text::pretrain_span_corruption(enc, text, s.pretrain);
    if (report) *report = std::move(r);
  }
  return enc;
}

std::vector<int> cluster_tokens(std::size_t k, std::size_t vocab) {
  std::vector<int> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = static_cast<int>(i % vocab);
  return out;
}

}  // namespace uasb::pipeline
