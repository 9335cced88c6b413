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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "uasb/tensor.h"

namespace uasb {

// Phoneme inventory. When silence is enabled it occupies index 0.
class Vocabulary {
 public:
  Vocabulary(std::vector<std::string> tokens, bool has_silence);

  // "sil" (optional) followed by single-character phoneme names a, b, c, ...
  static Vocabulary make_default(std::size_t size, bool with_silence);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::optional<int> find(std::string_view token) const;
  bool has_silence() const { return has_silence_; }
  // -1 when there is no silence token.
  int silence_id() const { return has_silence_ ? 0 : -1; }
  // Index of the first non-silence token.
  int first_phoneme() const { return has_silence_ ? 1 : 0; }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  bool has_silence_;
};

// Row-stochastic bigram model plus a start distribution.
struct BigramLm {
  std::size_t vocab_size = 0;
  std::vector<double> start;        // V
  std::vector<double> transitions;  // V x V, row = previous token

  double prob(int prev, int next) const {
    return transitions[static_cast<std::size_t>(prev) * vocab_size + next];
  }
  // Maximum-likelihood estimate from token sequences, with `add_k` added to
  // every count (rows with no data become uniform).
  static BigramLm estimate(const std::vector<std::vector<int>>& sentences,
                           std::size_t vocab_size, double add_k);
};

// Stationary distribution of a row-stochastic matrix, by direct solve.
std::vector<double> stationary_distribution(const std::vector<double>& transitions,
                                            std::size_t vocab_size);

struct WorldSpec {
  std::size_t vocab_size = 8;
  bool silence = false;
  std::size_t feature_dim = 16;
  double sigma = 0.3;
  std::size_t dur_min = 2;
  std::size_t dur_max = 4;
  std::size_t min_len = 5;
  std::size_t max_len = 20;
  double self_cap = 0.3;
  double radius = 2.0;
  // Minimum pairwise distance between emission means, in units of sigma.
  double separation = 4.0;
  std::uint64_t seed = 1;
};

// A fully drawn synthetic world: vocabulary, emission means and language
// model. Stands in for the speech encoder (frames = mean + Gaussian noise).
struct World {
  WorldSpec spec;
  Vocabulary vocab;
  std::vector<float> means;  // V x d
  BigramLm lm;

  static World create(const WorldSpec& spec);
  const float* mean(int token) const { return means.data() + static_cast<std::size_t>(token) * spec.feature_dim; }
};

// H = (h_1, ..., h_T), row-major T x d.
struct FeatureSequence {
  std::string id;
  std::size_t dim = 0;
  std::vector<float> frames;
  // Per-frame generating phoneme. Synthetic worlds only; never used by
  // unsupervised training.
  std::vector<std::uint16_t> gold_alignment;

  std::size_t length() const { return dim == 0 ? 0 : frames.size() / dim; }
  const float* frame(std::size_t t) const { return frames.data() + t * dim; }
  Tensor tensor() const { return Tensor({length(), dim}, frames); }
  bool operator==(const FeatureSequence&) const = default;
};

struct PhonemeSequence {
  std::string id;
  std::vector<int> tokens;
  bool operator==(const PhonemeSequence&) const = default;
};

struct Corpora {
  std::vector<FeatureSequence> speech;
  std::vector<PhonemeSequence> speech_sentences;  // generating sentences, oracle use only
  std::vector<PhonemeSequence> text;
};

// One phoneme sentence from the LM (non-silence tokens only).
std::vector<int> sample_sentence(const World& world, Rng& rng);

// Renders a sentence as frames. Repeated tokens are separated by a silence
// segment when the world has silence.
FeatureSequence render_speech(const World& world, const std::vector<int>& sentence,
                              std::string id, Rng& rng);

// Unpaired corpora: no speech sentence appears verbatim in the text side.
Corpora generate_corpora(const World& world, std::size_t n_speech,
                         std::size_t n_text, std::uint64_t seed);

// Collapses consecutive duplicates, then drops silence.
std::vector<int> collapse_alignment(std::span<const std::uint16_t> alignment,
                                    int silence_id);

// Mixes a base seed with an index into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace uasb
