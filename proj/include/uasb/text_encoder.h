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
#include <span>
#include <string>
#include <vector>

#include "uasb/params.h"
#include "uasb/tensor.h"
#include "uasb/world.h"

namespace uasb::text {

enum class Variant { kTrained, kRandom, kMismatched };

const char* variant_name(Variant v);
// Throws ConfigError on anything but "trained", "random" or "mismatched".
Variant parse_variant(const std::string& name);

struct TextEncoderConfig {
  // Phoneme vocabulary; the model adds pad (= V) and mask sentinel (= V + 1).
  std::size_t vocab_size = 8;
  std::size_t embed_dim = 32;
  std::size_t layers = 2;
  std::size_t output_dim = 32;
  std::size_t kernel_width = 3;
  Variant variant = Variant::kTrained;
};

struct TextEncoder {
  TextEncoderConfig cfg;
  // text.embed, text.block<i>.{kernel,bias,gain,shift}
  Parameters params;
  // Mismatched variant only: the random dictionary applied to inputs at
  // encode time, and the one that scrambled the pretraining corpus.
  std::vector<int> permutation;
  std::vector<int> pretrain_permutation;

  int pad_id() const { return static_cast<int>(cfg.vocab_size); }
  int sentinel_id() const { return static_cast<int>(cfg.vocab_size) + 1; }
  std::size_t model_vocab() const { return cfg.vocab_size + 2; }
};

TextEncoder init_text_encoder(const TextEncoderConfig& cfg, std::uint64_t seed);

// Forward pass on ids already in model space (phonemes, pad, sentinel).
Tensor encode_ids(Tape& tape, const TextEncoder& enc, std::span<const int> ids);
// T x e contextual embeddings. The mismatched variant maps tokens through
// its dictionary first.
Tensor encode(const TextEncoder& enc, std::span<const int> tokens);

struct PretrainOptions {
  std::size_t steps = 1500;
  std::size_t batch_size = 16;
  double mask_rate = 0.15;
  double mean_span = 3.0;
  double lr = 3e-3;
  std::uint64_t seed = 1;
};

struct PretrainResult {
  std::vector<double> loss_curve;  // one entry per step
  double masked_accuracy = 0.0;    // on a fixed corruption of the corpus, after training
};

// Masks geometric-length spans covering about mask_rate of the tokens.
// Returns the masked positions, sorted, at least one.
std::vector<std::size_t> sample_spans(std::size_t length, double mask_rate, double mean_span, Rng& rng);

// Span-corruption pretraining: every masked token is replaced by the
// sentinel (lengths are preserved) and a linear head, discarded afterwards,
// reconstructs it. Rejects the random variant.
PretrainResult pretrain_span_corruption(TextEncoder& enc, const std::vector<PhonemeSequence>& corpus,
                                        const PretrainOptions& options);

// Accuracy of always predicting the corpus's most frequent token.
double unigram_majority_baseline(const std::vector<PhonemeSequence>& corpus, std::size_t vocab);

}  // namespace uasb::text
