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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "uasb/posteriorgram.h"
#include "uasb/world.h"

namespace uasb::eval {

// Argmax per frame (ties to the lower index), runs collapsed, silence
// dropped after collapsing.
struct DecodedSequence {
  std::string id;
  std::vector<int> tokens;
};

// Per-row argmax with ties to the lower index.
std::vector<int> frame_argmax(const Posteriorgram& p);

DecodedSequence decode_collapse(const Posteriorgram& p, int silence_id);

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;

  std::size_t total() const { return substitutions + insertions + deletions; }
};

// Unit-cost Levenshtein alignment of hyp against ref.
EditCounts edit_distance(std::span<const int> ref, std::span<const int> hyp);

// (S + I + D) / |ref|. Empty references are rejected.
double phone_error_rate(std::span<const int> ref, std::span<const int> hyp);

// exp(-(1/L) sum log p(tok_i | tok_{i-1})), the first token scored by the
// start distribution. Each LM row is mixed with `smoothing` uniform mass.
double bigram_perplexity(std::span<const int> seq, const BigramLm& lm,
                         double smoothing = 0.1);

// Summed log-probability and token count, for corpus-level perplexity.
struct LogProb {
  double log_prob = 0.0;
  std::size_t tokens = 0;
};
LogProb bigram_log_prob(std::span<const int> seq, const BigramLm& lm, double smoothing = 0.1);

struct PerRow {
  std::string id;
  std::size_t ref_len = 0;
  EditCounts counts;
  double per = 0.0;
};

// Pairs refs and hyps by id (every ref must have a hyp).
std::vector<PerRow> evaluate(const std::vector<PhonemeSequence>& refs,
                             const std::vector<PhonemeSequence>& hyps);
// Corpus PER: total edits over total reference length.
double corpus_per(const std::vector<PerRow>& rows);

// CSV "id,ref_len,S,I,D,per".
void write_per_csv(const std::filesystem::path& path, const std::vector<PerRow>& rows);

}  // namespace uasb::eval
