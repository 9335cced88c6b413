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
#include <span>
#include <string>
#include <vector>

#include "uasb/gan.h"
#include "uasb/posteriorgram.h"
#include "uasb/tensor.h"
#include "uasb/text_encoder.h"
#include "uasb/world.h"

namespace uasb::fusion {

enum class Construction { kAugment, kConnector };

struct Span {
  std::string component;  // "ssl", "uasr", "text"
  std::size_t begin = 0;  // columns [begin, end)
  std::size_t end = 0;
  bool operator==(const Span&) const = default;
};

struct FusedFeatures {
  std::string id;
  std::size_t length = 0;
  std::size_t width = 0;
  std::vector<float> matrix;  // length x width, row-major
  Construction construction = Construction::kAugment;
  std::vector<Span> spans;

  const float* row(std::size_t t) const { return matrix.data() + t * width; }
  // As a FeatureSequence of dim `width` (no alignment).
  FeatureSequence as_features() const;
};

// Repeats every row `stride` times and truncates to `target_len` rows.
// x: rows x cols row-major. Requires rows == ceil(target_len / stride).
std::vector<float> upsample_repeat(std::span<const float> x, std::size_t rows, std::size_t cols,
                                   std::size_t target_len, std::size_t stride);

struct AssignMode {
  bool gumbel = false;
  float temperature = 1.0f;
  std::uint64_t seed = 0;
  // Encode the run-collapsed token sequence and repeat each embedding over
  // its run, so the text encoder sees the duplicate-free input it was
  // pretrained on.
  bool collapse_runs = true;
};

// One token per posteriorgram row; duplicates retained.
std::vector<int> assign(const Posteriorgram& p, const AssignMode& mode = {});

// Augmentation: H next to the upsampled posteriorgram.
FusedFeatures f_uasr_features(const FeatureSequence& h, const gan::GeneratorConfig& cfg,
                              const Parameters& gen);

// Connector: H, the upsampled posteriorgram, and the upsampled text-encoder
// output on the assigned tokens.
FusedFeatures f_speech_text_features(const FeatureSequence& h, const gan::GeneratorConfig& cfg,
                                     const Parameters& gen, const text::TextEncoder& encoder,
                                     const AssignMode& mode = {});

// T' x e text block for frame-rate tokens, optionally through run collapse.
Tensor encode_tokens(const text::TextEncoder& encoder, const std::vector<int>& tokens, bool collapse_runs);

// Generic three-block construction from an arbitrary frame-synchronous
// distribution block and its tokens (used for the k-means connector).
FusedFeatures concat_blocks(const std::string& id, std::size_t length,
                            const std::vector<std::pair<Span, std::vector<float>>>& blocks,
                            Construction construction);

// True when the spans tile [0, width) without gaps or overlap.
bool spans_partition(const std::vector<Span>& spans, std::size_t width);

// Sidecar manifest: one "component<TAB>begin<TAB>end" line per span, preceded
// by "construction<TAB>eq2|eq3" and "width<TAB>N".
void write_manifest(const std::filesystem::path& path, const FusedFeatures& example);
std::vector<Span> read_manifest(const std::filesystem::path& path, std::size_t* width = nullptr);

}  // namespace uasb::fusion
