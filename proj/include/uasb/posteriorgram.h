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
#include <string>
#include <vector>

namespace uasb {

// G(H): per-output-frame phoneme distributions at `stride` relative to the
// source FeatureSequence. probs is rows x vocab, each row sums to 1.
struct Posteriorgram {
  std::string id;
  std::size_t vocab = 0;
  std::size_t stride = 1;
  std::vector<float> probs;

  std::size_t rows() const { return vocab == 0 ? 0 : probs.size() / vocab; }
  const float* row(std::size_t t) const { return probs.data() + t * vocab; }
};

}  // namespace uasb
