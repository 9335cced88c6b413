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

#include <filesystem>
#include <vector>

#include "uasb/world.h"

namespace uasb {

// Binary container "UASB-FTR" v1, little-endian:
//   magic[8] u32 version u64 count
//   per item: u32 id_len, id bytes, u64 T, u64 d, u8 has_alignment,
//             T*d f32 frames, [T u16 alignment]
void save_features(const std::filesystem::path& path,
                   const std::vector<FeatureSequence>& items);
std::vector<FeatureSequence> load_features(const std::filesystem::path& path);

// One utterance per line: "<id>\t<tok> <tok> ...". A line without a tab is
// all tokens and gets the id "utt-<line number>".
void save_text(const std::filesystem::path& path,
               const std::vector<PhonemeSequence>& items, const Vocabulary& vocab);
std::vector<PhonemeSequence> load_text(const std::filesystem::path& path,
                                       const Vocabulary& vocab);

}  // namespace uasb
