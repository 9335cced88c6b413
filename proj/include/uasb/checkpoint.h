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
#include <string>
#include <vector>

#include "uasb/gan.h"
#include "uasb/kmeans.h"
#include "uasb/params.h"
#include "uasb/text_encoder.h"

namespace uasb::ckpt {

enum class DType : std::uint8_t { kF32 = 1, kI32 = 2 };

struct Entry {
  std::string name;
  DType dtype = DType::kF32;
  std::vector<std::uint64_t> dims;
  std::vector<char> payload;  // little-endian, row-major
};

// Named arrays in insertion (or file) order, so save -> load -> save is
// byte-identical.
class Checkpoint {
 public:
  void put_floats(const std::string& name, const std::vector<std::uint64_t>& dims, const std::vector<float>& v);
  void put_ints(const std::string& name, const std::vector<std::uint64_t>& dims, const std::vector<int>& v);
  void put_tensor(const std::string& name, const Tensor& t);

  bool contains(const std::string& name) const;
  const Entry& entry(const std::string& name) const;
  std::vector<float> floats(const std::string& name) const;
  std::vector<int> ints(const std::string& name) const;
  Tensor tensor(const std::string& name) const;

  const std::vector<Entry>& entries() const { return entries_; }
  void add_entry(Entry e);

 private:
  std::vector<Entry> entries_;
};

inline constexpr std::uint32_t kVersion = 1;

std::vector<char> serialize(const Checkpoint& c);
// Validates magic, version and every declared size against the bytes
// actually present; throws IoError on anything malformed.
Checkpoint deserialize(const std::vector<char>& bytes, const std::string& context = "checkpoint");
void save(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load(const std::filesystem::path& path);

// Every parameter whose name starts with `prefix`, in stored order.
void put_params(Checkpoint& c, const Parameters& p);
Parameters get_params(const Checkpoint& c, const std::string& prefix);

void put_generator(Checkpoint& c, const gan::GeneratorConfig& cfg, const Parameters& gen);
gan::GeneratorConfig get_generator_config(const Checkpoint& c);

void put_codebook(Checkpoint& c, const kmeans::Codebook& cb);
kmeans::Codebook get_codebook(const Checkpoint& c);

void put_text_encoder(Checkpoint& c, const text::TextEncoder& enc);
text::TextEncoder get_text_encoder(const Checkpoint& c);

}  // namespace uasb::ckpt
