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

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "uasb/errors.h"

namespace uasb::detail {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; big-endian hosts need byte swapping");

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&value);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void put_string_u32(std::string_view s) {
    put(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

// Every read is checked against the remaining length, so declared sizes in
// a corrupt file can never trigger an oversized allocation.
class ByteReader {
 public:
  ByteReader(const std::vector<char>& buf, std::string context)
      : buf_(buf), context_(std::move(context)) {}

  template <typename T>
  T get() {
    T value;
    require(sizeof(T));
    std::memcpy(&value, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  void get_bytes(void* out, std::size_t n) {
    require(n);
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::string get_string_u32() {
    const auto n = get<std::uint32_t>();
    require(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  // Throws unless `count * elem` more bytes are present (overflow-safe).
  void require_elems(std::uint64_t count, std::uint64_t elem) {
    if (elem != 0 && count > remaining() / elem) truncated(count * elem);
  }
  std::size_t remaining() const { return buf_.size() - pos_; }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void require(std::uint64_t n) {
    if (n > remaining()) truncated(n);
  }
  [[noreturn]] void truncated(std::uint64_t n) const {
    throw IoError(IoErrorKind::kTruncated,
                  context_ + ": truncated file (needs " + std::to_string(n) +
                      " more bytes at offset " + std::to_string(pos_) + ", " +
                      std::to_string(remaining()) + " available)");
  }

  const std::vector<char>& buf_;
  std::string context_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<char>& bytes);

}  // namespace uasb::detail
