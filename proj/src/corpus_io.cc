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

#include "uasb/corpus_io.h"

#include <cstring>
#include <fstream>
#include <sstream>

#include "uasb/detail/bytes.h"
#include "uasb/errors.h"

namespace uasb {
namespace detail {

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrorKind::kOpen, "cannot open '" + path.string() + "' for reading");
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoErrorKind::kOpen, "cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(IoErrorKind::kOpen, "write failed for '" + path.string() + "'");
}

}  // namespace detail

namespace {
constexpr char kFeatureMagic[8] = {'U', 'A', 'S', 'B', '-', 'F', 'T', 'R'};
constexpr std::uint32_t kFeatureVersion = 1;
}  // namespace

void save_features(const std::filesystem::path& path,
                   const std::vector<FeatureSequence>& items) {
  detail::ByteWriter w;
  w.put_bytes(kFeatureMagic, sizeof(kFeatureMagic));
  w.put(kFeatureVersion);
  w.put(static_cast<std::uint64_t>(items.size()));
  for (const FeatureSequence& fs : items) {
    const std::uint64_t len = fs.length();
    if (!fs.gold_alignment.empty() && fs.gold_alignment.size() != len) {
      throw std::invalid_argument("save_features: '" + fs.id + "' alignment length " +
                                  std::to_string(fs.gold_alignment.size()) + " != T " +
                                  std::to_string(len));
    }
    w.put_string_u32(fs.id);
    w.put(len);
    w.put(static_cast<std::uint64_t>(fs.dim));
    w.put(static_cast<std::uint8_t>(fs.gold_alignment.empty() ? 0 : 1));
    w.put_bytes(fs.frames.data(), fs.frames.size() * sizeof(float));
    if (!fs.gold_alignment.empty())
      w.put_bytes(fs.gold_alignment.data(), fs.gold_alignment.size() * sizeof(std::uint16_t));
  }
  detail::write_file(path, w.bytes());
}

std::vector<FeatureSequence> load_features(const std::filesystem::path& path) {
  const std::vector<char> buf = detail::read_file(path);
  detail::ByteReader r(buf, path.string());
  char magic[8];
  if (buf.size() < sizeof(magic)) {
    throw IoError(IoErrorKind::kBadMagic, path.string() + ": bad magic (file too short)");
  }
  r.get_bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kFeatureMagic, sizeof(magic)) != 0) {
    throw IoError(IoErrorKind::kBadMagic, path.string() + ": bad magic, not a UASB-FTR file");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kFeatureVersion) {
    throw IoError(IoErrorKind::kVersionMismatch,
                  path.string() + ": version mismatch (file v" + std::to_string(version) +
                      ", reader v" + std::to_string(kFeatureVersion) + ")");
  }
  const auto count = r.get<std::uint64_t>();
  // Each item needs at least its fixed header.
  r.require_elems(count, 4 + 8 + 8 + 1);
  std::vector<FeatureSequence> items;
  items.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    FeatureSequence fs;
    fs.id = r.get_string_u32();
    const auto len = r.get<std::uint64_t>();
    const auto dim = r.get<std::uint64_t>();
    const auto has_align = r.get<std::uint8_t>();
    if (has_align > 1) {
      throw IoError(IoErrorKind::kMalformed, path.string() + ": bad alignment flag for '" + fs.id + "'");
    }
    if (dim == 0 && len != 0) {
      throw IoError(IoErrorKind::kMalformed, path.string() + ": zero feature dim for '" + fs.id + "'");
    }
    r.require_elems(len, dim);  // len * dim cannot overflow past this point
    r.require_elems(len * dim, sizeof(float));
    fs.dim = dim;
    fs.frames.resize(len * dim);
    r.get_bytes(fs.frames.data(), fs.frames.size() * sizeof(float));
    if (has_align) {
      r.require_elems(len, sizeof(std::uint16_t));
      fs.gold_alignment.resize(len);
      r.get_bytes(fs.gold_alignment.data(), len * sizeof(std::uint16_t));
    }
    items.push_back(std::move(fs));
  }
  if (!r.at_end()) {
    throw IoError(IoErrorKind::kMalformed, path.string() + ": trailing bytes after last item");
  }
  return items;
}

void save_text(const std::filesystem::path& path,
               const std::vector<PhonemeSequence>& items, const Vocabulary& vocab) {
  std::ostringstream os;
  for (const PhonemeSequence& s : items) {
    os << s.id << '\t';
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      if (s.tokens[i] < 0 || static_cast<std::size_t>(s.tokens[i]) >= vocab.size()) {
        throw std::out_of_range("save_text: token id " + std::to_string(s.tokens[i]) +
                                " outside vocabulary in '" + s.id + "'");
      }
      if (i) os << ' ';
      os << vocab.token(s.tokens[i]);
    }
    os << '\n';
  }
  const std::string text = os.str();
  detail::write_file(path, std::vector<char>(text.begin(), text.end()));
}

std::vector<PhonemeSequence> load_text(const std::filesystem::path& path,
                                       const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw IoError(IoErrorKind::kOpen, "cannot open '" + path.string() + "' for reading");
  std::vector<PhonemeSequence> items;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    PhonemeSequence s;
    std::string body = line;
    if (const auto tab = line.find('\t'); tab != std::string::npos) {
      s.id = line.substr(0, tab);
      body = line.substr(tab + 1);
    } else {
      if (line.empty()) continue;
      s.id = "utt-" + std::to_string(lineno);
    }
    std::istringstream ts(body);
    std::string tok;
    while (ts >> tok) {
      const auto id = vocab.find(tok);
      if (!id) {
        throw IoError(IoErrorKind::kUnknownToken, path.string() + ": unknown token '" + tok +
                                                      "' on line " + std::to_string(lineno));
      }
      s.tokens.push_back(*id);
    }
    items.push_back(std::move(s));
  }
  return items;
}

}  // namespace uasb
