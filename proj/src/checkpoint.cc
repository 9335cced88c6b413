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

#include "uasb/checkpoint.h"

#include <algorithm>
#include <cstring>

#include "uasb/detail/bytes.h"
#include "uasb/errors.h"

namespace uasb::ckpt {
namespace {

constexpr char kMagic[9] = {'U', 'A', 'S', 'B', '-', 'C', 'K', 'P', 'T'};
constexpr std::uint8_t kMaxRank = 8;

std::uint64_t product(const std::vector<std::uint64_t>& dims) {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

template <typename T>
std::vector<char> to_bytes(const std::vector<T>& v) {
  std::vector<char> out(v.size() * sizeof(T));
  if (!v.empty()) std::memcpy(out.data(), v.data(), out.size());
  return out;
}

template <typename T>
std::vector<T> from_bytes(const std::vector<char>& b) {
  std::vector<T> out(b.size() / sizeof(T));
  if (!out.empty()) std::memcpy(out.data(), b.data(), b.size());
  return out;
}

// Both dtypes are four bytes wide.
std::size_t dtype_size(DType) { return 4; }

void check_count(const std::string& name, const std::vector<std::uint64_t>& dims, std::size_t n) {
  if (product(dims) != n)
    throw ShapeError("checkpoint entry '" + name + "': " + std::to_string(n) + " values for dims of " +
                     std::to_string(product(dims)));
}

}  // namespace

void Checkpoint::add_entry(Entry e) {
  if (contains(e.name)) throw ConfigError("checkpoint: duplicate entry '" + e.name + "'");
  entries_.push_back(std::move(e));
}

void Checkpoint::put_floats(const std::string& name, const std::vector<std::uint64_t>& dims,
                            const std::vector<float>& v) {
  check_count(name, dims, v.size());
  add_entry({name, DType::kF32, dims, to_bytes(v)});
}

void Checkpoint::put_ints(const std::string& name, const std::vector<std::uint64_t>& dims, const std::vector<int>& v) {
  check_count(name, dims, v.size());
  std::vector<std::int32_t> w(v.begin(), v.end());
  add_entry({name, DType::kI32, dims, to_bytes(w)});
}

void Checkpoint::put_tensor(const std::string& name, const Tensor& t) {
  put_floats(name, {t.shape().begin(), t.shape().end()}, {t.data().begin(), t.data().end()});
}

bool Checkpoint::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

const Entry& Checkpoint::entry(const std::string& name) const {
  for (const Entry& e : entries_)
    if (e.name == name) return e;
  throw ConfigError("checkpoint has no entry '" + name + "'");
}

std::vector<float> Checkpoint::floats(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.dtype != DType::kF32) throw ConfigError("checkpoint entry '" + name + "' is not f32");
  return from_bytes<float>(e.payload);
}

std::vector<int> Checkpoint::ints(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.dtype != DType::kI32) throw ConfigError("checkpoint entry '" + name + "' is not i32");
  const auto v = from_bytes<std::int32_t>(e.payload);
  return {v.begin(), v.end()};
}

Tensor Checkpoint::tensor(const std::string& name) const {
  const Entry& e = entry(name);
  return Tensor(Shape(e.dims.begin(), e.dims.end()), floats(name));
}

std::vector<char> serialize(const Checkpoint& c) {
  detail::ByteWriter w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put(kVersion);
  w.put(static_cast<std::uint64_t>(c.entries().size()));
  for (const Entry& e : c.entries()) {
    w.put_string_u32(e.name);
    w.put(static_cast<std::uint8_t>(e.dtype));
    w.put(static_cast<std::uint8_t>(e.dims.size()));
    for (auto d : e.dims) w.put(d);
    w.put_bytes(e.payload.data(), e.payload.size());
  }
  return w.bytes();
}

Checkpoint deserialize(const std::vector<char>& bytes, const std::string& context) {
  detail::ByteReader r(bytes, context);
  char magic[sizeof(kMagic)];
  if (bytes.size() < sizeof(magic)) throw IoError(IoErrorKind::kBadMagic, context + ": bad magic (file too short)");
  r.get_bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw IoError(IoErrorKind::kBadMagic, context + ": bad magic, not a UASB-CKPT file");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion)
    throw IoError(IoErrorKind::kVersionMismatch, context + ": version mismatch (file v" + std::to_string(version) +
                                                     ", reader v" + std::to_string(kVersion) + ")");
  const auto count = r.get<std::uint64_t>();
  // Smallest possible entry: name length, dtype, rank.
  r.require_elems(count, 6);
  Checkpoint c;
  for (std::uint64_t i = 0; i < count; ++i) {
    Entry e;
    e.name = r.get_string_u32();
    const auto tag = r.get<std::uint8_t>();
    if (tag != static_cast<std::uint8_t>(DType::kF32) && tag != static_cast<std::uint8_t>(DType::kI32))
      throw IoError(IoErrorKind::kMalformed, context + ": entry '" + e.name + "' has unknown dtype " + std::to_string(tag));
    e.dtype = static_cast<DType>(tag);
    const auto rank = r.get<std::uint8_t>();
    if (rank > kMaxRank)
      throw IoError(IoErrorKind::kMalformed, context + ": entry '" + e.name + "' has rank " + std::to_string(rank));
    std::uint64_t n = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      const auto d = r.get<std::uint64_t>();
      // The running element count can never exceed the bytes left.
      if (d != 0 && n > r.remaining() / d)
        throw IoError(IoErrorKind::kTruncated, context + ": entry '" + e.name + "' declares more data than the file holds");
      n *= d;
      e.dims.push_back(d);
    }
    r.require_elems(n, dtype_size(e.dtype));
    e.payload.resize(n * dtype_size(e.dtype));
    r.get_bytes(e.payload.data(), e.payload.size());
    if (c.contains(e.name)) throw IoError(IoErrorKind::kMalformed, context + ": duplicate entry '" + e.name + "'");
    c.add_entry(std::move(e));
  }
  if (!r.at_end())
    throw IoError(IoErrorKind::kMalformed, context + ": " + std::to_string(r.remaining()) + " trailing bytes");
  return c;
}

void save(const std::filesystem::path& path, const Checkpoint& c) { detail::write_file(path, serialize(c)); }

Checkpoint load(const std::filesystem::path& path) { return deserialize(detail::read_file(path), path.string()); }

void put_params(Checkpoint& c, const Parameters& p) {
  for (const auto& [name, t] : p) c.put_tensor(name, t);
}

Parameters get_params(const Checkpoint& c, const std::string& prefix) {
  Parameters p;
  for (const Entry& e : c.entries())
    if (e.dtype == DType::kF32 && e.name.compare(0, prefix.size(), prefix) == 0) p.add(e.name, c.tensor(e.name));
  return p;
}

void put_generator(Checkpoint& c, const gan::GeneratorConfig& g, const Parameters& gen) {
  c.put_ints("gen.config", {6},
             {int(g.input_dim), int(g.hidden_dim), int(g.kernel_width), int(g.stride), int(g.vocab_size), int(g.layers)});
  for (const auto& [name, t] : gen)
    if (name.rfind("gen.aux", 0) != 0) c.put_tensor(name, t);
}

gan::GeneratorConfig get_generator_config(const Checkpoint& c) {
  const auto v = c.ints("gen.config");
  if (v.size() != 6) throw IoError(IoErrorKind::kMalformed, "checkpoint: gen.config has " + std::to_string(v.size()) + " fields");
  for (int x : v)
    if (x <= 0) throw IoError(IoErrorKind::kMalformed, "checkpoint: non-positive field in gen.config");
  gan::GeneratorConfig g;
  g.input_dim = v[0];
  g.hidden_dim = v[1];
  g.kernel_width = v[2];
  g.stride = v[3];
  g.vocab_size = v[4];
  g.layers = v[5];
  return g;
}

void put_codebook(Checkpoint& c, const kmeans::Codebook& cb) {
  c.put_floats("kmeans.centroids", {cb.k, cb.dim}, cb.centroids);
}

kmeans::Codebook get_codebook(const Checkpoint& c) {
  const Entry& e = c.entry("kmeans.centroids");
  if (e.dims.size() != 2) throw IoError(IoErrorKind::kMalformed, "checkpoint: kmeans.centroids is not a matrix");
  return {e.dims[0], e.dims[1], c.floats("kmeans.centroids")};
}

void put_text_encoder(Checkpoint& c, const text::TextEncoder& enc) {
  const auto& t = enc.cfg;
  c.put_ints("text.config", {6},
             {int(t.vocab_size), int(t.embed_dim), int(t.layers), int(t.output_dim), int(t.kernel_width),
              static_cast<int>(t.variant)});
  put_params(c, enc.params);
  c.put_ints("text.permutation", {enc.permutation.size()}, enc.permutation);
  c.put_ints("text.pretrain_permutation", {enc.pretrain_permutation.size()}, enc.pretrain_permutation);
}

text::TextEncoder get_text_encoder(const Checkpoint& c) {
  const auto v = c.ints("text.config");
  if (v.size() != 6 || v[5] < 0 || v[5] > 2)
    throw IoError(IoErrorKind::kMalformed, "checkpoint: text.config is malformed");
  text::TextEncoder enc;
  enc.cfg.vocab_size = v[0];
  enc.cfg.embed_dim = v[1];
  enc.cfg.layers = v[2];
  enc.cfg.output_dim = v[3];
  enc.cfg.kernel_width = v[4];
  enc.cfg.variant = static_cast<text::Variant>(v[5]);
  enc.params = get_params(c, "text.");
  enc.permutation = c.ints("text.permutation");
  enc.pretrain_permutation = c.ints("text.pretrain_permutation");
  if (enc.cfg.variant == text::Variant::kRandom) enc.params.set_requires_grad(false);
  return enc;
}

}  // namespace uasb::ckpt
