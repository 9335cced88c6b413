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

#include "uasb/fusion.h"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "uasb/decode.h"
#include "uasb/errors.h"

namespace uasb::fusion {

FeatureSequence FusedFeatures::as_features() const {
  return FeatureSequence{id, width, matrix, {}};
}

std::vector<float> upsample_repeat(std::span<const float> x, std::size_t rows, std::size_t cols,
                                   std::size_t target_len, std::size_t stride) {
  if (stride == 0) throw ShapeError("upsample_repeat: stride must be >= 1");
  if (x.size() != rows * cols) throw ShapeError("upsample_repeat: data size does not match rows x cols");
  const std::size_t expected = (target_len + stride - 1) / stride;
  if (rows != expected)
    throw ShapeError("upsample_repeat: got " + std::to_string(rows) + " rows, but target length " +
                     std::to_string(target_len) + " at stride " + std::to_string(stride) + " needs " +
                     std::to_string(expected));
  std::vector<float> out(target_len * cols);
  for (std::size_t t = 0; t < target_len; ++t)
    std::copy_n(x.data() + (t / stride) * cols, cols, out.data() + t * cols);
  return out;
}

std::vector<int> assign(const Posteriorgram& p, const AssignMode& mode) {
  if (!mode.gumbel) return eval::frame_argmax(p);
  if (!(mode.temperature > 0.0f)) throw ConfigError("gumbel temperature must be > 0");
  // The temperature sharpens the logits before the noise is added, so the
  // hard sample follows softmax(log p / tau): p itself at tau = 1, argmax as
  // tau -> 0. Zero probabilities become a large negative logit.
  std::vector<float> logits(p.probs.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    logits[i] = p.probs[i] > 0.0f ? std::log(p.probs[i]) / mode.temperature : -1e30f;
  Rng rng(mode.seed);
  Tape tape;
  const Tensor sample = gumbel_softmax(tape, Tensor({p.rows(), p.vocab}, std::move(logits)), 1.0f, rng);
  Posteriorgram hard{p.id, p.vocab, p.stride, {sample.data().begin(), sample.data().end()}};
  return eval::frame_argmax(hard);
}

FusedFeatures concat_blocks(const std::string& id, std::size_t length,
                            const std::vector<std::pair<Span, std::vector<float>>>& blocks,
                            Construction construction) {
  FusedFeatures f;
  f.id = id;
  f.length = length;
  f.construction = construction;
  for (const auto& [span, data] : blocks) {
    const std::size_t w = span.end - span.begin;
    if (span.begin != f.width || data.size() != length * w)
      throw ShapeError("fusion: block '" + span.component + "' does not fit at column " + std::to_string(f.width));
    f.spans.push_back(span);
    f.width += w;
  }
  f.matrix.resize(length * f.width);
  for (const auto& [span, data] : blocks) {
    const std::size_t w = span.end - span.begin;
    for (std::size_t t = 0; t < length; ++t)
      std::copy_n(data.data() + t * w, w, f.matrix.data() + t * f.width + span.begin);
  }
  return f;
}

FusedFeatures f_uasr_features(const FeatureSequence& h, const gan::GeneratorConfig& cfg, const Parameters& gen) {
  const Posteriorgram p = gan::generator_forward(cfg, gen, h);
  const std::size_t T = h.length(), d = h.dim, V = cfg.vocab_size;
  return concat_blocks(h.id, T,
                       {{Span{"ssl", 0, d}, h.frames},
                        {Span{"uasr", d, d + V}, upsample_repeat(p.probs, p.rows(), V, T, cfg.stride)}},
                       Construction::kAugment);
}

Tensor encode_tokens(const text::TextEncoder& encoder, const std::vector<int>& tokens, bool collapse_runs) {
  if (!collapse_runs || tokens.empty()) return text::encode(encoder, tokens);
  std::vector<int> runs, run_of(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (t == 0 || tokens[t] != tokens[t - 1]) runs.push_back(tokens[t]);
    run_of[t] = static_cast<int>(runs.size()) - 1;
  }
  const Tensor e = text::encode(encoder, runs);
  const std::size_t E = e.cols();
  std::vector<float> out(tokens.size() * E);
  for (std::size_t t = 0; t < tokens.size(); ++t)
    std::copy_n(e.data().begin() + run_of[t] * E, E, out.begin() + t * E);
  return Tensor({tokens.size(), E}, std::move(out));
}

FusedFeatures f_speech_text_features(const FeatureSequence& h, const gan::GeneratorConfig& cfg,
                                     const Parameters& gen, const text::TextEncoder& encoder,
                                     const AssignMode& mode) {
  if (encoder.cfg.vocab_size != cfg.vocab_size)
    throw ConfigError("fusion: text encoder vocabulary (" + std::to_string(encoder.cfg.vocab_size) +
                      ") does not cover the recognizer vocabulary (" + std::to_string(cfg.vocab_size) + ")");
  const Posteriorgram p = gan::generator_forward(cfg, gen, h);
  const std::vector<int> tokens = assign(p, mode);
  const Tensor e = encode_tokens(encoder, tokens, mode.collapse_runs);
  const std::size_t T = h.length(), d = h.dim, V = cfg.vocab_size, E = e.cols();
  return concat_blocks(h.id, T,
                       {{Span{"ssl", 0, d}, h.frames},
                        {Span{"uasr", d, d + V}, upsample_repeat(p.probs, p.rows(), V, T, cfg.stride)},
                        {Span{"text", d + V, d + V + E}, upsample_repeat(e.data(), e.rows(), E, T, cfg.stride)}},
                       Construction::kConnector);
}

bool spans_partition(const std::vector<Span>& spans, std::size_t width) {
  std::size_t at = 0;
  for (const Span& s : spans) {
    if (s.begin != at || s.end <= s.begin) return false;
    at = s.end;
  }
  return at == width;
}

void write_manifest(const std::filesystem::path& path, const FusedFeatures& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(IoErrorKind::kOpen, "cannot write manifest " + path.string());
  out << "construction\t" << (f.construction == Construction::kAugment ? "eq2" : "eq3") << '\n';
  out << "width\t" << f.width << '\n';
  for (const Span& s : f.spans) out << s.component << '\t' << s.begin << '\t' << s.end << '\n';
  if (!out) throw IoError(IoErrorKind::kOpen, "failed writing manifest " + path.string());
}

std::vector<Span> read_manifest(const std::filesystem::path& path, std::size_t* width) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrorKind::kOpen, "cannot read manifest " + path.string());
  std::vector<Span> spans;
  std::string line;
  std::size_t w = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    std::getline(ls, key, '\t');
    if (key == "construction") continue;
    if (key == "width") {
      ls >> w;
      continue;
    }
    Span s{key, 0, 0};
    if (!(ls >> s.begin >> s.end)) throw IoError(IoErrorKind::kMalformed, "bad manifest line: " + line);
    spans.push_back(s);
  }
  if (width) *width = w;
  return spans;
}

}  // namespace uasb::fusion
