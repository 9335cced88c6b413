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

#include "uasb/text_encoder.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "uasb/errors.h"

namespace uasb::text {
namespace {

std::string block_name(std::size_t i, const char* what) {
  return "text.block" + std::to_string(i) + "." + what;
}

std::vector<int> random_permutation(std::size_t n, Rng& rng) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(p[i - 1], p[pick(rng)]);
  }
  return p;
}

void check_tokens(std::span<const int> tokens, std::size_t vocab) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= vocab)
      throw ShapeError("text encoder: token " + std::to_string(tokens[i]) + " at position " +
                       std::to_string(i) + " outside vocabulary of size " + std::to_string(vocab));
  }
}

struct Corrupted {
  std::vector<int> input;
  std::vector<int> targets;
  std::vector<float> weights;  // 1 on masked positions
};

Corrupted corrupt(const TextEncoder& enc, std::span<const int> tokens, const PretrainOptions& o, Rng& rng) {
  Corrupted c{{tokens.begin(), tokens.end()}, {tokens.begin(), tokens.end()}, std::vector<float>(tokens.size(), 0.0f)};
  for (std::size_t pos : sample_spans(tokens.size(), o.mask_rate, o.mean_span, rng)) {
    c.input[pos] = enc.sentinel_id();
    c.weights[pos] = 1.0f;
  }
  return c;
}

Tensor head_logits(Tape& tape, const Tensor& h, const Parameters& head) {
  return add(tape, matmul(tape, h, head.get("head.weight")), head.get("head.bias"));
}

}  // namespace

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kTrained: return "trained";
    case Variant::kRandom: return "random";
    case Variant::kMismatched: return "mismatched";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "trained") return Variant::kTrained;
  if (name == "random") return Variant::kRandom;
  if (name == "mismatched") return Variant::kMismatched;
  throw ConfigError("unknown text encoder variant '" + name + "'");
}

TextEncoder init_text_encoder(const TextEncoderConfig& cfg, std::uint64_t seed) {
  if (cfg.vocab_size == 0 || cfg.embed_dim == 0 || cfg.output_dim == 0 || cfg.layers == 0 ||
      cfg.kernel_width == 0)
    throw ConfigError("text encoder: sizes must be >= 1");
  TextEncoder enc{cfg, {}, {}, {}};
  Rng rng(seed);
  const std::size_t V = enc.model_vocab();
  enc.params.add("text.embed", uniform_init({V, cfg.embed_dim}, 1, rng));
  std::size_t din = cfg.embed_dim;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::size_t dout = l + 1 == cfg.layers ? cfg.output_dim : cfg.embed_dim;
    enc.params.add(block_name(l, "kernel"), uniform_init({cfg.kernel_width, din, dout}, cfg.kernel_width * din, rng));
    enc.params.add(block_name(l, "bias"), Tensor::zeros({dout}));
    enc.params.add(block_name(l, "gain"), Tensor::full({dout}, 1.0f));
    enc.params.add(block_name(l, "shift"), Tensor::zeros({dout}));
    din = dout;
  }
  if (cfg.variant == Variant::kMismatched) {
    enc.permutation = random_permutation(cfg.vocab_size, rng);
    enc.pretrain_permutation = random_permutation(cfg.vocab_size, rng);
  }
  if (cfg.variant == Variant::kRandom) enc.params.set_requires_grad(false);
  return enc;
}

Tensor encode_ids(Tape& tape, const TextEncoder& enc, std::span<const int> ids) {
  if (ids.empty()) throw ShapeError("text encoder: empty sequence");
  check_tokens(ids, enc.model_vocab());
  Tensor h = embedding(tape, enc.params.get("text.embed"), ids);
  for (std::size_t l = 0; l < enc.cfg.layers; ++l) {
    h = add(tape, conv1d(tape, h, enc.params.get(block_name(l, "kernel")), 1), enc.params.get(block_name(l, "bias")));
    h = layer_norm(tape, relu(tape, h), enc.params.get(block_name(l, "gain")), enc.params.get(block_name(l, "shift")));
  }
  return h;
}

Tensor encode(const TextEncoder& enc, std::span<const int> tokens) {
  check_tokens(tokens, enc.cfg.vocab_size);
  std::vector<int> ids(tokens.begin(), tokens.end());
  if (enc.cfg.variant == Variant::kMismatched)
    for (int& t : ids) t = enc.permutation.at(static_cast<std::size_t>(t));
  Tape tape;
  return encode_ids(tape, enc, ids).detach();
}

std::vector<std::size_t> sample_spans(std::size_t length, double mask_rate, double mean_span, Rng& rng) {
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw ConfigError("mask_rate must lie in (0, 1)");
  if (!(mean_span >= 1.0)) throw ConfigError("mean_span must be >= 1");
  if (length == 0) return {};
  const std::size_t target = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(mask_rate * length)));
  std::vector<char> masked(length, 0);
  std::size_t count = 0;
  // Geometric on {1, 2, ...} with the requested mean.
  std::geometric_distribution<std::size_t> extra(1.0 / mean_span);
  std::uniform_int_distribution<std::size_t> start(0, length - 1);
  while (count < target) {
    const std::size_t len = 1 + extra(rng);
    const std::size_t s = start(rng);
    for (std::size_t i = s; i < std::min(length, s + len) && count < target; ++i) {
      if (!masked[i]) {
        masked[i] = 1;
        ++count;
      }
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < length; ++i)
    if (masked[i]) out.push_back(i);
  return out;
}

PretrainResult pretrain_span_corruption(TextEncoder& enc, const std::vector<PhonemeSequence>& corpus,
                                        const PretrainOptions& o) {
  if (enc.cfg.variant == Variant::kRandom)
    throw ConfigError("the random text encoder variant is never pretrained");
  if (!(o.mask_rate > 0.0 && o.mask_rate < 1.0)) throw ConfigError("mask_rate must lie in (0, 1)");
  if (corpus.empty()) throw ConfigError("pretraining corpus is empty");

  // The mismatched variant learns a scrambled token space.
  std::vector<std::vector<int>> data;
  data.reserve(corpus.size());
  for (const auto& s : corpus) {
    check_tokens(s.tokens, enc.cfg.vocab_size);
    if (s.tokens.empty()) continue;
    data.push_back(s.tokens);
    if (enc.cfg.variant == Variant::kMismatched)
      for (int& t : data.back()) t = enc.pretrain_permutation.at(static_cast<std::size_t>(t));
  }
  if (data.empty()) throw ConfigError("pretraining corpus has no tokens");

  Rng rng(o.seed);
  Parameters head;
  head.add("head.weight", uniform_init({enc.cfg.output_dim, enc.cfg.vocab_size}, enc.cfg.output_dim, rng));
  head.add("head.bias", Tensor::zeros({enc.cfg.vocab_size}));
  Adam enc_opt(static_cast<float>(o.lr)), head_opt(static_cast<float>(o.lr));
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);

  PretrainResult result;
  for (std::size_t step = 0; step < o.steps; ++step) {
    Tape tape;
    Tensor total;
    double masked = 0.0;
    for (std::size_t b = 0; b < o.batch_size; ++b) {
      const Corrupted c = corrupt(enc, data[pick(rng)], o, rng);
      const float n = std::accumulate(c.weights.begin(), c.weights.end(), 0.0f);
      const Tensor logp = log_softmax(tape, head_logits(tape, encode_ids(tape, enc, c.input), head));
      // nll_loss averages over masked positions; re-weight to a token sum.
      Tensor l = affine(tape, nll_loss(tape, logp, c.targets, c.weights), n, 0.0f);
      total = total.defined() ? add(tape, total, l) : l;
      masked += n;
    }
    total = affine(tape, total, static_cast<float>(1.0 / masked), 0.0f);
    result.loss_curve.push_back(total.item());
    if (!std::isfinite(result.loss_curve.back()))
      throw NumericError("non-finite span-corruption loss at step " + std::to_string(step));
    enc.params.zero_grad();
    head.zero_grad();
    tape.backward(total);
    enc_opt.step(enc.params);
    head_opt.step(head);
  }
  enc.params.zero_grad();

  Rng eval_rng(derive_seed(o.seed, 0xe7a1));
  std::size_t hits = 0, total = 0;
  for (const auto& seq : data) {
    const Corrupted c = corrupt(enc, seq, o, eval_rng);
    Tape tape;
    const Tensor logits = head_logits(tape, encode_ids(tape, enc, c.input), head);
    const std::size_t V = enc.cfg.vocab_size;
    for (std::size_t t = 0; t < seq.size(); ++t) {
      if (c.weights[t] == 0.0f) continue;
      const float* row = logits.data().data() + t * V;
      hits += static_cast<int>(std::max_element(row, row + V) - row) == seq[t];
      ++total;
    }
  }
  result.masked_accuracy = total ? static_cast<double>(hits) / total : 0.0;
  return result;
}

double unigram_majority_baseline(const std::vector<PhonemeSequence>& corpus, std::size_t vocab) {
  std::vector<std::size_t> counts(vocab, 0);
  std::size_t total = 0;
  for (const auto& s : corpus)
    for (int t : s.tokens) {
      ++counts.at(static_cast<std::size_t>(t));
      ++total;
    }
  if (total == 0) return 0.0;
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) / total;
}

}  // namespace uasb::text
