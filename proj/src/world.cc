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

#include "uasb/world.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace uasb {

Vocabulary::Vocabulary(std::vector<std::string> tokens, bool has_silence)
    : tokens_(std::move(tokens)), has_silence_(has_silence) {
  if (tokens_.size() < 2) {
    throw std::invalid_argument("vocabulary needs at least 2 tokens");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const std::string& t = tokens_[i];
    if (t.empty() || t.find_first_of(" \t\r\n") != std::string::npos) {
      throw std::invalid_argument("vocabulary token '" + t + "' is empty or has whitespace");
    }
    if (!index_.emplace(t, static_cast<int>(i)).second) {
      throw std::invalid_argument("duplicate vocabulary token '" + t + "'");
    }
  }
}

Vocabulary Vocabulary::make_default(std::size_t size, bool with_silence) {
  std::vector<std::string> tokens;
  if (with_silence) tokens.push_back("sil");
  const std::string letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
  for (std::size_t i = 0; tokens.size() < size; ++i) {
    tokens.push_back(i < letters.size() ? std::string(1, letters[i])
                                        : "p" + std::to_string(i));
  }
  return Vocabulary(std::move(tokens), with_silence);
}

std::optional<int> Vocabulary::find(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

BigramLm BigramLm::estimate(const std::vector<std::vector<int>>& sentences,
                            std::size_t vocab_size, double add_k) {
  BigramLm lm;
  lm.vocab_size = vocab_size;
  lm.start.assign(vocab_size, add_k);
  lm.transitions.assign(vocab_size * vocab_size, add_k);
  for (const auto& s : sentences) {
    if (s.empty()) continue;
    lm.start[s[0]] += 1.0;
    for (std::size_t i = 1; i < s.size(); ++i) lm.transitions[s[i - 1] * vocab_size + s[i]] += 1.0;
  }
  auto normalize = [vocab_size](double* row) {
    double z = 0.0;
    for (std::size_t j = 0; j < vocab_size; ++j) z += row[j];
    for (std::size_t j = 0; j < vocab_size; ++j)
      row[j] = z > 0.0 ? row[j] / z : 1.0 / static_cast<double>(vocab_size);
  };
  normalize(lm.start.data());
  for (std::size_t i = 0; i < vocab_size; ++i) normalize(lm.transitions.data() + i * vocab_size);
  return lm;
}

std::vector<double> stationary_distribution(const std::vector<double>& p,
                                            std::size_t n) {
  // Solve pi (P - I) = 0 with sum(pi) = 1 replacing the last equation.
  std::vector<double> a(n * (n + 1), 0.0);
  for (std::size_t row = 0; row < n; ++row) {
    for (std::size_t col = 0; col < n; ++col) {
      a[row * (n + 1) + col] = p[col * n + row] - (row == col ? 1.0 : 0.0);
    }
  }
  for (std::size_t col = 0; col < n; ++col) a[(n - 1) * (n + 1) + col] = 1.0;
  a[(n - 1) * (n + 1) + n] = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::fabs(a[r * (n + 1) + c]) > std::fabs(a[piv * (n + 1) + c])) piv = r;
    if (std::fabs(a[piv * (n + 1) + c]) < 1e-300) {
      throw std::runtime_error("stationary_distribution: singular system (reducible chain?)");
    }
    for (std::size_t k = 0; k <= n; ++k) std::swap(a[c * (n + 1) + k], a[piv * (n + 1) + k]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r * (n + 1) + c] / a[c * (n + 1) + c];
      for (std::size_t k = c; k <= n; ++k) a[r * (n + 1) + k] -= f * a[c * (n + 1) + k];
    }
  }
  std::vector<double> pi(n);
  for (std::size_t i = 0; i < n; ++i) pi[i] = std::max(0.0, a[i * (n + 1) + n] / a[i * (n + 1) + i]);
  double z = 0.0;
  for (double v : pi) z += v;
  for (double& v : pi) v /= z;
  return pi;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = base * 0x9E3779B97F4A7C15ull + index + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

namespace {

void validate(const WorldSpec& s) {
  if (s.vocab_size < 2 || (s.silence && s.vocab_size < 3)) {
    throw std::invalid_argument("world: vocabulary too small");
  }
  if (s.feature_dim == 0) throw std::invalid_argument("world: feature_dim must be >= 1");
  if (!(s.sigma >= 0.0)) throw std::invalid_argument("world: sigma must be >= 0");
  if (s.dur_min == 0 || s.dur_min > s.dur_max) {
    throw std::invalid_argument("world: duration range must satisfy 1 <= min <= max");
  }
  if (s.min_len == 0 || s.min_len > s.max_len) {
    throw std::invalid_argument("world: sentence length range must satisfy 1 <= min <= max");
  }
  if (!(s.self_cap >= 0.0 && s.self_cap < 1.0)) {
    throw std::invalid_argument("world: self_cap must lie in [0, 1)");
  }
}

// Dirichlet(1) row with the diagonal capped; excess mass is spread over the
// other entries proportionally.
std::vector<double> transition_row(std::size_t self, std::size_t first,
                                   std::size_t v, double cap, Rng& rng) {
  std::exponential_distribution<double> gamma1(1.0);
  std::vector<double> row(v, 0.0);
  double z = 0.0;
  for (std::size_t j = first; j < v; ++j) z += row[j] = gamma1(rng);
  for (double& x : row) x /= z;
  if (self >= first && row[self] > cap) {
    const double rest = 1.0 - row[self];
    row[self] = cap;
    for (std::size_t j = first; j < v; ++j)
      if (j != self) row[j] *= (1.0 - cap) / rest;
  }
  return row;
}

}  // namespace

World World::create(const WorldSpec& spec) {
  validate(spec);
  const std::size_t v = spec.vocab_size, d = spec.feature_dim;
  World w{spec, Vocabulary::make_default(v, spec.silence), {}, {}};
  Rng rng(derive_seed(spec.seed, 0));

  std::normal_distribution<double> normal(0.0, 1.0);
  const double min_dist = spec.separation * spec.sigma;
  w.means.assign(v * d, 0.0f);
  for (std::size_t k = 0; k < v; ++k) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 100000) {
        throw std::invalid_argument("world: cannot place emission means " +
                                    std::to_string(min_dist) + " apart on a sphere of radius " +
                                    std::to_string(spec.radius));
      }
      std::vector<double> p(d);
      double norm = 0.0;
      for (double& x : p) {
        x = normal(rng);
        norm += x * x;
      }
      norm = std::sqrt(norm);
      if (norm == 0.0) continue;
      for (double& x : p) x *= spec.radius / norm;
      bool ok = true;
      for (std::size_t j = 0; j < k && ok; ++j) {
        double dist = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double diff = p[c] - w.means[j * d + c];
          dist += diff * diff;
        }
        ok = std::sqrt(dist) >= min_dist;
      }
      if (!ok) continue;
      for (std::size_t c = 0; c < d; ++c) w.means[k * d + c] = static_cast<float>(p[c]);
      break;
    }
  }

  // Without silence, repeats could not survive duplicate collapsing, so
  // self-transitions are disabled entirely.
  const std::size_t first = spec.silence ? 1 : 0;
  const double cap = spec.silence ? spec.self_cap : 0.0;
  w.lm.vocab_size = v;
  w.lm.transitions.assign(v * v, 0.0);
  for (std::size_t i = 0; i < v; ++i) {
    std::vector<double> row;
    if (i < first) {
      row.assign(v, 0.0);
      for (std::size_t j = first; j < v; ++j) row[j] = 1.0 / static_cast<double>(v - first);
    } else {
      row = transition_row(i, first, v, cap, rng);
    }
    std::copy(row.begin(), row.end(), w.lm.transitions.begin() + i * v);
  }
  w.lm.start = stationary_distribution(w.lm.transitions, v);
  return w;
}

namespace {

int draw(const std::vector<double>& probs, std::size_t offset, std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng);
  double acc = 0.0;
  std::size_t last = offset;
  for (std::size_t j = 0; j < n; ++j) {
    const double p = probs[offset + j];
    if (p <= 0.0) continue;
    last = offset + j;
    acc += p;
    if (r < acc) return static_cast<int>(j);
  }
  return static_cast<int>(last - offset);
}

}  // namespace

std::vector<int> sample_sentence(const World& world, Rng& rng) {
  const WorldSpec& s = world.spec;
  std::uniform_int_distribution<std::size_t> len_dist(s.min_len, s.max_len);
  const std::size_t len = len_dist(rng);
  std::vector<int> out;
  out.reserve(len);
  out.push_back(draw(world.lm.start, 0, s.vocab_size, rng));
  while (out.size() < len) {
    out.push_back(draw(world.lm.transitions, static_cast<std::size_t>(out.back()) * s.vocab_size,
                       s.vocab_size, rng));
  }
  return out;
}

FeatureSequence render_speech(const World& world, const std::vector<int>& sentence,
                              std::string id, Rng& rng) {
  const WorldSpec& s = world.spec;
  const std::size_t d = s.feature_dim;
  std::uniform_int_distribution<std::size_t> dur(s.dur_min, s.dur_max);
  std::normal_distribution<double> noise(0.0, 1.0);
  FeatureSequence fs;
  fs.id = std::move(id);
  fs.dim = d;
  auto emit = [&](int token) {
    const std::size_t n = dur(rng);
    for (std::size_t f = 0; f < n; ++f) {
      const float* m = world.mean(token);
      for (std::size_t c = 0; c < d; ++c) {
        const double e = s.sigma > 0.0 ? s.sigma * noise(rng) : 0.0;
        fs.frames.push_back(static_cast<float>(m[c] + e));
      }
      fs.gold_alignment.push_back(static_cast<std::uint16_t>(token));
    }
  };
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    if (i > 0 && sentence[i] == sentence[i - 1] && world.vocab.has_silence()) {
      emit(world.vocab.silence_id());
    }
    emit(sentence[i]);
  }
  return fs;
}

Corpora generate_corpora(const World& world, std::size_t n_speech,
                         std::size_t n_text, std::uint64_t seed) {
  if (n_speech == 0 || n_text == 0) {
    throw std::invalid_argument("generate_corpora: corpus sizes must be >= 1");
  }
  auto name = [](const char* prefix, std::size_t i) {
    std::string n = std::to_string(i);
    return std::string(prefix) + std::string(n.size() < 6 ? 6 - n.size() : 0, '0') + n;
  };
  Corpora c;
  std::set<std::vector<int>> speech_set;
  for (std::size_t i = 0; i < n_speech; ++i) {
    Rng rng(derive_seed(seed, 2 * i));
    std::vector<int> sent = sample_sentence(world, rng);
    std::string id = name("spk-", i);
    c.speech.push_back(render_speech(world, sent, id, rng));
    speech_set.insert(sent);
    c.speech_sentences.push_back({std::move(id), std::move(sent)});
  }
  for (std::size_t i = 0; i < n_text; ++i) {
    Rng rng(derive_seed(seed, 2 * i + 1));
    std::vector<int> sent;
    int tries = 0;
    do {
      if (++tries > 100000) {
        throw std::runtime_error("generate_corpora: cannot draw a text sentence unseen in speech");
      }
      sent = sample_sentence(world, rng);
    } while (speech_set.count(sent));
    c.text.push_back({name("txt-", i), std::move(sent)});
  }
  return c;
}

std::vector<int> collapse_alignment(std::span<const std::uint16_t> alignment,
                                    int silence_id) {
  std::vector<int> out;
  int prev = -1;
  for (std::uint16_t a : alignment) {
    const int tok = a;
    if (tok != prev && tok != silence_id) out.push_back(tok);
    prev = tok;
  }
  return out;
}

}  // namespace uasb
