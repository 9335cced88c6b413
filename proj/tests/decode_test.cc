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

#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "uasb/decode.h"

using namespace uasb;
using namespace uasb::eval;

namespace {

Posteriorgram one_hot(const std::vector<int>& ids, std::size_t vocab) {
  Posteriorgram p{"u", vocab, 2, std::vector<float>(ids.size() * vocab, 0.0f)};
  for (std::size_t t = 0; t < ids.size(); ++t) p.probs[t * vocab + ids[t]] = 1.0f;
  return p;
}

// Plain recursion with no memoization.
std::size_t lev_recursive(const std::vector<int>& a, std::size_t i, const std::vector<int>& b,
                          std::size_t j) {
  if (i == a.size()) return b.size() - j;
  if (j == b.size()) return a.size() - i;
  const std::size_t sub = lev_recursive(a, i + 1, b, j + 1) + (a[i] == b[j] ? 0 : 1);
  if (a[i] == b[j]) return sub;  // a match is always optimal
  return std::min({sub, lev_recursive(a, i + 1, b, j) + 1, lev_recursive(a, i, b, j + 1) + 1});
}

std::vector<int> random_seq(std::mt19937_64& rng, std::size_t max_len, int vocab) {
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<int> tok(0, vocab - 1);
  std::vector<int> s(len(rng));
  for (int& x : s) x = tok(rng);
  return s;
}

}  // namespace

TEST_CASE("decode_collapse examples") {
  // a=1, b=2
  CHECK(decode_collapse(one_hot({1, 1, 2, 2, 2, 1}, 4), -1).tokens == std::vector<int>{1, 2, 1});
  CHECK(decode_collapse(one_hot({0, 0, 0}, 4), 0).tokens.empty());
  // Silence between repeats keeps them distinct.
  CHECK(decode_collapse(one_hot({1, 0, 1, 1}, 4), 0).tokens == std::vector<int>{1, 1});
  // Ties go to the lower index.
  Posteriorgram tie{"t", 3, 1, {0.4f, 0.4f, 0.2f, 0.1f, 0.45f, 0.45f}};
  CHECK(frame_argmax(tie) == std::vector<int>{0, 1});
}

TEST_CASE("decode_collapse equals a naive reference decoder") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    Posteriorgram p{"r", 5, 2, std::vector<float>(13 * 5)};
    for (float& x : p.probs) x = std::round(u(rng) * 4) / 4;  // frequent ties
    std::vector<int> ref;
    int prev = -2;
    for (std::size_t t = 0; t < 13; ++t) {
      int best = 0;
      for (int v = 0; v < 5; ++v)
        if (p.probs[t * 5 + v] > p.probs[t * 5 + best]) best = v;
      if (best != prev && best != 0) ref.push_back(best);
      prev = best;
    }
    CHECK(decode_collapse(p, 0).tokens == ref);
  }
}

TEST_CASE("collapse of a one-hot expansion is the identity on clean sequences") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> tok(1, 6), rep(1, 3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> seq, frames;
    for (int i = 0; i < 10; ++i) {
      int t;
      do t = tok(rng);
      while (!seq.empty() && t == seq.back());
      seq.push_back(t);
      for (int r = rep(rng); r > 0; --r) frames.push_back(t);
    }
    CHECK(decode_collapse(one_hot(frames, 7), 0).tokens == seq);
  }
}

TEST_CASE("edit distance examples") {
  const std::vector<int> abc{0, 1, 2};
  const auto same = edit_distance(abc, abc);
  CHECK(same.total() == 0);
  CHECK(phone_error_rate(abc, abc) == 0.0);
  const auto sub = edit_distance(abc, std::vector<int>{0, 7, 2});
  CHECK(sub.substitutions == 1);
  CHECK(sub.insertions == 0);
  CHECK(sub.deletions == 0);
  CHECK(phone_error_rate(abc, std::vector<int>{0, 7, 2}) == doctest::Approx(1.0 / 3));
  const auto del = edit_distance(abc, std::vector<int>{});
  CHECK(del.deletions == 3);
  CHECK(phone_error_rate(abc, std::vector<int>{}) == 1.0);
  CHECK(edit_distance(std::vector<int>{}, abc).insertions == 3);
  CHECK_THROWS_AS(phone_error_rate(std::vector<int>{}, abc), std::invalid_argument);
}

TEST_CASE("edit distance matches brute-force recursion on random pairs") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_seq(rng, 9, 3), b = random_seq(rng, 9, 3);
    CHECK(edit_distance(a, b).total() == lev_recursive(a, 0, b, 0));
  }
}

TEST_CASE("edit distance is a metric (property)") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = random_seq(rng, 12, 4), b = random_seq(rng, 12, 4), c = random_seq(rng, 12, 4);
    const auto ab = edit_distance(a, b).total(), ba = edit_distance(b, a).total();
    CHECK(ab == ba);
    CHECK((ab == 0) == (a == b));
    CHECK(edit_distance(a, c).total() <= ab + edit_distance(b, c).total());
  }
}

TEST_CASE("bigram perplexity") {
  const std::size_t v = 8;
  BigramLm uniform{v, std::vector<double>(v, 1.0 / v), std::vector<double>(v * v, 1.0 / v)};
  CHECK(bigram_perplexity(std::vector<int>{1, 5, 2, 2, 7}, uniform) == doctest::Approx(8.0).epsilon(1e-12));

  BigramLm chain{v, std::vector<double>(v, 0.0), std::vector<double>(v * v, 0.0)};
  chain.start[0] = 1.0;
  for (std::size_t i = 0; i < v; ++i) chain.transitions[i * v + (i + 1) % v] = 1.0;
  const std::vector<int> walk{0, 1, 2, 3, 4, 5, 6, 7, 0, 1};
  const double ppl = bigram_perplexity(walk, chain);
  CHECK(ppl >= 1.0);
  CHECK(ppl <= 1.2);

  // Independent log-domain loop over a random LM.
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.01, 1);
  BigramLm lm{v, std::vector<double>(v), std::vector<double>(v * v)};
  for (double& x : lm.start) x = u(rng);
  for (double& x : lm.transitions) x = u(rng);
  double z = 0;
  for (double x : lm.start) z += x;
  for (double& x : lm.start) x /= z;
  for (std::size_t i = 0; i < v; ++i) {
    z = 0;
    for (std::size_t j = 0; j < v; ++j) z += lm.transitions[i * v + j];
    for (std::size_t j = 0; j < v; ++j) lm.transitions[i * v + j] /= z;
  }
  const std::vector<int> seq{3, 1, 4, 1, 5, 2, 6, 5, 3, 5};
  double acc = std::log(0.9 * lm.start[3] + 0.1 / v);
  for (std::size_t i = 1; i < seq.size(); ++i)
    acc += std::log(0.9 * lm.transitions[seq[i - 1] * v + seq[i]] + 0.1 / v);
  CHECK(bigram_perplexity(seq, lm) == doctest::Approx(std::exp(-acc / seq.size())).epsilon(1e-6));
  CHECK_THROWS(bigram_perplexity(std::vector<int>{}, lm));
}

TEST_CASE("corpus evaluation pairs by id") {
  const std::vector<PhonemeSequence> refs{{"a", {1, 2, 3}}, {"b", {4, 5}}};
  const std::vector<PhonemeSequence> hyps{{"b", {4}}, {"a", {1, 2, 3}}};
  const auto rows = evaluate(refs, hyps);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].per == 0.0);
  CHECK(rows[1].counts.deletions == 1);
  CHECK(corpus_per(rows) == doctest::Approx(1.0 / 5));
  CHECK_THROWS(evaluate(refs, {{"a", {1}}}));
}
