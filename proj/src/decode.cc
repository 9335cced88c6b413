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

#include "uasb/decode.h"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "uasb/detail/bytes.h"

namespace uasb::eval {

std::vector<int> frame_argmax(const Posteriorgram& p) {
  std::vector<int> ids(p.rows());
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const float* r = p.row(t);
    int best = 0;
    for (std::size_t v = 1; v < p.vocab; ++v)
      if (r[v] > r[best]) best = static_cast<int>(v);
    ids[t] = best;
  }
  return ids;
}

DecodedSequence decode_collapse(const Posteriorgram& p, int silence_id) {
  DecodedSequence out{p.id, {}};
  int prev = -1;
  for (int tok : frame_argmax(p)) {
    if (tok != prev && tok != silence_id) out.tokens.push_back(tok);
    prev = tok;
  }
  return out;
}

EditCounts edit_distance(std::span<const int> ref, std::span<const int> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  // cost[i][j]: distance between ref[:i] and hyp[:j]
  std::vector<std::size_t> cost((n + 1) * (m + 1));
  auto at = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };
  for (std::size_t i = 0; i <= n; ++i) cost[at(i, 0)] = i;
  for (std::size_t j = 0; j <= m; ++j) cost[at(0, j)] = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = cost[at(i - 1, j - 1)] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cost[at(i, j)] = std::min({diag, cost[at(i - 1, j)] + 1, cost[at(i, j - 1)] + 1});
    }
  EditCounts c;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        cost[at(i, j)] == cost[at(i - 1, j - 1)] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) c.substitutions++;
      --i, --j;
    } else if (i > 0 && cost[at(i, j)] == cost[at(i - 1, j)] + 1) {
      c.deletions++;
      --i;
    } else {
      c.insertions++;
      --j;
    }
  }
  return c;
}

double phone_error_rate(std::span<const int> ref, std::span<const int> hyp) {
  if (ref.empty()) throw std::invalid_argument("PER undefined for an empty reference");
  return static_cast<double>(edit_distance(ref, hyp).total()) / static_cast<double>(ref.size());
}

LogProb bigram_log_prob(std::span<const int> seq, const BigramLm& lm, double smoothing) {
  const double v = static_cast<double>(lm.vocab_size);
  auto smooth = [&](double p) { return (1.0 - smoothing) * p + smoothing / v; };
  LogProb lp;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const double p = i == 0 ? lm.start.at(seq[0]) : lm.prob(seq[i - 1], seq[i]);
    lp.log_prob += std::log(smooth(p));
    lp.tokens++;
  }
  return lp;
}

double bigram_perplexity(std::span<const int> seq, const BigramLm& lm, double smoothing) {
  if (seq.empty()) throw std::invalid_argument("bigram_perplexity: empty sequence");
  const LogProb lp = bigram_log_prob(seq, lm, smoothing);
  return std::exp(-lp.log_prob / static_cast<double>(lp.tokens));
}

std::vector<PerRow> evaluate(const std::vector<PhonemeSequence>& refs,
                             const std::vector<PhonemeSequence>& hyps) {
  std::unordered_map<std::string, const PhonemeSequence*> by_id;
  for (const auto& h : hyps) by_id[h.id] = &h;
  std::vector<PerRow> rows;
  for (const auto& r : refs) {
    const auto it = by_id.find(r.id);
    if (it == by_id.end()) throw std::invalid_argument("no hypothesis for '" + r.id + "'");
    PerRow row{r.id, r.tokens.size(), edit_distance(r.tokens, it->second->tokens), 0.0};
    row.per = phone_error_rate(r.tokens, it->second->tokens);
    rows.push_back(std::move(row));
  }
  return rows;
}

double corpus_per(const std::vector<PerRow>& rows) {
  std::size_t edits = 0, len = 0;
  for (const auto& r : rows) edits += r.counts.total(), len += r.ref_len;
  if (len == 0) throw std::invalid_argument("corpus_per: empty reference set");
  return static_cast<double>(edits) / static_cast<double>(len);
}

void write_per_csv(const std::filesystem::path& path, const std::vector<PerRow>& rows) {
  std::ostringstream os;
  os << "id,ref_len,S,I,D,per\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.6f", r.per);
    os << r.id << ',' << r.ref_len << ',' << r.counts.substitutions << ','
       << r.counts.insertions << ',' << r.counts.deletions << ',' << buf << '\n';
  }
  const std::string s = os.str();
  detail::write_file(path, std::vector<char>(s.begin(), s.end()));
}

}  // namespace uasb::eval
