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

#include "uasb/downstream.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <ostream>
#include <sstream>

#include "uasb/errors.h"
#include "uasb/params.h"

namespace uasb::downstream {
namespace {

std::string item_id(const char* prefix, std::size_t i) {
  std::ostringstream s;
  s << prefix;
  s.width(6);
  s.fill('0');
  s << i;
  return s.str();
}

void split(std::vector<Utterance> items, ProbeTask& task, Rng& rng) {
  std::shuffle(items.begin(), items.end(), rng);
  const std::size_t n = items.size();
  const std::size_t n_train = n * 70 / 100, n_dev = n * 15 / 100;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train ? task.train : i < n_train + n_dev ? task.dev : task.test;
    dst.push_back(std::move(items[i]));
  }
}

std::size_t count_trigram(const std::vector<int>& s, const std::array<int, 3>& g) {
  std::size_t c = 0;
  for (std::size_t i = 0; i + 2 < s.size(); ++i) c += s[i] == g[0] && s[i + 1] == g[1] && s[i + 2] == g[2];
  return c;
}

// Rows grouped by utterance: intent has one pooled row per group, tagging
// one row per frame.
struct Groups {
  std::size_t k = 0;
  std::vector<std::vector<float>> x;
  std::vector<std::vector<int>> y;
};

Groups make_groups(const ProbeTask& task, const std::vector<Utterance>& utts,
                   const std::vector<FeatureSequence>& feats) {
  Groups g;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    const FeatureSequence& f = feats[i];
    if (f.length() == 0) throw ShapeError("probe: empty features for '" + utts[i].speech.id + "'");
    if (g.k == 0) g.k = f.dim;
    if (f.dim != g.k) throw ShapeError("probe: inconsistent feature widths");
    if (task.kind == TaskKind::kIntent) {
      std::vector<float> pooled(f.dim, 0.0f);
      std::vector<double> acc(f.dim, 0.0);
      for (std::size_t t = 0; t < f.length(); ++t)
        for (std::size_t c = 0; c < f.dim; ++c) acc[c] += f.frame(t)[c];
      for (std::size_t c = 0; c < f.dim; ++c) pooled[c] = static_cast<float>(acc[c] / f.length());
      g.x.push_back(std::move(pooled));
      g.y.push_back({utts[i].label});
    } else {
      if (utts[i].frame_labels.size() != f.length())
        throw ShapeError("probe: " + std::to_string(f.length()) + " feature rows for " +
                         std::to_string(utts[i].frame_labels.size()) + " frame labels in '" + utts[i].speech.id + "'");
      g.x.push_back(f.frames);
      g.y.push_back(utts[i].frame_labels);
    }
  }
  return g;
}

struct Standardizer {
  std::vector<float> mean, inv_std;

  explicit Standardizer(const Groups& g) : mean(g.k, 0.0f), inv_std(g.k, 1.0f) {
    std::vector<double> s(g.k, 0.0), s2(g.k, 0.0);
    double n = 0;
    for (const auto& rows : g.x)
      for (std::size_t r = 0; r < rows.size() / g.k; ++r, n += 1)
        for (std::size_t c = 0; c < g.k; ++c) {
          const double v = rows[r * g.k + c];
          s[c] += v;
          s2[c] += v * v;
        }
    for (std::size_t c = 0; c < g.k; ++c) {
      const double m = s[c] / n;
      const double var = std::max(0.0, s2[c] / n - m * m);
      mean[c] = static_cast<float>(m);
      inv_std[c] = var > 1e-12 ? static_cast<float>(1.0 / std::sqrt(var)) : 1.0f;
    }
  }

  void apply(Groups& g) const {
    for (auto& rows : g.x)
      for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = (rows[i] - mean[i % g.k]) * inv_std[i % g.k];
  }
};

struct LinearProbe {
  Parameters params;
};

LinearProbe fit_linear(const Groups& train, std::size_t classes, const ProbeOptions& o) {
  Rng rng(o.seed);
  LinearProbe p;
  p.params.add("probe.weight", uniform_init({train.k, classes}, train.k, rng));
  p.params.add("probe.bias", Tensor::zeros({classes}));
  std::vector<std::size_t> order(train.x.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t B = std::max<std::size_t>(1, o.batch_size);
  for (std::size_t epoch = 0; epoch < o.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += B) {
      std::vector<float> x;
      std::vector<int> y;
      for (std::size_t j = start; j < std::min(order.size(), start + B); ++j) {
        x.insert(x.end(), train.x[order[j]].begin(), train.x[order[j]].end());
        y.insert(y.end(), train.y[order[j]].begin(), train.y[order[j]].end());
      }
      Tape tape;
      const Tensor X({y.size(), train.k}, std::move(x));
      const Tensor logits = add(tape, matmul(tape, X, p.params.get("probe.weight")), p.params.get("probe.bias"));
      const Tensor loss = nll_loss(tape, log_softmax(tape, logits), y);
      p.params.zero_grad();
      tape.backward(loss);
      sgd_step(p.params, static_cast<float>(o.lr));
    }
  }
  p.params.zero_grad();
  return p;
}

std::vector<std::vector<int>> predict(const LinearProbe& p, const Groups& g) {
  const auto W = p.params.get("probe.weight");
  const auto b = p.params.get("probe.bias");
  const std::size_t C = W.cols();
  std::vector<std::vector<int>> out;
  std::vector<float> scores(C);
  for (const auto& rows : g.x) {
    std::vector<int> labels;
    for (std::size_t r = 0; r < rows.size() / g.k; ++r) {
      for (std::size_t c = 0; c < C; ++c) {
        double s = b.data()[c];
        for (std::size_t i = 0; i < g.k; ++i) s += double(rows[r * g.k + i]) * W.at(i, c);
        scores[c] = static_cast<float>(s);
      }
      labels.push_back(static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin()));
    }
    out.push_back(std::move(labels));
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> positive_spans(const std::vector<int>& labels) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (std::size_t t = 0; t < labels.size();) {
    if (labels[t] == 0) {
      ++t;
      continue;
    }
    std::size_t e = t;
    while (e < labels.size() && labels[e] != 0) ++e;
    spans.emplace_back(t, e);
    t = e;
  }
  return spans;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<float> one_hot_rows(const std::vector<int>& ids, std::size_t k) {
  std::vector<float> out(ids.size() * k, 0.0f);
  for (std::size_t t = 0; t < ids.size(); ++t) out[t * k + static_cast<std::size_t>(ids[t])] = 1.0f;
  return out;
}

}  // namespace

ProbeTask make_intent_task(const World& world, std::size_t n_classes, std::size_t n_items, std::uint64_t seed) {
  if (n_classes == 0) throw ConfigError("intent task needs at least one class");
  const std::size_t V = world.vocab.size();
  const int first = world.vocab.first_phoneme();
  const std::vector<double> pi = stationary_distribution(world.lm.transitions, V);

  // The most probable trigrams under the stationary chain are designated.
  std::vector<std::pair<double, std::array<int, 3>>> cands;
  for (int a = first; a < static_cast<int>(V); ++a)
    for (int b = first; b < static_cast<int>(V); ++b)
      for (int c = first; c < static_cast<int>(V); ++c) {
        const double p = pi[a] * world.lm.prob(a, b) * world.lm.prob(b, c);
        if (p > 0.0) cands.push_back({p, {a, b, c}});
      }
  std::stable_sort(cands.begin(), cands.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  if (cands.size() < n_classes) throw ConfigError("world has fewer possible trigrams than intent classes");

  ProbeTask task;
  task.kind = TaskKind::kIntent;
  task.name = "intent";
  task.n_classes = n_classes;
  for (std::size_t c = 0; c < n_classes; ++c) task.trigrams.push_back(cands[c].second);

  std::vector<Utterance> items;
  for (std::size_t i = 0; i < n_items; ++i) {
    const int cls = static_cast<int>(i % n_classes);
    Rng rng(derive_seed(seed, i));
    bool found = false;
    for (int draw = 0; draw < 100000 && !found; ++draw) {
      std::vector<int> s = sample_sentence(world, rng);
      std::size_t total = 0, hit = 0;
      for (std::size_t c = 0; c < n_classes; ++c) {
        const std::size_t k = count_trigram(s, task.trigrams[c]);
        total += k;
        if (k) hit = c;
      }
      if (total != 1 || static_cast<int>(hit) != cls) continue;
      Utterance u;
      u.speech = render_speech(world, s, item_id("int-", i), rng);
      u.sentence = std::move(s);
      u.label = cls;
      items.push_back(std::move(u));
      found = true;
    }
    if (!found)
      throw ConfigError("intent task: no sentence with exactly one designated trigram of class " +
                        std::to_string(cls) + " after 100000 draws");
  }
  Rng shuffle_rng(derive_seed(seed, 0x5911));
  split(std::move(items), task, shuffle_rng);
  return task;
}

ProbeTask make_tagging_task(const World& world, std::uint64_t seed, std::size_t n_items,
                            std::optional<std::vector<int>> slot_set) {
  ProbeTask task;
  task.kind = TaskKind::kTagging;
  task.name = "tagging";
  task.n_classes = 2;
  if (slot_set) {
    task.slot_set = *slot_set;
  } else {
    const int first = world.vocab.first_phoneme();
    task.slot_set = {first, first + 1};
  }
  for (int s : task.slot_set)
    if (s < 0 || static_cast<std::size_t>(s) >= world.vocab.size()) throw ConfigError("slot phoneme outside vocabulary");
  std::vector<Utterance> items;
  for (std::size_t i = 0; i < n_items; ++i) {
    Rng rng(derive_seed(seed, i));
    Utterance u;
    u.sentence = sample_sentence(world, rng);
    u.speech = render_speech(world, u.sentence, item_id("tag-", i), rng);
    for (auto g : u.speech.gold_alignment)
      u.frame_labels.push_back(std::find(task.slot_set.begin(), task.slot_set.end(), int(g)) != task.slot_set.end());
    items.push_back(std::move(u));
  }
  Rng shuffle_rng(derive_seed(seed, 0x5911));
  split(std::move(items), task, shuffle_rng);
  return task;
}

double span_f1(const std::vector<std::vector<int>>& gold, const std::vector<std::vector<int>>& pred) {
  if (gold.size() != pred.size()) throw ShapeError("span_f1: gold and prediction counts differ");
  std::size_t tp = 0, n_gold = 0, n_pred = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].size() != pred[i].size()) throw ShapeError("span_f1: sequence lengths differ");
    const auto g = positive_spans(gold[i]);
    const auto p = positive_spans(pred[i]);
    n_gold += g.size();
    n_pred += p.size();
    for (const auto& s : p) tp += std::find(g.begin(), g.end(), s) != g.end();
  }
  if (n_gold == 0 && n_pred == 0) return 1.0;
  if (tp == 0) return 0.0;
  const double precision = double(tp) / n_pred, recall = double(tp) / n_gold;
  return 2 * precision * recall / (precision + recall);
}

std::string ProbeOptions::describe() const {
  std::ostringstream s;
  s << "linear-softmax;zscore;epochs=" << epochs << ";lr=" << lr << ";batch=" << batch_size;
  return s.str();
}

SplitFeatures compute_features(const ProbeTask& task, const FeaturesFn& features) {
  SplitFeatures f;
  for (const auto& u : task.train) f.train.push_back(features(u));
  for (const auto& u : task.dev) f.dev.push_back(features(u));
  for (const auto& u : task.test) f.test.push_back(features(u));
  return f;
}

ProbeResult train_probe(const ProbeTask& task, const SplitFeatures& features, const ProbeOptions& options) {
  if (task.train.empty() || task.test.empty()) throw ConfigError("probe: empty train or test split");
  Groups train = make_groups(task, task.train, features.train);
  Groups test = make_groups(task, task.test, features.test);
  std::vector<char> seen(task.n_classes, 0);
  for (const auto& ys : train.y)
    for (int y : ys) {
      if (y < 0 || static_cast<std::size_t>(y) >= task.n_classes) throw ConfigError("probe: label out of range");
      seen[y] = 1;
    }
  if (task.n_classes > 1 && std::count(seen.begin(), seen.end(), 1) < 2)
    throw ConfigError("probe: training set has a single class");
  const Standardizer z(train);
  z.apply(train);
  z.apply(test);
  const LinearProbe probe = fit_linear(train, task.n_classes, options);
  const auto pred = predict(probe, test);
  ProbeResult r;
  if (task.kind == TaskKind::kIntent) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i][0] == test.y[i][0];
    r.metric = double(hits) / pred.size();
    r.metric_name = "accuracy";
  } else {
    r.metric = span_f1(test.y, pred);
    r.metric_name = "span_f1";
  }
  return r;
}

ProbeResult train_probe(const ProbeTask& task, const FeaturesFn& features, const ProbeOptions& options) {
  return train_probe(task, compute_features(task, features), options);
}

double frame_phoneme_probe(const std::function<FeatureSequence(const FeatureSequence&)>& features,
                           const World& world, const FrameProbeOptions& o) {
  ProbeTask task;
  task.kind = TaskKind::kTagging;
  task.name = "frame_phoneme";
  task.n_classes = world.vocab.size();
  std::vector<Utterance> items;
  for (std::size_t i = 0; i < o.n_items; ++i) {
    Rng rng(derive_seed(o.data_seed, i));
    Utterance u;
    u.sentence = sample_sentence(world, rng);
    u.speech = render_speech(world, u.sentence, item_id("frm-", i), rng);
    u.frame_labels.assign(u.speech.gold_alignment.begin(), u.speech.gold_alignment.end());
    items.push_back(std::move(u));
  }
  Rng shuffle_rng(derive_seed(o.data_seed, 0x5911));
  split(std::move(items), task, shuffle_rng);
  SplitFeatures f;
  for (const auto& u : task.train) f.train.push_back(features(u.speech));
  for (const auto& u : task.test) f.test.push_back(features(u.speech));

  Groups train = make_groups(task, task.train, f.train);
  Groups test = make_groups(task, task.test, f.test);
  const Standardizer z(train);
  z.apply(train);
  z.apply(test);
  const auto pred = predict(fit_linear(train, task.n_classes, o.probe), test);
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (std::size_t t = 0; t < pred[i].size(); ++t, ++total) hits += pred[i][t] == test.y[i][t];
  return total ? double(hits) / total : 0.0;
}

ExperimentConfig cell_config(char cell) {
  using text::Variant;
  switch (cell) {
    case 'A': return {'A', Connector::kNone, std::nullopt};
    case 'B': return {'B', Connector::kUasr, std::nullopt};
    case 'C': return {'C', Connector::kKmeans, Variant::kTrained};
    case 'D': return {'D', Connector::kUasr, Variant::kTrained};
    case 'E': return {'E', Connector::kUasr, Variant::kRandom};
    case 'F': return {'F', Connector::kUasr, Variant::kMismatched};
  }
  throw ConfigError(std::string("unknown matrix cell '") + cell + "'");
}

FeaturesFn cell_features(const ExperimentConfig& cell, const Artifacts& art) {
  const text::TextEncoder* encoder = nullptr;
  if (cell.text_model) {
    auto it = art.encoders.find(*cell.text_model);
    if (it == art.encoders.end())
      throw ConfigError(std::string("cell ") + cell.cell + ": missing " + text::variant_name(*cell.text_model) +
                        " text encoder");
    encoder = &it->second;
  }
  if (cell.connector == Connector::kUasr && !(art.gen_cfg && art.generator))
    throw ConfigError(std::string("cell ") + cell.cell + ": missing recognizer checkpoint");

  switch (cell.connector) {
    case Connector::kNone:
      return [](const Utterance& u) { return u.speech; };
    case Connector::kUasr:
      if (!encoder)
        return [&art](const Utterance& u) { return fusion::f_uasr_features(u.speech, *art.gen_cfg, *art.generator).as_features(); };
      return [&art, encoder](const Utterance& u) {
        return fusion::f_speech_text_features(u.speech, *art.gen_cfg, *art.generator, *encoder, art.assign).as_features();
      };
    case Connector::kKmeans: {
      if (!art.codebook) throw ConfigError(std::string("cell ") + cell.cell + ": missing k-means codebook");
      if (art.cluster_dictionary.size() != art.codebook->k)
        throw ConfigError(std::string("cell ") + cell.cell + ": cluster dictionary does not cover the codebook");
      if (!encoder) throw ConfigError(std::string("cell ") + cell.cell + ": k-means connector needs a text encoder");
      const std::size_t stride = art.gen_cfg ? art.gen_cfg->stride : 2;
      return [&art, encoder, stride](const Utterance& u) {
        const FeatureSequence& h = u.speech;
        const std::size_t T = h.length(), d = h.dim, K = art.codebook->k;
        const std::vector<int> ids = gan::downsample_ids(kmeans::assign(*art.codebook, h.frames, d), stride);
        std::vector<int> tokens;
        for (int id : ids) tokens.push_back(art.cluster_dictionary[static_cast<std::size_t>(id)]);
        const Tensor e = fusion::encode_tokens(*encoder, tokens, art.assign.collapse_runs);
        const std::size_t E = e.cols();
        return fusion::concat_blocks(
                   h.id, T,
                   {{fusion::Span{"ssl", 0, d}, h.frames},
                    {fusion::Span{"kmeans", d, d + K}, fusion::upsample_repeat(one_hot_rows(ids, K), ids.size(), K, T, stride)},
                    {fusion::Span{"text", d + K, d + K + E}, fusion::upsample_repeat(e.data(), e.rows(), E, T, stride)}},
                   fusion::Construction::kConnector)
            .as_features();
      };
    }
  }
  throw ConfigError("unreachable connector");
}

std::optional<double> Report::median(char cell, const std::string& task) const {
  for (const auto& r : rows)
    if (r.cell == cell && r.task == task && r.seed == "median") return r.value;
  return std::nullopt;
}

double median_of(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Report run_matrix(const std::vector<ExperimentConfig>& cells, const std::vector<const ProbeTask*>& tasks,
                  const Artifacts& artifacts, const std::vector<std::uint64_t>& seeds, const ProbeOptions& probe) {
  if (seeds.empty()) throw ConfigError("run_matrix: no seeds");
  std::ostringstream canon;
  canon << probe.describe() << ";seeds=";
  for (auto s : seeds) canon << s << ',';
  for (const ProbeTask* t : tasks) canon << ";" << t->name << ":" << t->train.size() << "/" << t->test.size();
  Report report;
  std::ostringstream hex;
  hex << std::hex << fnv1a(canon.str());
  report.config_hash = hex.str();

  for (const ExperimentConfig& cell : cells) {
    try {
      const FeaturesFn fn = cell_features(cell, artifacts);
      std::vector<ReportRow> rows;
      for (const ProbeTask* task : tasks) {
        const SplitFeatures feats = compute_features(*task, fn);
        std::vector<double> values;
        std::string metric;
        for (std::uint64_t seed : seeds) {
          ProbeOptions o = probe;
          o.seed = seed;
          const ProbeResult r = train_probe(*task, feats, o);
          rows.push_back({cell.cell, std::to_string(seed), task->name, r.metric_name, r.metric});
          values.push_back(r.metric);
          metric = r.metric_name;
        }
        rows.push_back({cell.cell, "median", task->name, metric, median_of(values)});
      }
      report.rows.insert(report.rows.end(), rows.begin(), rows.end());
    } catch (const std::exception& e) {
      report.errors[cell.cell] = e.what();
    }
  }
  return report;
}

void write_report_csv(std::ostream& out, const Report& report) {
  std::ostringstream s;
  s.precision(9);
  s << "# config_hash=" << report.config_hash << '\n';
  s << "cell,seed,task,metric,value\n";
  for (const auto& r : report.rows) s << r.cell << ',' << r.seed << ',' << r.task << ',' << r.metric << ',' << r.value << '\n';
  for (const auto& [cell, msg] : report.errors) s << "# error cell " << cell << ": " << msg << '\n';
  out << s.str();
}

}  // namespace uasb::downstream
