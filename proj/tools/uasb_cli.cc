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

// uasb: command-line driver. Hyperparameters come from one flat config
// file; flags name files and cell selections only.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "uasb/checkpoint.h"
#include "uasb/config.h"
#include "uasb/corpus_io.h"
#include "uasb/decode.h"
#include "uasb/downstream.h"
#include "uasb/errors.h"
#include "uasb/fusion.h"
#include "uasb/pipeline.h"

namespace fs = std::filesystem;
using namespace uasb;

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kIo = 3, kNumeric = 4 };

config::RunSettings settings_from(const std::string& path) {
  const config::RunSettings s = config::resolve(path.empty() ? config::RunConfig{} : config::RunConfig::load(path));
  std::cout << "# resolved config\n" << config::dump(s);
  return s;
}

Vocabulary vocab_of(const config::RunSettings& s) { return Vocabulary::make_default(s.world.vocab_size, s.world.silence); }

Vocabulary vocab_of(const ckpt::Checkpoint& c) {
  const auto g = ckpt::get_generator_config(c);
  const auto sil = c.ints("vocab.silence");
  return Vocabulary::make_default(g.vocab_size, !sil.empty() && sil[0] != 0);
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(IoErrorKind::kOpen, "cannot write " + path.string());
  out << text;
  if (!out) throw IoError(IoErrorKind::kOpen, "failed writing " + path.string());
}

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw IoError(IoErrorKind::kOpen, "no such file: " + path);
}

// Token inventory shared by two text files, for id-agnostic PER.
Vocabulary symbols_of(const std::vector<std::string>& paths) {
  std::set<std::string> seen;
  for (const auto& p : paths) {
    require_file(p);
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) {
      if (const auto tab = line.find('\t'); tab != std::string::npos) line = line.substr(tab + 1);
      std::istringstream toks(line);
      std::string t;
      while (toks >> t) seen.insert(t);
    }
  }
  if (seen.empty()) seen.insert("sil");
  return Vocabulary({seen.begin(), seen.end()}, false);
}

int cmd_gen_data(const std::string& cfg, const std::string& out) {
  const auto s = settings_from(cfg);
  const pipeline::Data d = pipeline::make_data(s);
  fs::create_directories(out);
  const fs::path dir(out);
  const Vocabulary v = d.world.vocab;
  save_features(dir / "train_speech.feat", d.train.speech);
  save_text(dir / "train_text.txt", d.train.text, v);
  save_text(dir / "train_ref.txt", d.train.speech_sentences, v);
  save_features(dir / "valid_speech.feat", d.valid.speech);
  std::vector<PhonemeSequence> refs = d.valid.speech_sentences;
  for (std::size_t i = 0; i < refs.size(); ++i) refs[i].id = d.valid.speech[i].id;
  save_text(dir / "valid_ref.txt", refs, v);
  write_text_file(dir / "config.resolved", config::dump(s));
  return kOk;
}

int cmd_kmeans_fit(const std::string& features, std::size_t k, const std::string& out) {
  require_file(features);
  config::RunSettings s;
  s.kmeans.k = k;
  ckpt::Checkpoint c;
  ckpt::put_codebook(c, pipeline::fit_kmeans(s, load_features(features)));
  ckpt::save(out, c);
  return kOk;
}

int cmd_train_uasr(const std::string& cfg, const std::string& features, const std::string& text,
                   const std::string& valid, const std::string& out, const std::string& metrics) {
  const auto s = settings_from(cfg);
  require_file(features);
  require_file(text);
  pipeline::Data d{World::create(s.world), {}, {}};
  d.train.speech = load_features(features);
  d.train.text = load_text(text, vocab_of(s));
  if (!valid.empty()) {
    require_file(valid);
    d.valid.speech = load_features(valid);
  } else {
    // Unlabelled selection set: the head of the training speech.
    const std::size_t n = std::min(s.n_valid, d.train.speech.size());
    d.valid.speech.assign(d.train.speech.begin(), d.train.speech.begin() + n);
  }
  if (!d.train.speech.empty() && d.train.speech.front().dim != s.world.feature_dim)
    throw ConfigError("features have dim " + std::to_string(d.train.speech.front().dim) + ", world.feature_dim is " +
                      std::to_string(s.world.feature_dim));
  const pipeline::UasrOutcome r = pipeline::train_uasr(s, d);
  const gan::TrainResult& best = r.runs[r.best];

  ckpt::Checkpoint c;
  ckpt::put_generator(c, s.uasr.gen, r.generator);
  c.put_ints("vocab.silence", {1}, {s.world.silence ? 1 : 0});
  c.put_ints("gan.selection", {2}, {static_cast<int>(r.best), static_cast<int>(best.selected_step)});
  ckpt::save(out, c);

  if (!metrics.empty()) {
    std::ostringstream m;
    gan::write_metrics_header(m);
    for (const auto& row : best.log) gan::write_metrics_row(m, row);
    write_text_file(metrics, m.str());
  }
  std::cout << "selected restart " << r.best << " step " << best.selected_step << '\n';
  return kOk;
}

int cmd_pretrain_text(const std::string& cfg, const std::string& text, const std::string& variant,
                      const std::string& out) {
  const auto s = settings_from(cfg);
  const text::Variant v = text::parse_variant(variant);
  if (v == text::Variant::kRandom) throw ConfigError("pretrain-text: the random variant is never pretrained");
  require_file(text);
  text::PretrainResult report;
  const text::TextEncoder enc = pipeline::make_text_encoder(s, v, load_text(text, vocab_of(s)), &report);
  ckpt::Checkpoint c;
  ckpt::put_text_encoder(c, enc);
  ckpt::save(out, c);
  std::cout << "masked_accuracy " << report.masked_accuracy << '\n';
  return kOk;
}

int cmd_decode(const std::string& ckpt_path, const std::string& features, const std::string& out) {
  require_file(ckpt_path);
  require_file(features);
  const ckpt::Checkpoint c = ckpt::load(ckpt_path);
  const auto cfg = ckpt::get_generator_config(c);
  const Vocabulary v = vocab_of(c);
  const Parameters gen = ckpt::get_params(c, "gen.");
  const auto speech = load_features(features);
  const auto decoded = gan::decode_all(cfg, gen, speech, v.silence_id());
  std::vector<PhonemeSequence> hyps;
  for (std::size_t i = 0; i < speech.size(); ++i) hyps.push_back({speech[i].id, decoded[i]});
  save_text(out, hyps, v);
  return kOk;
}

int cmd_eval_per(const std::string& ref, const std::string& hyp, const std::string& out) {
  const Vocabulary v = symbols_of({ref, hyp});
  const auto rows = eval::evaluate(load_text(ref, v), load_text(hyp, v));
  eval::write_per_csv(out, rows);
  std::cout << "corpus_per " << eval::corpus_per(rows) << '\n';
  return kOk;
}

int cmd_fuse(const std::string& mode, const std::string& ckpt_path, const std::string& text_ckpt,
             const std::string& features, const std::string& out) {
  if (mode != "eq2" && mode != "eq3") throw ConfigError("fuse: --mode must be eq2 or eq3");
  if (mode == "eq3" && text_ckpt.empty()) throw ConfigError("fuse: eq3 needs --text-ckpt");
  require_file(ckpt_path);
  require_file(features);
  const ckpt::Checkpoint c = ckpt::load(ckpt_path);
  const auto cfg = ckpt::get_generator_config(c);
  const Parameters gen = ckpt::get_params(c, "gen.");
  std::optional<text::TextEncoder> enc;
  if (mode == "eq3") {
    require_file(text_ckpt);
    enc = ckpt::get_text_encoder(ckpt::load(text_ckpt));
  }
  std::vector<FeatureSequence> fused;
  std::optional<fusion::FusedFeatures> first;
  for (const auto& h : load_features(features)) {
    fusion::FusedFeatures f =
        enc ? fusion::f_speech_text_features(h, cfg, gen, *enc) : fusion::f_uasr_features(h, cfg, gen);
    FeatureSequence fs = f.as_features();
    fs.gold_alignment = h.gold_alignment;
    fused.push_back(std::move(fs));
    if (!first) first = std::move(f);
  }
  save_features(out, fused);
  if (first) fusion::write_manifest(out + ".manifest", *first);
  return kOk;
}

int cmd_run_matrix(const std::string& cfg, const std::string& cells_arg, const std::string& tasks_arg,
                   const std::string& out) {
  const auto s = settings_from(cfg);
  std::vector<downstream::ExperimentConfig> cells;
  std::stringstream cs(cells_arg);
  for (std::string item; std::getline(cs, item, ',');) {
    if (item.size() != 1) throw ConfigError("run-matrix: bad cell '" + item + "'");
    cells.push_back(downstream::cell_config(item[0]));
  }
  if (cells.empty()) throw ConfigError("run-matrix: no cells");

  const pipeline::Data d = pipeline::make_data(s);
  downstream::Artifacts art;
  art.assign = s.assign;
  bool need_uasr = false, need_km = false;
  std::set<text::Variant> variants;
  for (const auto& c : cells) {
    need_uasr |= c.connector == downstream::Connector::kUasr;
    need_km |= c.connector == downstream::Connector::kKmeans;
    if (c.text_model) variants.insert(*c.text_model);
  }
  art.gen_cfg = s.uasr.gen;
  if (need_uasr) art.generator = pipeline::train_uasr(s, d).generator;
  if (need_km) {
    art.codebook = pipeline::fit_kmeans(s, d.train.speech);
    art.cluster_dictionary = pipeline::cluster_tokens(art.codebook->k, s.world.vocab_size);
  }
  for (auto v : variants) art.encoders.emplace(v, pipeline::make_text_encoder(s, v, d.train.text));

  std::vector<downstream::ProbeTask> tasks;
  std::stringstream ts(tasks_arg);
  for (std::string item; std::getline(ts, item, ',');) {
    if (item == "intent")
      tasks.push_back(downstream::make_intent_task(d.world, s.intent_classes, s.intent_items, s.intent_seed));
    else if (item == "tagging")
      tasks.push_back(downstream::make_tagging_task(d.world, s.tagging_seed, s.tagging_items));
    else
      throw ConfigError("run-matrix: unknown task '" + item + "'");
  }
  std::vector<const downstream::ProbeTask*> task_ptrs;
  for (const auto& t : tasks) task_ptrs.push_back(&t);
  const downstream::Report report = downstream::run_matrix(cells, task_ptrs, art, s.probe_seeds, s.probe);
  std::ostringstream csv;
  downstream::write_report_csv(csv, report);
  write_text_file(out, csv.str());
  for (const auto& [cell, msg] : report.errors) std::cerr << "cell " << cell << ": " << msg << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uasb: unsupervised speech recognition bridge toolkit"};
  app.require_subcommand(1);
  std::string cfg, out, features, text, valid, metrics, ckpt_path, text_ckpt, ref, hyp, mode, variant;
  std::string cells = "A,B,C,D,E,F", tasks = "intent,tagging";
  std::size_t k = 8;

  auto* gen = app.add_subcommand("gen-data", "Synthesize a world and its corpora");
  gen->add_option("--config", cfg, "Config file");
  gen->add_option("--out", out, "Output directory")->required();

  auto* km = app.add_subcommand("kmeans-fit", "Fit a k-means codebook");
  km->add_option("--features", features)->required();
  km->add_option("--k", k)->check(CLI::PositiveNumber);
  km->add_option("--out", out)->required();

  auto* tu = app.add_subcommand("train-uasr", "Adversarial recognizer training");
  tu->add_option("--config", cfg);
  tu->add_option("--features", features)->required();
  tu->add_option("--text", text)->required();
  tu->add_option("--valid", valid, "Unlabelled speech for checkpoint selection");
  tu->add_option("--out", out)->required();
  tu->add_option("--metrics", metrics);

  auto* pt = app.add_subcommand("pretrain-text", "Span-corruption pretraining of the text encoder");
  pt->add_option("--config", cfg);
  pt->add_option("--text", text)->required();
  pt->add_option("--variant", variant)->required();
  pt->add_option("--out", out)->required();

  auto* dec = app.add_subcommand("decode", "Greedy decoding to phoneme text");
  dec->add_option("--ckpt", ckpt_path)->required();
  dec->add_option("--features", features)->required();
  dec->add_option("--out", out)->required();

  auto* ev = app.add_subcommand("eval-per", "Phone error rate of hypotheses against references");
  ev->add_option("--ref", ref)->required();
  ev->add_option("--hyp", hyp)->required();
  ev->add_option("--out", out)->required();

  auto* fu = app.add_subcommand("fuse", "Write fused feature files");
  fu->add_option("--mode", mode)->required();
  fu->add_option("--ckpt", ckpt_path)->required();
  fu->add_option("--text-ckpt", text_ckpt);
  fu->add_option("--features", features)->required();
  fu->add_option("--out", out)->required();

  auto* rm = app.add_subcommand("run-matrix", "Downstream probe matrix");
  rm->add_option("--config", cfg);
  rm->add_option("--cells", cells);
  rm->add_option("--tasks", tasks);
  rm->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*gen) return cmd_gen_data(cfg, out);
    if (*km) return cmd_kmeans_fit(features, k, out);
    if (*tu) return cmd_train_uasr(cfg, features, text, valid, out, metrics);
    if (*pt) return cmd_pretrain_text(cfg, text, variant, out);
    if (*dec) return cmd_decode(ckpt_path, features, out);
    if (*ev) return cmd_eval_per(ref, hyp, out);
    if (*fu) return cmd_fuse(mode, ckpt_path, text_ckpt, features, out);
    if (*rm) return cmd_run_matrix(cfg, cells, tasks, out);
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kIo;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
