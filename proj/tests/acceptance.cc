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

// Acceptance run: one line per criterion, "criterion N: PASS|FAIL <detail>".
// Exits non-zero when any criterion fails. The long criteria train the full
// default pipeline, so expect tens of minutes on one core.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.h"
#include "op_catalog.h"
#include "uasb/checkpoint.h"
#include "uasb/config.h"
#include "uasb/corpus_io.h"
#include "uasb/decode.h"
#include "uasb/detail/bytes.h"
#include "uasb/downstream.h"
#include "uasb/fusion.h"
#include "uasb/gan.h"
#include "uasb/kmeans.h"
#include "uasb/pipeline.h"

using namespace uasb;
namespace fs = std::filesystem;
using uasb::testing::random_tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double per_on(const Corpora& c, const std::vector<std::vector<int>>& decoded) {
  std::vector<PhonemeSequence> refs = c.speech_sentences, hyps;
  for (std::size_t i = 0; i < c.speech.size(); ++i) {
    refs[i].id = c.speech[i].id;
    hyps.push_back({c.speech[i].id, decoded[i]});
  }
  return eval::corpus_per(eval::evaluate(refs, hyps));
}

config::RunSettings defaults() { return config::resolve(config::RunConfig{}); }

// ---------------------------------------------------------------- 1

Outcome autodiff() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(123);
  double worst = 0.0;
  std::string worst_op;
  std::size_t checks = 0;
  for (const auto& op : uasb::testing::op_catalog())
    for (int v = 0; v < 5; ++v) {
      const double err = uasb::testing::gradcheck(op.forward, op.make(rng, v), 1000 + v);
      ++checks;
      if (!(err <= worst)) worst = err, worst_op = op.name;
    }
  const double secs = seconds_since(t0);
  return {worst <= 1e-3 && secs < 60.0, std::to_string(checks) + " checks, max rel err " + fmt("%.2e", worst) +
                                            " (" + worst_op + "), " + fmt("%.1f s", secs)};
}

// ---------------------------------------------------------------- 2

Outcome loss_values() {
  std::vector<std::string> failed;
  auto expect = [&](bool ok, const char* what) {
    if (!ok) failed.push_back(what);
  };
  Tape t;
  const auto half = gan::adversarial_losses(t, Tensor::scalar(0.5f), Tensor::scalar(0.5f));
  expect(std::fabs(half.loss_c.item() - 1.3863) <= 1e-4, "loss_c at 0.5");
  expect(std::fabs(half.loss_g.item() - 0.6931) <= 1e-4, "loss_g at 0.5");
  const auto perfect = gan::adversarial_losses(t, Tensor::scalar(1.0f - 1e-6f), Tensor::scalar(1e-6f));
  expect(perfect.loss_c.item() >= 0.0f && perfect.loss_c.item() < 1e-4f, "loss_c perfect limit");

  expect(gan::smoothness_penalty(t, Tensor({3, 2}, {0.3f, 0.7f, 0.3f, 0.7f, 0.3f, 0.7f})).item() == 0.0f,
         "smoothness constant");
  expect(gan::smoothness_penalty(t, Tensor({2, 2}, {1, 0, 0, 1})).item() == 2.0f, "smoothness 2.0");

  std::vector<Tensor> uniform{Tensor::full({3, 4}, 0.25f), Tensor::full({2, 4}, 0.25f)};
  expect(std::fabs(gan::diversity_loss(t, uniform).item() + std::log(4.0)) <= 1e-4, "diversity uniform");
  std::vector<Tensor> peaked{Tensor({2, 4}, {0, 0, 1, 0, 0, 0, 1, 0})};
  expect(std::fabs(gan::diversity_loss(t, peaked).item()) <= 1e-6, "diversity one-hot");

  {
    gan::GeneratorConfig cfg{4, 3, 3, 2, 4, 2};
    Rng rng(13);
    Parameters head = gan::init_aux_head(cfg, 3, rng);
    const std::vector<int> ids{2, 0, 1, 1};
    std::vector<float> onehot(12, 0.0f);
    for (std::size_t i = 0; i < 4; ++i) onehot[i * 3 + ids[i]] = 1.0f;
    const Tensor hidden({4, 3}, onehot);
    auto& w = head.get("gen.aux.weight");
    for (std::size_t i = 0; i < 9; ++i) w.mutable_data()[i] = (i % 4 == 0) ? 40.0f : 0.0f;
    expect(std::fabs(gan::aux_cluster_loss(t, hidden, ids, head).item()) <= 1e-4, "aux true ids");
    for (float& x : w.mutable_data()) x = 0.0f;
    expect(std::fabs(gan::aux_cluster_loss(t, hidden, ids, head).item() - std::log(3.0)) <= 1e-4, "aux uniform");
  }
  {
    Rng rng(5);
    gan::DiscriminatorConfig cfg{4, 6, 3, 2};
    Parameters p = gan::init_discriminator(cfg, rng);
    for (auto& [name, v] : p)
      for (float& x : v.mutable_data()) x = 0.0f;
    const Tensor real = gan::smoothed_one_hot(std::vector<int>{0, 1, 2, 3, 1}, 4, 0.1);
    const Tensor fake = random_tensor({5, 4}, rng, 0.0f, 1.0f, false);
    expect(std::fabs(gan::gradient_penalty(t, cfg, p, real, fake, rng).item()) <= 1e-6, "gp constant");
  }
  {
    // Linear discriminator: sigma(<w, mean_t x_t> + b) has a closed-form
    // input gradient.
    Rng rng(6);
    gan::DiscriminatorConfig cfg{3, 0, 1, 0};
    Parameters p = gan::init_discriminator(cfg, rng);
    p.get("disc.head.bias").mutable_data()[0] = 0.4f;
    const std::size_t T = 7;
    const Tensor x = random_tensor({T, 3}, rng, 0.0f, 1.0f, false);
    const auto w = p.get("disc.head.weight").data();
    double z = 0.4;
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t v = 0; v < 3; ++v) z += w[v] / T * x.at(i, v);
    const double s = 1.0 / (1.0 + std::exp(-z)), ds = s * (1.0 - s);
    double expected = 0.0;
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t v = 0; v < 3; ++v) expected += (ds * w[v] / T) * (ds * w[v] / T);
    const double got = gan::gradient_penalty(t, cfg, p, x, x, rng).item();
    expect(std::fabs(got - expected) <= 1e-4 * std::max(1.0, std::fabs(expected)), "gp linear");
  }
  std::string detail = "13 closed-form values";
  for (const auto& f : failed) detail += "; mismatch: " + f;
  return {failed.empty(), detail};
}

// ---------------------------------------------------------------- 3

Outcome supervised_ceiling(const config::RunSettings& s, const pipeline::Data& d) {
  const auto t0 = std::chrono::steady_clock::now();
  const Parameters g = gan::train_supervised(s.uasr.gen, d.train.speech, {});
  const double per = per_on(d.valid, gan::decode_all(s.uasr.gen, g, d.valid.speech, s.uasr.silence_id));
  return {per <= 0.05, "validation PER " + fmt("%.4f", per) + " (<= 0.05), " + fmt("%.0f s", seconds_since(t0))};
}

// ---------------------------------------------------------------- 4

Outcome unsupervised(const config::RunSettings& s, const pipeline::Data& d, const pipeline::UasrOutcome& u,
                     double secs) {
  std::string detail;
  for (std::size_t r = 0; r < u.runs.size(); ++r) {
    const auto& run = u.runs[r];
    detail += "restart " + std::to_string(r) + " step " + std::to_string(run.selected_step) + " PER " +
              fmt("%.4f", per_on(d.valid, gan::decode_all(s.uasr.gen, run.selected, d.valid.speech,
                                                         s.uasr.silence_id))) +
              "; ";
  }
  const double per = per_on(d.valid, gan::decode_all(s.uasr.gen, u.generator, d.valid.speech, s.uasr.silence_id));
  const double V = static_cast<double>(s.world.vocab_size);
  const double chance = (V - 1.0) / V;
  detail += "selected restart " + std::to_string(u.best) + " PER " + fmt("%.4f", per) + " (<= 0.30, chance " +
            fmt("%.3f", chance) + (per < chance ? ", below chance" : ", not below chance") + "), " +
            std::to_string(s.uasr.hp.steps) + " steps, " + fmt("%.0f s", secs);
  return {per <= 0.30 && s.uasr.hp.steps <= 5000, detail};
}

// ---------------------------------------------------------------- 5

Outcome frame_probe_trend() {
  const auto t0 = std::chrono::steady_clock::now();
  config::RunConfig rc;
  rc.set("world.sigma", "0.6");
  const auto s = config::resolve(rc);
  const pipeline::Data d = pipeline::make_data(s);
  const auto u = pipeline::train_uasr(s, d);
  const double per = per_on(d.valid, gan::decode_all(s.uasr.gen, u.generator, d.valid.speech, s.uasr.silence_id));

  std::vector<double> a, b;
  for (std::uint64_t seed : s.probe_seeds) {
    downstream::FrameProbeOptions o;
    o.n_items = s.frame_items;
    o.data_seed = seed;
    o.probe = s.probe;
    o.probe.seed = seed;
    a.push_back(downstream::frame_phoneme_probe([](const FeatureSequence& h) { return h; }, d.world, o));
    b.push_back(downstream::frame_phoneme_probe(
        [&](const FeatureSequence& h) { return fusion::f_uasr_features(h, s.uasr.gen, u.generator).as_features(); },
        d.world, o));
  }
  const double ma = downstream::median_of(a), mb = downstream::median_of(b);
  return {mb >= ma, "sigma 0.6 frame accuracy median B " + fmt("%.4f", mb) + " vs A " + fmt("%.4f", ma) +
                        " (UASR PER " + fmt("%.3f", per) + "), " + fmt("%.0f s", seconds_since(t0))};
}

// ---------------------------------------------------------------- 6, 7

downstream::Report intent_matrix(const config::RunSettings& s, const pipeline::Data& d, const Parameters& gen) {
  downstream::Artifacts art;
  art.assign = s.assign;
  art.gen_cfg = s.uasr.gen;
  art.generator = gen;
  art.codebook = pipeline::fit_kmeans(s, d.train.speech);
  art.cluster_dictionary = pipeline::cluster_tokens(art.codebook->k, s.world.vocab_size);
  for (auto v : {text::Variant::kTrained, text::Variant::kRandom})
    art.encoders.emplace(v, pipeline::make_text_encoder(s, v, d.train.text));
  const auto task = downstream::make_intent_task(d.world, s.intent_classes, s.intent_items, s.intent_seed);
  std::vector<downstream::ExperimentConfig> cells;
  for (char c : {'A', 'C', 'D', 'E'}) cells.push_back(downstream::cell_config(c));
  return downstream::run_matrix(cells, {&task}, art, s.probe_seeds, s.probe);
}

std::string medians(const downstream::Report& r) {
  std::string out;
  for (char c : {'A', 'C', 'D', 'E'}) {
    const auto m = r.median(c, "intent");
    out += std::string(1, c) + " " + (m ? fmt("%.4f", *m) : std::string("error")) + " ";
  }
  return out;
}

Outcome intent_trend(const downstream::Report& r) {
  const auto a = r.median('A', "intent"), c = r.median('C', "intent"), d = r.median('D', "intent");
  if (!a || !c || !d) return {false, "missing cell: " + medians(r)};
  return {*d - *a >= 0.02 && *d >= *c, "intent medians " + medians(r) + "(need D - A >= 0.02 and D >= C)"};
}

Outcome encoder_trend(const downstream::Report& r) {
  const auto d = r.median('D', "intent"), e = r.median('E', "intent");
  if (!d || !e) return {false, "missing cell: " + medians(r)};
  return {*d > *e, "intent median D " + fmt("%.4f", *d) + " vs E " + fmt("%.4f", *e)};
}

// ---------------------------------------------------------------- 8

Outcome fusion_contracts() {
  Rng rng(5);
  gan::GeneratorConfig cfg;
  const text::TextEncoder enc = text::init_text_encoder(text::TextEncoderConfig{}, 3);
  const std::size_t d = cfg.input_dim, V = cfg.vocab_size, e = enc.cfg.output_dim;
  std::uniform_int_distribution<std::size_t> len(1, 40);
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::size_t bad = 0;
  for (int i = 0; i < 1000; ++i) {
    Rng init(rng());
    const Parameters gen = gan::init_generator(cfg, init);
    FeatureSequence h{"h", d, std::vector<float>(len(rng) * d), {}};
    for (float& x : h.frames) x = n(rng);
    const auto a = fusion::f_uasr_features(h, cfg, gen);
    const auto c = fusion::f_speech_text_features(h, cfg, gen, enc);
    bool ok = a.length == h.length() && a.width == d + V && c.length == h.length() && c.width == d + V + e &&
              c.spans.size() == 3 && fusion::spans_partition(c.spans, c.width);
    for (std::size_t t = 0; ok && t < h.length(); ++t) {
      ok = std::memcmp(a.row(t), h.frame(t), d * sizeof(float)) == 0 &&
           std::memcmp(c.row(t), h.frame(t), d * sizeof(float)) == 0;
      double s = 0;
      for (std::size_t v = d; v < d + V; ++v) s += c.row(t)[v];
      ok = ok && std::fabs(s - 1.0) <= 1e-6;
    }
    bad += !ok;
  }

  // Scaling invariance of argmax assignment.
  std::normal_distribution<float> logit(0.0f, 2.0f);
  std::uniform_real_distribution<float> scale(1.01f, 5.0f);
  const std::size_t rows = 10000;
  std::vector<float> l(rows * V), ls(rows * V);
  for (float& x : l) x = logit(rng);
  for (std::size_t r = 0; r < rows; ++r) {
    const float c = scale(rng);
    for (std::size_t v = 0; v < V; ++v) ls[r * V + v] = c * l[r * V + v];
  }
  auto post = [&](const std::vector<float>& x) {
    Tape t;
    const Tensor p = softmax(t, Tensor({rows, V}, x));
    return Posteriorgram{"p", V, 1, {p.data().begin(), p.data().end()}};
  };
  const auto base = fusion::assign(post(l)), scaled = fusion::assign(post(ls));
  std::size_t violations = 0;
  for (std::size_t r = 0; r < rows; ++r) violations += base[r] != scaled[r];
  return {bad == 0 && violations == 0, std::to_string(bad) + " of 1000 random inputs broke a contract, " +
                                           std::to_string(violations) + " of 10000 scaled rows changed argmax"};
}

// ---------------------------------------------------------------- 9

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<int, int> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (ab.emplace(a[i], b[i]).first->second != b[i]) return false;
    if (ba.emplace(b[i], a[i]).first->second != a[i]) return false;
  }
  return true;
}

Outcome kmeans_checks() {
  std::mt19937_64 rng(99);
  std::size_t increases = 0, iterations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_real_distribution<float> u(-1, 1);
    const std::size_t n = 30 + trial, dim = 1 + trial % 4, k = 2 + trial % 5;
    std::vector<float> data(n * dim);
    for (float& x : data) x = u(rng);
    std::vector<double> trace;
    try {
      kmeans::fit(data, dim, {.k = k, .max_iters = 100, .seed = std::uint64_t(trial)}, &trace);
    } catch (const std::exception&) {
      ++increases;
      continue;
    }
    iterations += trace.size();
    for (std::size_t i = 1; i < trace.size(); ++i) increases += trace[i] > trace[i - 1];
  }

  const float centers[3][2] = {{0, 0}, {10, 0}, {0, 10}};
  std::normal_distribution<float> noise(0.0f, 0.5f);
  std::vector<float> blobs;
  std::vector<int> truth;
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < 20; ++i) {
      blobs.push_back(centers[b][0] + noise(rng));
      blobs.push_back(centers[b][1] + noise(rng));
      truth.push_back(b);
    }
  const auto cb = kmeans::fit(blobs, 2, {.k = 3, .max_iters = 50, .seed = 2});
  const bool recovered = same_partition(kmeans::assign(cb, blobs, 2), truth);
  return {increases == 0 && recovered, std::to_string(increases) + " WCSS increases over 100 fits (" +
                                           std::to_string(iterations) + " iterations), blob recovery " +
                                           (recovered ? "exact" : "wrong")};
}

// ---------------------------------------------------------------- 10

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "uasb_acceptance_cli";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "small.cfg") << "data.n_speech = 80\ndata.n_text = 80\ndata.n_valid = 10\n"
                                      "gan.steps = 20\ngan.eval_every = 10\ngan.restarts = 2\n"
                                      "pretrain.steps = 10\nprobe.epochs = 2\nprobe.seeds = 1,2\n"
                                      "intent.n_items = 60\ntagging.n_items = 40\n";
  auto run = [&](const std::string& args) {
    const std::string cmd = "cd " + dir.string() + " && " UASB_CLI_PATH " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  auto bytes = [&](const std::string& name) { return detail::read_file(dir / name); };

  std::vector<std::string> outputs;
  std::size_t failures = 0;
  for (const std::string s : {"1", "2"}) {
    const std::vector<std::string> cmds{
        "gen-data --config small.cfg --out data" + s,
        "kmeans-fit --features data" + s + "/train_speech.feat --k 8 --out km" + s + ".ckpt",
        "train-uasr --config small.cfg --features data" + s + "/train_speech.feat --text data" + s +
            "/train_text.txt --valid data" + s + "/valid_speech.feat --out g" + s + ".ckpt --metrics m" + s + ".csv",
        "pretrain-text --config small.cfg --text data" + s + "/train_text.txt --variant trained --out t" + s +
            ".ckpt",
        "decode --ckpt g" + s + ".ckpt --features data" + s + "/valid_speech.feat --out hyp" + s + ".txt",
        "eval-per --ref data" + s + "/valid_ref.txt --hyp hyp" + s + ".txt --out per" + s + ".csv",
        "fuse --mode eq2 --ckpt g" + s + ".ckpt --features data" + s + "/valid_speech.feat --out f2_" + s + ".feat",
        "fuse --mode eq3 --ckpt g" + s + ".ckpt --text-ckpt t" + s + ".ckpt --features data" + s +
            "/valid_speech.feat --out f3_" + s + ".feat",
        "run-matrix --config small.cfg --out rm" + s + ".csv"};
    for (const auto& c : cmds) failures += run(c) != 0;
  }
  std::size_t differ = 0, compared = 0;
  auto compare = [&](const std::string& a, const std::string& b) {
    ++compared;
    differ += !fs::exists(dir / a) || !fs::exists(dir / b) || bytes(a) != bytes(b);
  };
  for (const char* f : {"train_speech.feat", "train_text.txt", "train_ref.txt", "valid_speech.feat", "valid_ref.txt",
                        "config.resolved"})
    compare(std::string("data1/") + f, std::string("data2/") + f);
  for (const char* f : {"km", "g", "t"}) compare(std::string(f) + "1.ckpt", std::string(f) + "2.ckpt");
  for (const char* f : {"m1.csv|m2.csv", "hyp1.txt|hyp2.txt", "per1.csv|per2.csv", "f2_1.feat|f2_2.feat",
                        "f3_1.feat|f3_2.feat", "f3_1.feat.manifest|f3_2.feat.manifest", "rm1.csv|rm2.csv"}) {
    const std::string pair(f);
    const auto bar = pair.find('|');
    compare(pair.substr(0, bar), pair.substr(bar + 1));
  }

  // Re-saving what was loaded reproduces the file.
  std::size_t round_trip_bad = 0;
  for (const char* c : {"km1.ckpt", "g1.ckpt", "t1.ckpt"}) {
    if (!fs::exists(dir / c)) {
      ++round_trip_bad;
      continue;
    }
    ckpt::save(dir / "again.ckpt", ckpt::load(dir / c));
    round_trip_bad += bytes("again.ckpt") != bytes(c);
  }
  for (const char* f : {"data1/train_speech.feat", "f3_1.feat"}) {
    if (!fs::exists(dir / f)) {
      ++round_trip_bad;
      continue;
    }
    save_features(dir / "again.feat", load_features(dir / f));
    round_trip_bad += bytes("again.feat") != bytes(f);
  }
  fs::remove_all(dir);
  return {failures == 0 && differ == 0 && round_trip_bad == 0,
          std::to_string(failures) + " failed commands, " + std::to_string(differ) + " of " +
              std::to_string(compared) + " outputs differ, " + std::to_string(round_trip_bad) +
              " of 5 round trips not byte-exact"};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int n, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %d: %s %s\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, autodiff);
  report(2, loss_values);
  report(8, fusion_contracts);
  report(9, kmeans_checks);
  report(10, determinism);

  const config::RunSettings s = defaults();
  const pipeline::Data d = pipeline::make_data(s);
  report(3, [&] { return supervised_ceiling(s, d); });

  std::optional<pipeline::UasrOutcome> uasr;
  report(4, [&] {
    const auto t0 = std::chrono::steady_clock::now();
    uasr = pipeline::train_uasr(s, d);
    return unsupervised(s, d, *uasr, seconds_since(t0));
  });

  std::optional<downstream::Report> matrix;
  auto need_matrix = [&] {
    if (!uasr) throw std::runtime_error("no UASR generator");
    if (!matrix) matrix = intent_matrix(s, d, uasr->generator);
    return *matrix;
  };
  report(6, [&] { return intent_trend(need_matrix()); });
  report(7, [&] { return encoder_trend(need_matrix()); });
  report(5, frame_probe_trend);

  std::printf("%d of 10 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
