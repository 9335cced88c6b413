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
#include <limits>
#include <sstream>

#include "doctest.h"
#include "gradcheck.h"
#include "uasb/errors.h"
#include "uasb/gan.h"

using namespace uasb;
using namespace uasb::gan;
using uasb::testing::gradcheck;
using uasb::testing::random_tensor;

namespace {

Corpora tiny_corpora(std::uint64_t seed, std::size_t n = 4) {
  WorldSpec ws;
  ws.vocab_size = 4;
  ws.feature_dim = 4;
  ws.min_len = 3;
  ws.max_len = 6;
  ws.seed = seed;
  return generate_corpora(World::create(ws), n, n, seed);
}

Batch batch_of(const Corpora& c) {
  Batch b;
  for (const auto& s : c.speech) b.speech.push_back(&s);
  for (const auto& t : c.text) b.text.push_back(&t);
  return b;
}

GanState tiny_state(std::size_t gen_layers, std::uint64_t seed = 3) {
  GeneratorConfig g{4, 8, 3, 2, 4, gen_layers};
  DiscriminatorConfig d{4, 6, 3, 2};
  return init_state(g, d, 0, seed);
}

float scalar_of(const Tensor& t) { return t.item(); }

}  // namespace

TEST_CASE("generator output shape and normalization") {
  Rng rng(1);
  GeneratorConfig cfg{4, 8, 3, 2, 5, 2};
  Parameters p = init_generator(cfg, rng);
  FeatureSequence h{"x", 4, std::vector<float>(40, 0.3f), {}};
  for (std::size_t i = 0; i < h.frames.size(); ++i) h.frames[i] = std::sin(0.7f * i);
  const Posteriorgram g = generator_forward(cfg, p, h);
  REQUIRE(g.rows() == 5);
  CHECK(g.stride == 2);
  for (std::size_t t = 0; t < g.rows(); ++t) {
    double s = 0;
    for (std::size_t v = 0; v < 5; ++v) s += g.row(t)[v];
    CHECK(std::fabs(s - 1.0) <= 1e-6);
  }
  // Odd length rounds up.
  h.frames.resize(36);
  CHECK(generator_forward(cfg, p, h).rows() == 5);
}

TEST_CASE("zero generator parameters give uniform posteriors") {
  Rng rng(2);
  GeneratorConfig cfg{3, 6, 3, 2, 4, 2};
  Parameters p = init_generator(cfg, rng);
  for (auto& [name, t] : p)
    for (float& x : t.mutable_data()) x = 0.0f;
  FeatureSequence h{"x", 3, {1, 2, 3, 4, 5, 6, 7, 8, 9}, {}};
  const Posteriorgram g = generator_forward(cfg, p, h);
  for (float x : g.probs) CHECK(x == doctest::Approx(0.25f).epsilon(1e-7));
}

TEST_CASE("generator rejects empty and mis-sized input") {
  Rng rng(3);
  GeneratorConfig cfg{3, 6, 3, 2, 4, 2};
  Parameters p = init_generator(cfg, rng);
  CHECK_THROWS_AS(generator_forward(cfg, p, FeatureSequence{"e", 3, {}, {}}), ShapeError);
  CHECK_THROWS_AS(generator_forward(cfg, p, FeatureSequence{"w", 2, {1, 2, 3, 4}, {}}), ShapeError);
}

TEST_CASE("generator gradient matches finite differences") {
  for (std::size_t layers : {1, 2}) {
    GeneratorConfig cfg{3, 5, 3, 2, 4, layers};
    // Redraw until no hidden pre-activation sits within the FD stencil of
    // the relu kink.
    for (std::uint64_t seed = 10;; ++seed) {
      Rng rng(seed);
      Parameters p = init_generator(cfg, rng);
      for (auto& [name, t] : p)
        for (float& x : t.mutable_data()) x += 0.1f;
      const Tensor x = random_tensor({9, 3}, rng, -1.0f, 1.0f, false);
      if (layers > 1) {
        Tape probe;
        const Tensor a = add(probe, conv1d(probe, x, p.get("gen.layer0.kernel"), 2), p.get("gen.layer0.bias"));
        bool near = false;
        for (float v : a.data()) near = near || std::fabs(v) < 0.02f;
        if (near) continue;
      }
      std::vector<Tensor> inputs;
      for (auto& [name, t] : p) inputs.push_back(t);
      auto f = [&](Tape& tape, const std::vector<Tensor>&) {
        return log(tape, generator_apply(tape, cfg, p, x).probs);
      };
      CHECK(gradcheck(f, inputs, 5, 1e-3f) <= 1e-3);
      break;
    }
  }
}

TEST_CASE("adversarial loss values") {
  Tape t;
  auto l = adversarial_losses(t, Tensor::scalar(0.5f), Tensor::scalar(0.5f));
  CHECK(scalar_of(l.loss_c) == doctest::Approx(1.3863).epsilon(1e-4));
  CHECK(scalar_of(l.loss_g) == doctest::Approx(0.6931).epsilon(1e-4));

  auto perfect = adversarial_losses(t, Tensor::scalar(1.0f), Tensor::scalar(0.0f));
  CHECK(scalar_of(perfect.loss_c) >= 0.0f);
  CHECK(scalar_of(perfect.loss_c) < 1e-5f);
  CHECK(std::isfinite(scalar_of(perfect.loss_g)));

  auto literal = adversarial_losses(t, Tensor::scalar(0.5f), Tensor::scalar(0.25f), true);
  CHECK(scalar_of(literal.loss_g) == doctest::Approx(std::log(0.75)).epsilon(1e-5));
}

TEST_CASE("adversarial losses are non-negative over the open interval") {
  Rng rng(4);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int i = 0; i < 1000; ++i) {
    Tape t;
    auto l = adversarial_losses(t, Tensor::scalar(u(rng)), Tensor::scalar(u(rng)));
    CHECK(scalar_of(l.loss_c) >= 0.0f);
    CHECK(scalar_of(l.loss_g) >= 0.0f);
  }
}

TEST_CASE("gradient penalty of a constant discriminator is zero") {
  Rng rng(5);
  DiscriminatorConfig cfg{4, 6, 3, 2};
  Parameters p = init_discriminator(cfg, rng);
  for (auto& [name, t] : p)
    for (float& x : t.mutable_data()) x = 0.0f;
  Tape tape;
  const Tensor real = smoothed_one_hot(std::vector<int>{0, 1, 2, 3, 1}, 4, 0.1);
  const Tensor fake = random_tensor({5, 4}, rng, 0.0f, 1.0f, false);
  CHECK(std::fabs(gradient_penalty(tape, cfg, p, real, fake, rng).item()) <= 1e-6f);
}

TEST_CASE("gradient penalty of a linear discriminator has its closed form") {
  Rng rng(6);
  DiscriminatorConfig cfg{3, 0, 1, 0};
  Parameters p = init_discriminator(cfg, rng);
  p.get("disc.head.bias").mutable_data()[0] = 0.4f;
  const Tensor x = random_tensor({7, 3}, rng, 0.0f, 1.0f, false);
  const auto w = p.get("disc.head.weight").data();

  // C(x) = sigma(<W, x> + b) with W[t][v] = w[v] / T, the mean-pool folded in.
  const std::size_t T = 7;
  double z = 0.4;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t v = 0; v < 3; ++v) z += w[v] / T * x.at(t, v);
  const double s = 1.0 / (1.0 + std::exp(-z));
  const double ds = s * (1.0 - s);
  double expected = 0.0;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t v = 0; v < 3; ++v) expected += (ds * w[v] / T) * (ds * w[v] / T);

  Tape tape;
  CHECK(discriminator_input_grad_sq(tape, cfg, p, x).item() == doctest::Approx(expected).epsilon(1e-4));
  // real == fake pins the interpolate regardless of alpha.
  CHECK(gradient_penalty(tape, cfg, p, x, x, rng).item() == doctest::Approx(expected).epsilon(1e-4));
}

TEST_CASE("input gradient of the conv discriminator matches finite differences in x") {
  Rng rng(7);
  DiscriminatorConfig cfg{4, 5, 3, 2};
  Parameters p = init_discriminator(cfg, rng);
  const Tensor x = random_tensor({6, 4}, rng, 0.0f, 1.0f, false);
  const float h = 1e-3f;
  double fd_sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor xp = x.clone(), xm = x.clone();
    xp.mutable_data()[i] += h;
    xm.mutable_data()[i] -= h;
    Tape a, b;
    const double d = (double(discriminator_apply(a, cfg, p, xp).item()) -
                      discriminator_apply(b, cfg, p, xm).item()) / (2.0 * h);
    fd_sq += d * d;
  }
  Tape tape;
  CHECK(discriminator_input_grad_sq(tape, cfg, p, x).item() == doctest::Approx(fd_sq).epsilon(2e-3));
}

TEST_CASE("gradient penalty is trainable: its parameter gradient matches finite differences") {
  Rng rng(8);
  DiscriminatorConfig cfg{3, 4, 3, 2};
  Parameters p = init_discriminator(cfg, rng);
  std::vector<Tensor> inputs;
  for (auto& [name, t] : p) {
    for (float& v : t.mutable_data()) v += 0.05f;
    inputs.push_back(t);
  }
  const Tensor x = random_tensor({5, 3}, rng, 0.0f, 1.0f, false);
  auto f = [&](Tape& tape, const std::vector<Tensor>&) {
    return discriminator_input_grad_sq(tape, cfg, p, x);
  };
  CHECK(gradcheck(f, inputs, 9, 1e-3f) <= 1e-3);
}

TEST_CASE("gradient penalty is symmetric in real and fake") {
  Rng rng(9);
  DiscriminatorConfig cfg{4, 6, 3, 2};
  Parameters p = init_discriminator(cfg, rng);
  const Tensor a = smoothed_one_hot(std::vector<int>{0, 2, 1, 3, 2, 0}, 4, 0.1);
  const Tensor b = random_tensor({6, 4}, rng, 0.0f, 1.0f, false);
  const int n = 10000;
  double m[2] = {0, 0}, m2[2] = {0, 0};
  for (int i = 0; i < n; ++i) {
    Tape t;
    const double ab = gradient_penalty(t, cfg, p, a, b, rng).item();
    const double ba = gradient_penalty(t, cfg, p, b, a, rng).item();
    m[0] += ab;
    m2[0] += ab * ab;
    m[1] += ba;
    m2[1] += ba * ba;
  }
  double se2 = 0.0;
  for (int k = 0; k < 2; ++k) {
    m[k] /= n;
    se2 += (m2[k] / n - m[k] * m[k]) / n;
  }
  CHECK(std::fabs(m[0] - m[1]) <= 2.0 * std::sqrt(se2));
}

TEST_CASE("gradient penalty crops the longer sequence") {
  Rng rng(10);
  DiscriminatorConfig cfg{4, 6, 3, 2};
  Parameters p = init_discriminator(cfg, rng);
  const Tensor real = smoothed_one_hot(std::vector<int>{0, 1, 2, 3, 0, 1, 2, 3, 1}, 4, 0.1);
  const Tensor fake = random_tensor({4, 4}, rng, 0.0f, 1.0f, false);
  Tape tape;
  CHECK(std::isfinite(gradient_penalty(tape, cfg, p, real, fake, rng).item()));
  CHECK(std::isfinite(gradient_penalty(tape, cfg, p, fake, real, rng).item()));
  CHECK_THROWS_AS(gradient_penalty(tape, cfg, p, real, random_tensor({4, 3}, rng), rng), ShapeError);
}

TEST_CASE("smoothness penalty") {
  Tape t;
  CHECK(smoothness_penalty(t, Tensor({3, 2}, {0.3f, 0.7f, 0.3f, 0.7f, 0.3f, 0.7f})).item() == 0.0f);
  CHECK(smoothness_penalty(t, Tensor({2, 2}, {1, 0, 0, 1})).item() == 2.0f);
  CHECK(smoothness_penalty(t, Tensor({1, 3}, {0.2f, 0.3f, 0.5f})).item() == 0.0f);

  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tape tape;
    const Tensor p = softmax(tape, random_tensor({9, 5}, rng, -2.0f, 2.0f, false));
    double ref = 0.0;
    for (std::size_t r = 0; r + 1 < 9; ++r)
      for (std::size_t c = 0; c < 5; ++c) {
        const double d = double(p.at(r, c)) - p.at(r + 1, c);
        ref += d * d;
      }
    CHECK(std::fabs(smoothness_penalty(tape, p).item() - ref) <= 1e-6);
  }
}

TEST_CASE("diversity loss") {
  Tape t;
  std::vector<Tensor> uniform{Tensor::full({3, 4}, 0.25f), Tensor::full({2, 4}, 0.25f)};
  CHECK(diversity_loss(t, uniform).item() == doctest::Approx(-std::log(4.0)).epsilon(1e-4));
  std::vector<Tensor> peaked{Tensor({2, 4}, {0, 0, 1, 0, 0, 0, 1, 0})};
  CHECK(std::fabs(diversity_loss(t, peaked).item()) <= 1e-6f);
  CHECK_THROWS_AS(diversity_loss(t, std::vector<Tensor>{}), ShapeError);

  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    Tape tape;
    std::vector<Tensor> batch;
    for (std::size_t len : {3, 7, 1}) batch.push_back(softmax(tape, random_tensor({len, 6}, rng, -3.0f, 3.0f, false)));
    std::vector<double> pbar(6, 0.0);
    double rows = 0;
    for (const Tensor& p : batch)
      for (std::size_t r = 0; r < p.rows(); ++r) {
        rows += 1;
        for (std::size_t c = 0; c < 6; ++c) pbar[c] += p.at(r, c);
      }
    double ref = 0.0;
    for (double& v : pbar) {
      v /= rows;
      ref += v * std::log(v);
    }
    const float got = diversity_loss(tape, batch).item();
    CHECK(std::fabs(got - ref) <= 1e-6);
    CHECK(got <= 0.0f);
    CHECK(got >= -std::log(6.0f) - 1e-6f);
  }
}

TEST_CASE("auxiliary cluster loss") {
  GeneratorConfig cfg{4, 3, 3, 2, 4, 2};
  Rng rng(13);
  Parameters head = init_aux_head(cfg, 3, rng);
  const std::vector<int> ids{2, 0, 1, 1};
  std::vector<float> onehot(4 * 3, 0.0f);
  for (std::size_t t = 0; t < 4; ++t) onehot[t * 3 + ids[t]] = 1.0f;
  const Tensor hidden({4, 3}, onehot);

  auto& w = head.get("gen.aux.weight");
  for (std::size_t i = 0; i < 9; ++i) w.mutable_data()[i] = (i % 4 == 0) ? 40.0f : 0.0f;
  Tape t;
  CHECK(std::fabs(aux_cluster_loss(t, hidden, ids, head).item()) <= 1e-4f);

  for (float& x : w.mutable_data()) x = 0.0f;
  CHECK(aux_cluster_loss(t, hidden, ids, head).item() == doctest::Approx(std::log(3.0)).epsilon(1e-4));

  CHECK_THROWS_AS(aux_cluster_loss(t, hidden, std::vector<int>{0, 1}, head), ShapeError);
  CHECK(downsample_ids(std::vector<int>{5, 6, 7, 8, 9}, 2) == std::vector<int>{5, 7, 9});

  Parameters fresh = init_aux_head(cfg, 3, rng);
  std::vector<Tensor> inputs;
  for (auto& [name, p] : fresh) inputs.push_back(p);
  const Tensor hid = random_tensor({4, 3}, rng, -1.0f, 1.0f, true);
  inputs.push_back(hid);
  auto f = [&](Tape& tape, const std::vector<Tensor>&) { return aux_cluster_loss(tape, hid, ids, fresh); };
  CHECK(gradcheck(f, inputs, 3, 1e-3f) <= 1e-3);
}

TEST_CASE("smoothed one-hot rows") {
  const Tensor r = smoothed_one_hot(std::vector<int>{1, 0}, 3, 0.1);
  CHECK(r.at(0, 1) == doctest::Approx(0.9f));
  CHECK(r.at(0, 0) == doctest::Approx(0.05f));
  CHECK(r.at(1, 2) == doctest::Approx(0.05f));
  CHECK_THROWS_AS(smoothed_one_hot(std::vector<int>{3}, 3, 0.1), ShapeError);
}

TEST_CASE("zero learning rates leave every parameter bit-identical") {
  const Corpora c = tiny_corpora(21);
  GanState s = tiny_state(2);
  const GanState before = s.clone();
  GanHyperparams hp;
  hp.lr_g = hp.lr_c = 0.0;
  for (int i = 0; i < 3; ++i) train_step(s, batch_of(c), hp);
  CHECK(s.gen.equals(before.gen));
  CHECK(s.disc.equals(before.disc));
}

TEST_CASE("zero auxiliary weights reduce the generator objective to -log C(fake)") {
  const Corpora c = tiny_corpora(22);
  GanState s = tiny_state(2);
  GanHyperparams hp;
  hp.lambda_gp = hp.gamma_sp = hp.eta_pd = hp.delta_ss = 0.0;
  hp.lr_g = hp.lr_c = 0.05;
  for (int i = 0; i < 3; ++i) {
    const StepMetrics m = train_step(s, batch_of(c), hp);
    CHECK(m.gen_objective == m.loss_g);
    CHECK(m.disc_objective == m.loss_c);
    CHECK(m.l_sp >= 0.0);
    CHECK(m.l_gp >= 0.0);
  }
}

TEST_CASE("one train step moves the generator by -lr times the finite-difference gradient") {
  const Corpora c = tiny_corpora(23, 3);
  GanState s = tiny_state(1, 5);
  GanHyperparams hp;
  hp.lr_g = 0.05;
  hp.lr_c = 0.05;
  const GanState before = s.clone();
  train_step(s, batch_of(c), hp);

  // The generator step sees the already-updated discriminator.
  GanState probe = before.clone();
  probe.disc = s.disc.clone();
  const float h = 2e-3f;
  double diff = 0.0, scale = 0.0;
  for (auto& [name, p] : probe.gen) {
    const auto after = s.gen.get(name).data();
    const auto orig = before.gen.get(name).data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const float keep = p.mutable_data()[i];
      p.mutable_data()[i] = keep + h;
      Tape a;
      const double up = generator_objective(a, probe, batch_of(c), hp).total.item();
      p.mutable_data()[i] = keep - h;
      Tape b;
      const double down = generator_objective(b, probe, batch_of(c), hp).total.item();
      p.mutable_data()[i] = keep;
      const double expected = -hp.lr_g * (up - down) / (2.0 * h);
      const double delta = double(after[i]) - orig[i];
      diff = std::max(diff, std::fabs(delta - expected));
      scale = std::max(scale, std::fabs(expected));
    }
  }
  REQUIRE(scale > 0.0);
  CHECK(diff / scale <= 1e-3);
}

TEST_CASE("non-finite losses abort with the term and step") {
  const Corpora c = tiny_corpora(24);
  GanState s = tiny_state(2);
  GanHyperparams hp;
  train_step(s, batch_of(c), hp);
  s.disc.get("disc.head.bias").mutable_data()[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    train_step(s, batch_of(c), hp);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("loss_c") != std::string::npos);
    CHECK(msg.find("step 2") != std::string::npos);
  }
}

TEST_CASE("hyperparameter validation") {
  GanHyperparams hp;
  hp.eta_pd = -1.0;
  CHECK_THROWS_AS(hp.validate(), ConfigError);
  hp = {};
  hp.label_smooth_eps = 1.0;
  CHECK_THROWS_AS(hp.validate(), ConfigError);
}

TEST_CASE("checkpoint selection") {
  BigramLm lm = BigramLm::estimate({{0, 1, 2, 3}, {1, 2, 3, 0}, {2, 3, 0, 1}}, 4, 0.1);
  CheckpointRecord good{100, {}, {{0, 1, 2, 3}, {2, 3, 0}}};
  CheckpointRecord bad{200, {}, {{1}, {1}}};
  CHECK(select_checkpoint({good}, lm) == 100);
  CHECK(select_checkpoint({bad, good}, lm) == 100);
  CHECK(select_checkpoint({good, bad}, lm) == 100);
  CHECK(select_checkpoint({bad}, lm) == 200);
  // A shuffled decoding scores worse than an LM-consistent one with equal usage.
  CheckpointRecord shuffled{300, {}, {{3, 2, 1, 0}, {0, 3, 2}}};
  CHECK(checkpoint_score(good.decoded, lm) < checkpoint_score(shuffled.decoded, lm));
  CHECK(select_checkpoint({shuffled, good}, lm) == 100);
  CHECK(std::isinf(checkpoint_score({{}, {}}, lm)));
  CHECK_THROWS(select_checkpoint({}, lm));
}

TEST_CASE("training is deterministic for a fixed seed") {
  WorldSpec ws;
  ws.vocab_size = 4;
  ws.feature_dim = 4;
  const Corpora c = generate_corpora(World::create(ws), 30, 30, 4);
  TrainOptions o;
  o.gen = {4, 8, 3, 2, 4, 2};
  o.disc = {4, 6, 3, 2};
  o.hp.steps = 100;
  o.hp.batch_size = 4;
  o.hp.lr_g = o.hp.lr_c = 0.05;
  o.eval_every = 50;
  const TrainResult a = train(c.speech, c.text, c.speech, o);
  const TrainResult b = train(c.speech, c.text, c.speech, o);
  REQUIRE(a.log.size() == 100);
  std::ostringstream sa, sb;
  for (const auto& m : a.log) write_metrics_row(sa, m);
  for (const auto& m : b.log) write_metrics_row(sb, m);
  CHECK(sa.str() == sb.str());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].loss_c == b.log[i].loss_c);
    CHECK(a.log[i].loss_g == b.log[i].loss_g);
  }
  CHECK(a.selected.equals(b.selected));
  CHECK(a.history.size() == 2);
}

TEST_CASE("metrics csv header") {
  std::ostringstream out;
  write_metrics_header(out);
  CHECK(out.str() == "step,loss_c,loss_g,l_gp,l_sp,l_pd,l_ss,usage_entropy\n");
}
