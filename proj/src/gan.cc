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

#include "uasb/gan.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "uasb/errors.h"

namespace uasb::gan {
namespace {

constexpr float kProbLo = 1e-6f;
constexpr float kProbHi = 1.0f - 1e-6f;

std::string layer_name(const char* prefix, std::size_t i, const char* what) {
  return std::string(prefix) + ".layer" + std::to_string(i) + "." + what;
}

void check_finite(const char* term, double value, std::size_t step) {
  if (!std::isfinite(value)) {
    throw NumericError("non-finite " + std::string(term) + " (" + std::to_string(value) +
                       ") at step " + std::to_string(step));
  }
}

// -log C(fake), or log(1 - C(fake)) in the literal form.
Tensor generator_adv(Tape& tape, const Tensor& c_fake, bool literal) {
  Tensor cf = clamp(tape, c_fake, kProbLo, kProbHi);
  if (literal) return log(tape, affine(tape, cf, -1.0f, 1.0f));
  return affine(tape, log(tape, cf), -1.0f, 0.0f);
}

Tensor real_term(Tape& tape, const Tensor& c_real) {
  return affine(tape, log(tape, clamp(tape, c_real, kProbLo, kProbHi)), -1.0f, 0.0f);
}

Tensor fake_term(Tape& tape, const Tensor& c_fake) {
  Tensor cf = clamp(tape, c_fake, kProbLo, kProbHi);
  return affine(tape, log(tape, affine(tape, cf, -1.0f, 1.0f)), -1.0f, 0.0f);
}

Tensor weighted(Tape& tape, const Tensor& t, double w) {
  return affine(tape, t, static_cast<float>(w), 0.0f);
}

Tensor accumulate(Tape& tape, const Tensor& acc, const Tensor& t) {
  return acc.defined() ? add(tape, acc, t) : t;
}

void update(Parameters& params, std::shared_ptr<Adam>& opt, double lr, bool adam) {
  if (!adam) {
    sgd_step(params, static_cast<float>(lr));
    return;
  }
  if (!opt) opt = std::make_shared<Adam>(static_cast<float>(lr), 0.5f, 0.98f);
  opt->step(params);
}

}  // namespace

void GanHyperparams::validate() const {
  for (double w : {lambda_gp, gamma_sp, eta_pd, delta_ss, lr_g, lr_c}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights and learning rates must be finite and >= 0");
  }
  if (!(label_smooth_eps >= 0.0 && label_smooth_eps < 1.0))
    throw ConfigError("label_smooth_eps must lie in [0, 1)");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
}

Parameters init_generator(const GeneratorConfig& cfg, Rng& rng) {
  if (cfg.layers == 0 || cfg.stride == 0 || cfg.kernel_width == 0 || cfg.vocab_size == 0 ||
      cfg.input_dim == 0) {
    throw ConfigError("generator: layers, stride, kernel_width, vocab_size, input_dim must be >= 1");
  }
  Parameters p;
  std::size_t din = cfg.input_dim;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::size_t dout = l + 1 == cfg.layers ? cfg.vocab_size : cfg.hidden_dim;
    p.add(layer_name("gen", l, "kernel"),
          uniform_init({cfg.kernel_width, din, dout}, cfg.kernel_width * din, rng));
    p.add(layer_name("gen", l, "bias"), Tensor::zeros({dout}));
    din = dout;
  }
  return p;
}

Parameters init_discriminator(const DiscriminatorConfig& cfg, Rng& rng) {
  if (cfg.vocab_size == 0 || cfg.kernel_width == 0 || (cfg.layers > 0 && cfg.channels == 0))
    throw ConfigError("discriminator: vocab_size, kernel_width, channels must be >= 1");
  Parameters p;
  std::size_t din = cfg.vocab_size;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    p.add(layer_name("disc", l, "kernel"),
          uniform_init({cfg.kernel_width, din, cfg.channels}, cfg.kernel_width * din, rng));
    p.add(layer_name("disc", l, "bias"), Tensor::zeros({cfg.channels}));
    din = cfg.channels;
  }
  p.add("disc.head.weight", uniform_init({din, 1}, din, rng));
  p.add("disc.head.bias", Tensor::zeros({1}));
  return p;
}

Parameters init_aux_head(const GeneratorConfig& cfg, std::size_t clusters, Rng& rng) {
  const std::size_t hidden = cfg.layers > 1 ? cfg.hidden_dim : cfg.vocab_size;
  Parameters p;
  p.add("gen.aux.weight", uniform_init({hidden, clusters}, hidden, rng));
  p.add("gen.aux.bias", Tensor::zeros({clusters}));
  return p;
}

GeneratorOutput generator_apply(Tape& tape, const GeneratorConfig& cfg, const Parameters& params,
                                const Tensor& frames) {
  if (frames.rank() != 2 || frames.rows() == 0)
    throw ShapeError("generator: expected a non-empty [T x d] input, got " + shape_str(frames.shape()));
  if (frames.cols() != cfg.input_dim)
    throw ShapeError("generator: feature dim " + std::to_string(frames.cols()) + " != " +
                     std::to_string(cfg.input_dim));
  GeneratorOutput out;
  Tensor h = frames;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    h = conv1d(tape, h, params.get(layer_name("gen", l, "kernel")), l == 0 ? cfg.stride : 1);
    h = add(tape, h, params.get(layer_name("gen", l, "bias")));
    if (l + 1 < cfg.layers) {
      h = relu(tape, h);
      out.hidden = h;
    }
  }
  out.logits = h;
  if (!out.hidden.defined()) out.hidden = h;
  out.probs = softmax(tape, h);
  return out;
}

Posteriorgram generator_forward(const GeneratorConfig& cfg, const Parameters& params,
                                const FeatureSequence& h) {
  if (h.length() == 0) throw ShapeError("generator_forward: empty sequence '" + h.id + "'");
  Tape tape;
  const GeneratorOutput out = generator_apply(tape, cfg, params, h.tensor());
  Posteriorgram p;
  p.id = h.id;
  p.vocab = cfg.vocab_size;
  p.stride = cfg.stride;
  p.probs.assign(out.probs.data().begin(), out.probs.data().end());
  return p;
}

namespace {

struct DiscForward {
  Tensor prob;
  std::vector<Tensor> pre;  // pre-activations per conv block
};

DiscForward disc_forward(Tape& tape, const DiscriminatorConfig& cfg, const Parameters& params,
                         const Tensor& seq) {
  if (seq.rank() != 2 || seq.rows() == 0 || seq.cols() != cfg.vocab_size)
    throw ShapeError("discriminator: expected [T x " + std::to_string(cfg.vocab_size) + "], got " +
                     shape_str(seq.shape()));
  DiscForward f;
  Tensor z = seq;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    Tensor a = add(tape, conv1d(tape, z, params.get(layer_name("disc", l, "kernel")), 1),
                   params.get(layer_name("disc", l, "bias")));
    f.pre.push_back(a);
    z = relu(tape, a);
  }
  Tensor logit = add(tape, matmul(tape, mean_rows(tape, z), params.get("disc.head.weight")),
                     params.get("disc.head.bias"));
  f.prob = sigmoid(tape, reshape(tape, logit, {}));
  return f;
}

}  // namespace

Tensor discriminator_apply(Tape& tape, const DiscriminatorConfig& cfg, const Parameters& params,
                           const Tensor& seq) {
  return disc_forward(tape, cfg, params, seq).prob;
}

Tensor discriminator_input_grad_sq(Tape& tape, const DiscriminatorConfig& cfg,
                                   const Parameters& params, const Tensor& x) {
  const DiscForward f = disc_forward(tape, cfg, params, x);
  const std::size_t T = x.rows();
  const Tensor& w = params.get("disc.head.weight");
  // d logit / d z_L: every row is w^T / T.
  Tensor g = repeat_rows(tape, affine(tape, reshape(tape, w, {1, w.rows()}),
                                      1.0f / static_cast<float>(T), 0.0f), T);
  for (std::size_t l = cfg.layers; l-- > 0;) {
    // relu' is piecewise constant, so the mask carries no gradient.
    std::vector<float> mask(f.pre[l].size());
    const auto a = f.pre[l].data();
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = a[i] > 0.0f ? 1.0f : 0.0f;
    g = mul(tape, g, Tensor(f.pre[l].shape(), std::move(mask)));
    g = conv1d_input_grad(tape, g, params.get(layer_name("disc", l, "kernel")), T, 1);
  }
  Tensor sq = sum(tape, mul(tape, g, g));
  Tensor dsig = mul(tape, f.prob, affine(tape, f.prob, -1.0f, 1.0f));
  return scale_by(tape, sq, mul(tape, dsig, dsig));
}

AdversarialLosses adversarial_losses(Tape& tape, const Tensor& c_real, const Tensor& c_fake,
                                     bool literal_generator_loss) {
  return {add(tape, real_term(tape, c_real), fake_term(tape, c_fake)),
          generator_adv(tape, c_fake, literal_generator_loss)};
}

Tensor gradient_penalty(Tape& tape, const DiscriminatorConfig& cfg, const Parameters& params,
                        const Tensor& real, const Tensor& fake, Rng& rng) {
  if (real.rank() != 2 || fake.rank() != 2 || real.cols() != fake.cols())
    throw ShapeError("gradient_penalty: incompatible " + shape_str(real.shape()) + " and " +
                     shape_str(fake.shape()));
  Tensor r = real;
  Tensor f = fake;
  if (r.rows() != f.rows()) {
    Tensor& longer = r.rows() > f.rows() ? r : f;
    const std::size_t n = std::min(r.rows(), f.rows());
    std::uniform_int_distribution<std::size_t> off(0, longer.rows() - n);
    longer = slice_rows(tape, longer, off(rng), n);
  }
  const float alpha = std::uniform_real_distribution<float>(0.0f, 1.0f)(rng);
  Tensor x = add(tape, affine(tape, r, alpha, 0.0f), affine(tape, f, 1.0f - alpha, 0.0f));
  return discriminator_input_grad_sq(tape, cfg, params, x);
}

Tensor smoothness_penalty(Tape& tape, const Tensor& probs) {
  if (probs.rank() != 2 || probs.rows() == 0)
    throw ShapeError("smoothness_penalty: expected non-empty [T x V], got " + shape_str(probs.shape()));
  const std::size_t T = probs.rows();
  if (T == 1) return Tensor::scalar(0.0f);
  Tensor d = sub(tape, slice_rows(tape, probs, 0, T - 1), slice_rows(tape, probs, 1, T - 1));
  return sum(tape, mul(tape, d, d));
}

Tensor merge_runs(Tape& tape, const Tensor& probs) {
  if (probs.rank() != 2 || probs.rows() == 0)
    throw ShapeError("merge_runs: expected non-empty [T x V], got " + shape_str(probs.shape()));
  const std::size_t T = probs.rows(), V = probs.cols();
  std::vector<std::size_t> starts;
  int prev = -1;
  for (std::size_t t = 0; t < T; ++t) {
    const float* row = probs.data().data() + t * V;
    const int a = static_cast<int>(std::max_element(row, row + V) - row);
    if (a != prev) starts.push_back(t);
    prev = a;
  }
  if (starts.size() == T) return probs;
  starts.push_back(T);
  const std::size_t S = starts.size() - 1;
  std::vector<float> pool(S * T, 0.0f);
  for (std::size_t s = 0; s < S; ++s) {
    const float inv = 1.0f / static_cast<float>(starts[s + 1] - starts[s]);
    for (std::size_t t = starts[s]; t < starts[s + 1]; ++t) pool[s * T + t] = inv;
  }
  return matmul(tape, Tensor({S, T}, std::move(pool)), probs);
}

Tensor diversity_loss(Tape& tape, std::span<const Tensor> batch_probs) {
  if (batch_probs.empty()) throw ShapeError("diversity_loss: empty batch");
  Tensor acc;
  std::size_t rows = 0;
  for (const Tensor& p : batch_probs) {
    acc = accumulate(tape, acc, affine(tape, mean_rows(tape, p), static_cast<float>(p.rows()), 0.0f));
    rows += p.rows();
  }
  Tensor pbar = affine(tape, acc, 1.0f / static_cast<float>(rows), 0.0f);
  // The clamp only guards log(0); 0 * log(tiny) is still 0.
  return sum(tape, mul(tape, pbar, log(tape, clamp(tape, pbar, 1e-30f, 2.0f))));
}

Tensor aux_cluster_loss(Tape& tape, const Tensor& hidden, std::span<const int> cluster_ids,
                        const Parameters& head) {
  if (hidden.rank() != 2 || hidden.rows() != cluster_ids.size())
    throw ShapeError("aux_cluster_loss: " + std::to_string(cluster_ids.size()) +
                     " ids for hidden states " + shape_str(hidden.shape()));
  Tensor logits = add(tape, matmul(tape, hidden, head.get("gen.aux.weight")), head.get("gen.aux.bias"));
  return nll_loss(tape, log_softmax(tape, logits), cluster_ids);
}

std::vector<int> downsample_ids(std::span<const int> ids, std::size_t stride) {
  if (stride == 0) throw ShapeError("downsample_ids: stride 0");
  std::vector<int> out;
  for (std::size_t t = 0; t < ids.size(); t += stride) out.push_back(ids[t]);
  return out;
}

Tensor smoothed_one_hot(std::span<const int> tokens, std::size_t vocab, double eps) {
  if (tokens.empty()) throw ShapeError("smoothed_one_hot: empty sequence");
  const float off = vocab > 1 ? static_cast<float>(eps / static_cast<double>(vocab - 1)) : 0.0f;
  const float on = vocab > 1 ? static_cast<float>(1.0 - eps) : 1.0f;
  std::vector<float> v(tokens.size() * vocab, off);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] < 0 || static_cast<std::size_t>(tokens[t]) >= vocab)
      throw ShapeError("smoothed_one_hot: token " + std::to_string(tokens[t]) + " outside vocabulary");
    v[t * vocab + static_cast<std::size_t>(tokens[t])] = on;
  }
  return Tensor({tokens.size(), vocab}, std::move(v));
}

double usage_entropy(std::span<const int> tokens, std::size_t vocab) {
  if (tokens.empty()) return 0.0;
  std::vector<double> counts(vocab, 0.0);
  for (int t : tokens) counts.at(static_cast<std::size_t>(t)) += 1.0;
  double h = 0.0;
  for (double c : counts) {
    if (c == 0.0) continue;
    const double p = c / static_cast<double>(tokens.size());
    h -= p * std::log(p);
  }
  return h;
}

GanState GanState::clone() const {
  GanState c{gen_cfg, disc_cfg, gen.clone(), disc.clone(), aux.clone(), rng, step, nullptr, nullptr, nullptr};
  if (gen_opt) c.gen_opt = std::make_shared<Adam>(*gen_opt);
  if (disc_opt) c.disc_opt = std::make_shared<Adam>(*disc_opt);
  if (aux_opt) c.aux_opt = std::make_shared<Adam>(*aux_opt);
  return c;
}

GanState init_state(const GeneratorConfig& gen_cfg, const DiscriminatorConfig& disc_cfg,
                    std::size_t aux_clusters, std::uint64_t seed) {
  if (gen_cfg.vocab_size != disc_cfg.vocab_size)
    throw ConfigError("generator and discriminator vocabulary sizes differ");
  GanState s{gen_cfg, disc_cfg, {}, {}, {}, Rng(seed), 0, nullptr, nullptr, nullptr};
  Rng init(derive_seed(seed, 0x9e3779b9ULL));
  s.gen = init_generator(gen_cfg, init);
  s.disc = init_discriminator(disc_cfg, init);
  if (aux_clusters > 0) s.aux = init_aux_head(gen_cfg, aux_clusters, init);
  return s;
}

GeneratorTerms generator_objective(Tape& tape, const GanState& state, const Batch& batch,
                                   const GanHyperparams& hp) {
  if (batch.speech.empty()) throw ShapeError("generator_objective: empty speech batch");
  const bool use_aux = hp.delta_ss > 0.0 && state.aux.size() > 0;
  if (use_aux && batch.aux_ids.size() != batch.speech.size())
    throw ShapeError("generator_objective: aux ids missing for the speech batch");

  GeneratorTerms terms;
  std::vector<Tensor> probs;
  std::vector<int> argmax;
  Tensor adv, sp, ss;
  std::size_t transitions = 0;
  const std::size_t V = state.gen_cfg.vocab_size;
  for (std::size_t i = 0; i < batch.speech.size(); ++i) {
    const FeatureSequence& h = *batch.speech[i];
    const GeneratorOutput out = generator_apply(tape, state.gen_cfg, state.gen, h.tensor());
    probs.push_back(out.probs);
    const Tensor seen = hp.merge_runs ? merge_runs(tape, out.probs) : out.probs;
    adv = accumulate(tape, adv, generator_adv(tape, discriminator_apply(tape, state.disc_cfg, state.disc, seen),
                                               hp.literal_generator_loss));
    sp = accumulate(tape, sp, smoothness_penalty(tape, out.probs));
    transitions += out.probs.rows() - 1;
    if (use_aux) {
      const std::vector<int> ids = downsample_ids(*batch.aux_ids[i], state.gen_cfg.stride);
      ss = accumulate(tape, ss, aux_cluster_loss(tape, out.hidden, ids, state.aux));
    }
    const auto p = out.probs.data();
    for (std::size_t t = 0; t < out.probs.rows(); ++t) {
      const float* row = p.data() + t * V;
      double total = 0.0;
      for (std::size_t v = 0; v < V; ++v) total += row[v];
      if (!(std::fabs(total - 1.0) <= 1e-5)) terms.all_rows_stochastic = false;
      argmax.push_back(static_cast<int>(std::max_element(row, row + V) - row));
    }
  }
  const float inv_b = 1.0f / static_cast<float>(batch.speech.size());
  terms.adv = affine(tape, adv, inv_b, 0.0f);
  terms.sp = transitions > 0 ? affine(tape, sp, 1.0f / static_cast<float>(transitions), 0.0f)
                             : Tensor::scalar(0.0f);
  terms.pd = diversity_loss(tape, probs);
  terms.ss = use_aux ? affine(tape, ss, inv_b, 0.0f) : Tensor::scalar(0.0f);
  terms.usage_entropy = usage_entropy(argmax, V);

  Tensor total = terms.adv;
  if (hp.gamma_sp != 0.0) total = add(tape, total, weighted(tape, terms.sp, hp.gamma_sp));
  if (hp.eta_pd != 0.0) total = add(tape, total, weighted(tape, terms.pd, hp.eta_pd));
  if (use_aux) total = add(tape, total, weighted(tape, terms.ss, hp.delta_ss));
  terms.total = total;
  return terms;
}

StepMetrics train_step(GanState& state, const Batch& batch, const GanHyperparams& hp) {
  hp.validate();
  if (batch.speech.empty() || batch.text.empty()) throw ShapeError("train_step: empty batch");
  StepMetrics m;
  m.step = state.step;
  const std::size_t V = state.gen_cfg.vocab_size;

  // Discriminator update on detached generator outputs.
  std::vector<Tensor> fakes;
  state.gen.set_requires_grad(false);
  for (const FeatureSequence* h : batch.speech) {
    Tape scratch;
    Tensor probs = generator_apply(scratch, state.gen_cfg, state.gen, h->tensor()).probs;
    fakes.push_back((hp.merge_runs ? merge_runs(scratch, probs) : probs).detach());
  }
  state.gen.set_requires_grad(true);
  {
    Tape tape;
    Tensor real_sum, fake_sum, gp_sum;
    std::vector<Tensor> reals;
    for (const PhonemeSequence* y : batch.text) {
      reals.push_back(smoothed_one_hot(y->tokens, V, hp.label_smooth_eps));
      real_sum = accumulate(tape, real_sum,
                            real_term(tape, discriminator_apply(tape, state.disc_cfg, state.disc, reals.back())));
    }
    for (const Tensor& f : fakes)
      fake_sum = accumulate(tape, fake_sum,
                            fake_term(tape, discriminator_apply(tape, state.disc_cfg, state.disc, f)));
    const std::size_t pairs = std::min(reals.size(), fakes.size());
    for (std::size_t i = 0; i < pairs; ++i)
      gp_sum = accumulate(tape, gp_sum,
                          gradient_penalty(tape, state.disc_cfg, state.disc, reals[i], fakes[i], state.rng));
    Tensor loss_c = add(tape, affine(tape, real_sum, 1.0f / static_cast<float>(reals.size()), 0.0f),
                        affine(tape, fake_sum, 1.0f / static_cast<float>(fakes.size()), 0.0f));
    Tensor l_gp = affine(tape, gp_sum, 1.0f / static_cast<float>(pairs), 0.0f);
    m.loss_c = loss_c.item();
    m.l_gp = l_gp.item();
    check_finite("loss_c", m.loss_c, state.step + 1);
    check_finite("l_gp", m.l_gp, state.step + 1);
    Tensor objective = hp.lambda_gp != 0.0 ? add(tape, loss_c, weighted(tape, l_gp, hp.lambda_gp)) : loss_c;
    m.disc_objective = objective.item();
    state.disc.zero_grad();
    if (objective.requires_grad()) tape.backward(objective);
    update(state.disc, state.disc_opt, hp.lr_c, hp.adam);
    state.disc.zero_grad();
  }

  // Generator update against the freshly updated discriminator.
  state.disc.set_requires_grad(false);
  {
    Tape tape;
    GeneratorTerms terms;
    try {
      terms = generator_objective(tape, state, batch, hp);
    } catch (...) {
      state.disc.set_requires_grad(true);
      throw;
    }
    state.disc.set_requires_grad(true);
    m.loss_g = terms.adv.item();
    m.l_sp = terms.sp.item();
    m.l_pd = terms.pd.item();
    m.l_ss = terms.ss.item();
    m.usage_entropy = terms.usage_entropy;
    m.gen_objective = terms.total.item();
    check_finite("loss_g", m.loss_g, state.step + 1);
    check_finite("l_sp", m.l_sp, state.step + 1);
    check_finite("l_pd", m.l_pd, state.step + 1);
    check_finite("l_ss", m.l_ss, state.step + 1);
    if (!terms.all_rows_stochastic)
      throw NumericError("generator posteriors not row-stochastic at step " + std::to_string(state.step + 1));
    state.gen.zero_grad();
    state.aux.zero_grad();
    if (terms.total.requires_grad()) tape.backward(terms.total);
    update(state.gen, state.gen_opt, hp.lr_g, hp.adam);
    update(state.aux, state.aux_opt, hp.lr_g, hp.adam);
    state.gen.zero_grad();
    state.aux.zero_grad();
  }
  ++state.step;
  return m;
}

double checkpoint_score(const std::vector<std::vector<int>>& decoded, const BigramLm& lm) {
  double log_prob = 0.0;
  std::size_t tokens = 0;
  std::vector<int> all;
  for (const auto& seq : decoded) {
    if (seq.empty()) continue;
    const eval::LogProb lp = eval::bigram_log_prob(seq, lm);
    log_prob += lp.log_prob;
    tokens += lp.tokens;
    all.insert(all.end(), seq.begin(), seq.end());
  }
  if (tokens == 0) return std::numeric_limits<double>::infinity();
  const double ppl = std::exp(-log_prob / static_cast<double>(tokens));
  return ppl * std::exp(-usage_entropy(all, lm.vocab_size));
}

std::size_t select_checkpoint(const std::vector<CheckpointRecord>& history, const BigramLm& lm) {
  if (history.empty()) throw std::invalid_argument("select_checkpoint: empty history");
  auto is_degenerate = [&](const CheckpointRecord& r) {
    std::vector<int> all;
    for (const auto& s : r.decoded) all.insert(all.end(), s.begin(), s.end());
    return usage_entropy(all, lm.vocab_size) == 0.0;
  };
  bool any_healthy = false;
  for (const auto& r : history) any_healthy = any_healthy || !is_degenerate(r);
  std::size_t best = history.front().step;
  double best_score = std::numeric_limits<double>::infinity();
  bool found = false;
  for (const auto& r : history) {
    if (any_healthy && is_degenerate(r)) continue;
    const double s = checkpoint_score(r.decoded, lm);
    if (!found || s < best_score) {
      best = r.step;
      best_score = s;
      found = true;
    }
  }
  return best;
}

std::vector<std::vector<int>> decode_all(const GeneratorConfig& cfg, const Parameters& params,
                                         const std::vector<FeatureSequence>& speech,
                                         int silence_id) {
  std::vector<std::vector<int>> out;
  out.reserve(speech.size());
  for (const auto& h : speech)
    out.push_back(eval::decode_collapse(generator_forward(cfg, params, h), silence_id).tokens);
  return out;
}

TrainResult train(const std::vector<FeatureSequence>& speech,
                  const std::vector<PhonemeSequence>& text,
                  const std::vector<FeatureSequence>& validation, const TrainOptions& options,
                  const std::vector<std::vector<int>>& aux_ids, const StepCallback& on_step) {
  const GanHyperparams& hp = options.hp;
  hp.validate();
  if (speech.empty() || text.empty()) throw ConfigError("train: speech and text corpora must be non-empty");
  if (options.aux_clusters > 0 && aux_ids.size() != speech.size())
    throw ConfigError("train: aux cluster ids must cover every speech item");
  if (options.eval_every == 0) throw ConfigError("train: eval_every must be >= 1");

  std::vector<std::vector<int>> sentences;
  sentences.reserve(text.size());
  for (const auto& y : text) sentences.push_back(y.tokens);
  const BigramLm lm = BigramLm::estimate(sentences, options.gen.vocab_size, 1.0);

  TrainResult r{init_state(options.gen, options.disc, options.aux_clusters, hp.seed), {}, {}, {}, 0, {}};
  GanState& s = r.state;
  const std::size_t B = std::min({hp.batch_size, speech.size(), text.size()});
  std::vector<std::size_t> sidx(speech.size()), tidx(text.size());
  Batch batch;
  for (std::size_t step = 1; step <= hp.steps; ++step) {
    // Partial Fisher-Yates: B distinct items from each corpus.
    auto draw = [&](std::vector<std::size_t>& idx) {
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      for (std::size_t i = 0; i < B; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(s.rng)]);
      }
    };
    draw(sidx);
    draw(tidx);
    batch.speech.clear();
    batch.text.clear();
    batch.aux_ids.clear();
    for (std::size_t i = 0; i < B; ++i) {
      batch.speech.push_back(&speech[sidx[i]]);
      batch.text.push_back(&text[tidx[i]]);
      if (options.aux_clusters > 0) batch.aux_ids.push_back(&aux_ids[sidx[i]]);
    }
    StepMetrics m = train_step(s, batch, hp);
    m.step = step;
    r.log.push_back(m);
    if (on_step) on_step(m);
    if (step % options.eval_every == 0 || step == hp.steps) {
      r.history.push_back({step, m, decode_all(s.gen_cfg, s.gen, validation, options.silence_id)});
      r.snapshots.push_back(s.gen.clone());
    }
  }
  if (r.history.empty()) {
    r.history.push_back({0, {}, decode_all(s.gen_cfg, s.gen, validation, options.silence_id)});
    r.snapshots.push_back(s.gen.clone());
  }
  r.selected_step = select_checkpoint(r.history, lm);
  for (std::size_t i = 0; i < r.history.size(); ++i)
    if (r.history[i].step == r.selected_step) r.selected = r.snapshots[i].clone();
  return r;
}

Parameters train_supervised(const GeneratorConfig& cfg, const std::vector<FeatureSequence>& speech,
                            const SupervisedOptions& options) {
  if (speech.empty()) throw ConfigError("train_supervised: empty corpus");
  Rng rng(options.seed);
  Parameters params = init_generator(cfg, rng);
  std::vector<std::vector<int>> targets;
  for (const auto& h : speech) {
    if (h.gold_alignment.size() != h.length())
      throw ConfigError("train_supervised: '" + h.id + "' has no gold alignment");
    std::vector<int> gold(h.gold_alignment.begin(), h.gold_alignment.end());
    targets.push_back(downsample_ids(gold, cfg.stride));
  }
  const std::size_t B = std::min(options.batch_size, speech.size());
  std::uniform_int_distribution<std::size_t> pick(0, speech.size() - 1);
  for (std::size_t step = 0; step < options.steps; ++step) {
    Tape tape;
    Tensor loss;
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t i = pick(rng);
      const GeneratorOutput out = generator_apply(tape, cfg, params, speech[i].tensor());
      loss = accumulate(tape, loss, nll_loss(tape, log_softmax(tape, out.logits), targets[i]));
    }
    loss = affine(tape, loss, 1.0f / static_cast<float>(B), 0.0f);
    check_finite("supervised loss", loss.item(), step);
    params.zero_grad();
    tape.backward(loss);
    sgd_step(params, static_cast<float>(options.lr));
  }
  params.zero_grad();
  return params;
}

void write_metrics_header(std::ostream& out) {
  out << "step,loss_c,loss_g,l_gp,l_sp,l_pd,l_ss,usage_entropy\n";
}

void write_metrics_row(std::ostream& out, const StepMetrics& m) {
  std::ostringstream row;
  row.precision(9);
  row << m.step << ',' << m.loss_c << ',' << m.loss_g << ',' << m.l_gp << ',' << m.l_sp << ','
      << m.l_pd << ',' << m.l_ss << ',' << m.usage_entropy << '\n';
  out << row.str();
}

}  // namespace uasb::gan
