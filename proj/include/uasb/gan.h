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

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "uasb/decode.h"
#include "uasb/params.h"
#include "uasb/posteriorgram.h"
#include "uasb/tensor.h"
#include "uasb/world.h"

namespace uasb::gan {

struct GeneratorConfig {
  std::size_t input_dim = 16;
  std::size_t hidden_dim = 64;
  std::size_t kernel_width = 3;
  std::size_t stride = 2;
  std::size_t vocab_size = 8;
  // 1: a single strided conv to logits. 2+: conv -> relu -> ... -> conv.
  std::size_t layers = 2;
};

struct DiscriminatorConfig {
  std::size_t vocab_size = 8;
  std::size_t channels = 64;
  std::size_t kernel_width = 5;
  // Number of conv+relu blocks before mean-pooling. 0 gives a linear
  // discriminator sigma(<w, mean_t x_t> + b).
  std::size_t layers = 2;
};

struct GanHyperparams {
  double lambda_gp = 1.5;
  double gamma_sp = 0.5;
  double eta_pd = 4.0;
  double delta_ss = 0.0;
  double lr_g = 5e-4;
  double lr_c = 5e-4;
  std::size_t steps = 5000;
  std::size_t batch_size = 32;
  double label_smooth_eps = 0.1;
  std::uint64_t seed = 1;
  // Literal log(1 - C(fake)) generator objective instead of -log C(fake).
  bool literal_generator_loss = false;
  // Mean-pool runs of equal argmax before the discriminator. The
  // posteriorgram itself stays frame-synchronous either way.
  bool merge_runs = true;
  // Plain SGD unless set; Adam uses lr_g / lr_c as its step sizes.
  bool adam = false;

  void validate() const;
};

// Parameter names: gen.layer<i>.{kernel,bias}, gen.aux.{weight,bias},
// disc.layer<i>.{kernel,bias}, disc.head.{weight,bias}.
Parameters init_generator(const GeneratorConfig& cfg, Rng& rng);
Parameters init_discriminator(const DiscriminatorConfig& cfg, Rng& rng);
// Linear head from the generator's hidden layer to `clusters` logits.
Parameters init_aux_head(const GeneratorConfig& cfg, std::size_t clusters, Rng& rng);

struct GeneratorOutput {
  Tensor hidden;  // last hidden activation (the logits for a 1-layer generator)
  Tensor logits;
  Tensor probs;
};

GeneratorOutput generator_apply(Tape& tape, const GeneratorConfig& cfg, const Parameters& params,
                                const Tensor& frames);
Posteriorgram generator_forward(const GeneratorConfig& cfg, const Parameters& params,
                                const FeatureSequence& h);

// C(x) as a scalar tensor in (0, 1).
Tensor discriminator_apply(Tape& tape, const DiscriminatorConfig& cfg, const Parameters& params,
                           const Tensor& seq);
// ||dC/dx||^2 summed over the sequence, differentiable in the parameters.
Tensor discriminator_input_grad_sq(Tape& tape, const DiscriminatorConfig& cfg,
                                   const Parameters& params, const Tensor& x);

struct AdversarialLosses {
  Tensor loss_c;
  Tensor loss_g;
};
AdversarialLosses adversarial_losses(Tape& tape, const Tensor& c_real, const Tensor& c_fake,
                                     bool literal_generator_loss = false);

// Random-crops the longer of real/fake to the shorter, draws alpha ~ U(0,1)
// and penalizes the squared input-gradient norm at the interpolate.
Tensor gradient_penalty(Tape& tape, const DiscriminatorConfig& cfg, const Parameters& params,
                        const Tensor& real, const Tensor& fake, Rng& rng);

Tensor smoothness_penalty(Tape& tape, const Tensor& probs);
// Collapses each maximal run of rows sharing an argmax into its mean row.
// Run boundaries are constants; the pooling is differentiable.
Tensor merge_runs(Tape& tape, const Tensor& probs);
// sum_v pbar_v log pbar_v, pbar averaged over every row of every item.
Tensor diversity_loss(Tape& tape, std::span<const Tensor> batch_probs);
Tensor aux_cluster_loss(Tape& tape, const Tensor& hidden, std::span<const int> cluster_ids,
                        const Parameters& head);

// Every `stride`-th id, aligned with the generator's output frames.
std::vector<int> downsample_ids(std::span<const int> ids, std::size_t stride);
// One-hot rows with eps spread evenly over the other V-1 entries.
Tensor smoothed_one_hot(std::span<const int> tokens, std::size_t vocab, double eps);
// Entropy (nats) of the histogram of `tokens` over [0, vocab).
double usage_entropy(std::span<const int> tokens, std::size_t vocab);

struct GanState {
  GeneratorConfig gen_cfg;
  DiscriminatorConfig disc_cfg;
  Parameters gen;
  Parameters disc;
  Parameters aux;  // empty unless the auxiliary cluster loss is used
  Rng rng;
  std::size_t step = 0;
  // Created on first use when hp.adam is set.
  std::shared_ptr<Adam> gen_opt, disc_opt, aux_opt;

  // Deep copy: parameters and optimizer moments get their own storage.
  GanState clone() const;
};

GanState init_state(const GeneratorConfig& gen_cfg, const DiscriminatorConfig& disc_cfg,
                    std::size_t aux_clusters, std::uint64_t seed);

struct StepMetrics {
  std::size_t step = 0;
  double loss_c = 0, loss_g = 0, l_gp = 0, l_sp = 0, l_pd = 0, l_ss = 0;
  double usage_entropy = 0;
  // Full weighted objectives actually minimized.
  double disc_objective = 0, gen_objective = 0;
};

struct Batch {
  std::vector<const FeatureSequence*> speech;
  std::vector<const PhonemeSequence*> text;
  // Per speech item, frame-rate cluster ids (only when the aux loss is on).
  std::vector<const std::vector<int>*> aux_ids;
};

struct GeneratorTerms {
  Tensor total, adv, sp, pd, ss;
  double usage_entropy = 0;
  bool all_rows_stochastic = true;
};
// The generator objective for the current discriminator; deterministic.
GeneratorTerms generator_objective(Tape& tape, const GanState& state, const Batch& batch,
                                   const GanHyperparams& hp);

// One discriminator SGD step, then one generator SGD step.
StepMetrics train_step(GanState& state, const Batch& batch, const GanHyperparams& hp);

struct CheckpointRecord {
  std::size_t step = 0;
  StepMetrics metrics;
  std::vector<std::vector<int>> decoded;
};
// Score = corpus perplexity x exp(-usage entropy); lower is better.
double checkpoint_score(const std::vector<std::vector<int>>& decoded, const BigramLm& lm);
// Step of the best-scoring checkpoint. Checkpoints with zero usage entropy
// are only chosen when every checkpoint is degenerate.
std::size_t select_checkpoint(const std::vector<CheckpointRecord>& history, const BigramLm& lm);

struct TrainOptions {
  GeneratorConfig gen;
  DiscriminatorConfig disc;
  GanHyperparams hp;
  std::size_t eval_every = 250;
  std::size_t aux_clusters = 0;
  // Dropped when decoding validation outputs; -1 for none.
  int silence_id = -1;
};

struct TrainResult {
  GanState state;
  std::vector<StepMetrics> log;
  std::vector<CheckpointRecord> history;
  std::vector<Parameters> snapshots;  // generator parameters, one per history entry
  std::size_t selected_step = 0;
  Parameters selected;
};

using StepCallback = std::function<void(const StepMetrics&)>;

// Full unsupervised run with periodic checkpointing on `validation` and
// unsupervised selection against an LM estimated from `text`.
TrainResult train(const std::vector<FeatureSequence>& speech,
                  const std::vector<PhonemeSequence>& text,
                  const std::vector<FeatureSequence>& validation, const TrainOptions& options,
                  const std::vector<std::vector<int>>& aux_ids = {},
                  const StepCallback& on_step = {});

std::vector<std::vector<int>> decode_all(const GeneratorConfig& cfg, const Parameters& params,
                                         const std::vector<FeatureSequence>& speech,
                                         int silence_id = -1);

// Paired-supervision ceiling: frame-wise cross-entropy against gold labels
// downsampled by the stride.
struct SupervisedOptions {
  std::size_t steps = 2000;
  std::size_t batch_size = 16;
  double lr = 0.5;
  std::uint64_t seed = 1;
};
Parameters train_supervised(const GeneratorConfig& cfg, const std::vector<FeatureSequence>& speech,
                            const SupervisedOptions& options);

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const StepMetrics& m);

}  // namespace uasb::gan
