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

// Central finite-difference oracle for the autodiff engine. The probe loss is
// a fixed random projection of the output, accumulated in double so the
// finite-difference side only carries float error from the forward pass.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "uasb/tensor.h"

namespace uasb::testing {

using Forward = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

inline Tensor random_tensor(Shape shape, Rng& rng, float lo = -1.0f,
                            float hi = 1.0f, bool requires_grad = true) {
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(shape_size(shape));
  for (float& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

// Pushes values away from zero so ReLU kinks stay outside the FD stencil.
inline Tensor away_from_zero(Tensor t, float margin = 0.05f) {
  for (float& x : t.mutable_data()) {
    if (std::fabs(x) < margin) x = x < 0 ? -margin - std::fabs(x) : margin + x;
  }
  return t;
}

inline double projected(const Tensor& y, const std::vector<double>& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += w[i] * y.data()[i];
  return acc;
}

// max over inputs of ||g_ad - g_fd||_inf / (||g_fd||_inf + 1e-8)
inline double gradcheck(const Forward& f, std::vector<Tensor> inputs,
                        std::uint64_t seed = 7, float h = 1e-3f) {
  Rng rng(seed);
  std::vector<double> w;
  {
    Tape probe;
    const Tensor y = f(probe, inputs);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    w.resize(y.size());
    for (double& x : w) x = u(rng);
  }
  for (Tensor& t : inputs) t.zero_grad();
  Tape tape;
  const Tensor y = f(tape, inputs);
  std::vector<float> wf(w.begin(), w.end());
  const Tensor wt(y.shape(), wf);
  const Tensor loss = sum(tape, mul(tape, y, wt));
  tape.backward(loss);

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor& x = inputs[k];
    if (!x.requires_grad()) continue;
    std::vector<double> fd(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const float orig = x.mutable_data()[i];
      x.mutable_data()[i] = orig + h;
      Tape tp;
      const double up = projected(f(tp, inputs), w);
      x.mutable_data()[i] = orig - h;
      Tape tm;
      const double down = projected(f(tm, inputs), w);
      x.mutable_data()[i] = orig;
      fd[i] = (up - down) / (2.0 * h);
    }
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double ad = x.has_grad() ? x.grad()[i] : 0.0;
      diff = std::max(diff, std::fabs(ad - fd[i]));
      scale = std::max(scale, std::fabs(fd[i]));
    }
    worst = std::max(worst, diff / (scale + 1e-8));
  }
  return worst;
}

}  // namespace uasb::testing
