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

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "uasb/tensor.h"

namespace uasb {

// Ordered, namespaced collection of trainable tensors ("gen.layer0.kernel",
// "text.embed", ...). Order is insertion order, which fixes the reduction
// and serialization order.
class Parameters {
 public:
  Tensor& add(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  const Tensor& get(std::string_view name) const;
  Tensor& get(std::string_view name);

  std::size_t size() const { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();
  void set_requires_grad(bool flag);
  // Deep copy (independent storage).
  Parameters clone() const;
  // Bitwise equality of names, shapes and values.
  bool equals(const Parameters& other) const;
  std::size_t count() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// p <- p - lr * grad, for every parameter with a gradient.
void sgd_step(Parameters& params, float lr);

class Adam {
 public:
  explicit Adam(float lr, float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(Parameters& params);

 private:
  float lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

// U(-1/sqrt(fan_in), 1/sqrt(fan_in))
Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng);

}  // namespace uasb
