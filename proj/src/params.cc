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

#include "uasb/params.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uasb {

Tensor& Parameters::add(std::string name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  value.set_requires_grad(true);
  entries_.emplace_back(std::move(name), std::move(value));
  return entries_.back().second;
}

bool Parameters::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == name; });
}

const Tensor& Parameters::get(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.first == name) return e.second;
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

Tensor& Parameters::get(std::string_view name) {
  return const_cast<Tensor&>(static_cast<const Parameters*>(this)->get(name));
}

void Parameters::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

void Parameters::set_requires_grad(bool flag) {
  for (auto& e : entries_) e.second.set_requires_grad(flag);
}

Parameters Parameters::clone() const {
  Parameters p;
  for (const auto& e : entries_) {
    Tensor t = e.second.detach();
    t.set_requires_grad(e.second.requires_grad());
    p.entries_.emplace_back(e.first, std::move(t));
  }
  return p;
}

bool Parameters::equals(const Parameters& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.first != b.first || a.second.shape() != b.second.shape()) return false;
    if (!std::equal(a.second.data().begin(), a.second.data().end(), b.second.data().begin()))
      return false;
  }
  return true;
}

std::size_t Parameters::count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

void sgd_step(Parameters& params, float lr) {
  for (auto& [name, t] : params) {
    if (!t.has_grad()) continue;
    auto d = t.mutable_data();
    const auto g = t.grad();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= lr * g[i];
  }
}

void Adam::step(Parameters& params) {
  if (m_.empty()) {
    for (const auto& e : params) {
      m_.emplace_back(e.second.size(), 0.0f);
      v_.emplace_back(e.second.size(), 0.0f);
    }
  }
  ++t_;
  const float c1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
  const float c2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
  std::size_t k = 0;
  for (auto& [name, t] : params) {
    auto& m = m_[k];
    auto& v = v_[k];
    ++k;
    if (!t.has_grad()) continue;
    auto d = t.mutable_data();
    const auto g = t.grad();
    for (std::size_t i = 0; i < d.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0f - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0f - beta2_) * g[i] * g[i];
      d[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<float> u(-bound, bound);
  std::vector<float> v(shape_size(shape));
  for (float& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace uasb
