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
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace uasb {

// Extents, outermost first. Rank 0 (empty) is a scalar.
using Shape = std::vector<std::size_t>;

// Every stochastic component draws from one of these, seeded explicitly.
using Rng = std::mt19937_64;

std::string shape_str(const Shape& shape);
std::size_t shape_size(const Shape& shape);

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  const void* producer = nullptr;  // tape that recorded the op creating it
};
}  // namespace detail

// Dense row-major float tensor of rank <= 3. Copies share storage (handle
// semantics); use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t size() const { return impl_->data.size(); }
  // Extent of the last axis (1 for scalars).
  std::size_t cols() const;
  // Product of all but the last axis.
  std::size_t rows() const;

  std::span<const float> data() const { return impl_->data; }
  // Direct write access. Intended for construction and optimizer updates,
  // never for values already consumed by a recorded operation.
  std::span<float> mutable_data() { return impl_->data; }
  float item() const;
  float at(std::size_t r, std::size_t c) const {
    return impl_->data[r * cols() + c];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag) { impl_->requires_grad = flag; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const float> grad() const { return impl_->grad; }
  // Gradient storage, allocated (zero-filled) on first use.
  std::span<float> grad_buffer();
  void zero_grad() { impl_->grad.clear(); }

  Tensor clone() const;
  // Same values, no gradient tracking.
  Tensor detach() const { return Tensor(shape(), impl_->data, false); }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  friend class Tape;
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Records operations in execution order and replays their backward rules in
// exact reverse order. Operations whose inputs need no gradient are not
// recorded at all.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Marks `output` as requiring grad iff any input does, and if so stores
  // the backward rule. Returns whether the op was recorded.
  bool record(std::initializer_list<Tensor> inputs, Tensor& output,
              BackwardFn backward);
  bool record(const std::vector<Tensor>& inputs, Tensor& output,
              BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded rule in reverse.
  // Rejects non-scalar losses and losses produced elsewhere.
  void backward(const Tensor& loss);

  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
};

// ---------------------------------------------------------------------------
// Differentiable operations. Each takes the tape to record on.

// a[m x k] * b[k x n]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

// Cross-correlation along time with "same-ceil" zero padding: left pad
// floor((w-1)/2), output length ceil(T/stride).
// x: [T x d_in], kernel: [w x d_in x d_out] -> [ceil(T/stride) x d_out]
Tensor conv1d(Tape& tape, const Tensor& x, const Tensor& kernel,
              std::size_t stride);

// Gradient of sum(conv1d(x, kernel) * g) with respect to x, as a function of
// (g, kernel). Differentiable in both, which is what lets a gradient penalty
// be trained with first-order reverse mode.
Tensor conv1d_input_grad(Tape& tape, const Tensor& g, const Tensor& kernel,
                         std::size_t input_len, std::size_t stride);

// Elementwise. add() also broadcasts a rank-1 `b` over the last axis of `a`.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
// scale * a + shift
Tensor affine(Tape& tape, const Tensor& a, float scale, float shift);
// a * s for a one-element tensor s
Tensor scale_by(Tape& tape, const Tensor& a, const Tensor& s);
Tensor relu(Tape& tape, const Tensor& a);
Tensor log(Tape& tape, const Tensor& a);
Tensor exp(Tape& tape, const Tensor& a);
Tensor sigmoid(Tape& tape, const Tensor& a);
// Values clipped to [lo, hi]; gradient passes only strictly inside.
Tensor clamp(Tape& tape, const Tensor& a, float lo, float hi);

// Reductions to a scalar.
Tensor sum(Tape& tape, const Tensor& a);
Tensor mean(Tape& tape, const Tensor& a);
// [T x k] -> [1 x k]
Tensor mean_rows(Tape& tape, const Tensor& a);
// Any tensor of size k -> [n x k], every row a copy.
Tensor repeat_rows(Tape& tape, const Tensor& v, std::size_t n);
Tensor slice_rows(Tape& tape, const Tensor& a, std::size_t start,
                  std::size_t count);
Tensor reshape(Tape& tape, const Tensor& a, Shape shape);

// Over the last axis, with max subtraction.
Tensor softmax(Tape& tape, const Tensor& a);
Tensor log_softmax(Tape& tape, const Tensor& a);
// softmax((logits + g) / temperature), g ~ Gumbel(0, 1) i.i.d.
Tensor gumbel_softmax(Tape& tape, const Tensor& logits, float temperature,
                      Rng& rng);

// Normalizes each row over the last axis, then gain * x_hat + bias.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain,
                  const Tensor& bias, float eps = 1e-5f);

// table: [V x e]; returns [ids.size() x e]
Tensor embedding(Tape& tape, const Tensor& table, std::span<const int> ids);

// Rank-2 tensors with equal row counts, joined along the feature axis.
Tensor concat_cols(Tape& tape, std::span<const Tensor> parts);

// -sum_t w_t * logp[t, target_t] / sum_t w_t. Empty weights means all ones.
Tensor nll_loss(Tape& tape, const Tensor& logp, std::span<const int> targets,
                std::span<const float> weights = {});

}  // namespace uasb
