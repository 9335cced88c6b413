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

#include "uasb/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "uasb/errors.h"
#include "uasb/kernels.h"

namespace uasb {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

Tensor::Tensor(Shape shape, std::vector<float> data, bool requires_grad) {
  if (shape.size() > 3) {
    throw ShapeError("tensor rank " + std::to_string(shape.size()) +
                     " exceeds 3");
  }
  if (shape_size(shape) != data.size()) {
    throw ShapeError("shape " + shape_str(shape) + " needs " +
                     std::to_string(shape_size(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<float>(n, value), requires_grad);
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

std::size_t Tensor::cols() const {
  return impl_->shape.empty() ? 1 : impl_->shape.back();
}

std::size_t Tensor::rows() const {
  const std::size_t c = cols();
  return c == 0 ? 0 : size() / c;
}

float Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  }
  return impl_->data[0];
}

std::span<float> Tensor::grad_buffer() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0f);
  return impl_->grad;
}

Tensor Tensor::clone() const {
  Tensor t(shape(), impl_->data, requires_grad());
  t.impl_->grad = impl_->grad;
  return t;
}

bool Tape::record(std::initializer_list<Tensor> inputs, Tensor& output,
                  BackwardFn backward) {
  return record(std::vector<Tensor>(inputs), output, std::move(backward));
}

bool Tape::record(const std::vector<Tensor>& inputs, Tensor& output,
                  BackwardFn backward) {
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  output.impl_->requires_grad = needs;
  if (!needs) return false;
  output.impl_->producer = this;
  entries_.push_back(Entry{inputs, output, std::move(backward)});
  return true;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : "<undefined>"));
  }
  if (loss.impl_->producer != this) {
    throw std::invalid_argument("backward(): loss was not produced on this tape");
  }
  Tensor seed = loss;
  seed.grad_buffer()[0] += 1.0f;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward();
  }
}

// ---------------------------------------------------------------------------

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op,
                  const char* arg) {
  if (!t.defined() || t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + arg + " must have rank " +
                     std::to_string(rank) + ", got " +
                     (t.defined() ? shape_str(t.shape()) : "<undefined>"));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// Adds src into t's gradient if t participates in differentiation.
void accumulate(Tensor t, std::span<const float> src) {
  if (!t.requires_grad()) return;
  std::span<float> g = t.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
}

std::size_t conv_out_len(std::size_t len, std::size_t stride) {
  return (len + stride - 1) / stride;
}

// y[t] += sum_k x[t*s + k - pad] * K[k]
void conv_forward(const float* x, const float* k, float* y, std::size_t len,
                  std::size_t din, std::size_t dout, std::size_t width,
                  std::size_t stride) {
  const std::size_t out_len = conv_out_len(len, stride);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((width - 1) / 2);
  for (std::size_t t = 0; t < out_len; ++t) {
    for (std::size_t tap = 0; tap < width; ++tap) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + tap) - pad;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
      kernels::gemm_nn(x + src * din, k + tap * din * dout, y + t * dout, 1,
                       din, dout);
    }
  }
}

// gx[t*s + k - pad] += g[t] * K[k]^T
void conv_backward_input(const float* g, const float* k, float* gx,
                         std::size_t len, std::size_t din, std::size_t dout,
                         std::size_t width, std::size_t stride) {
  const std::size_t out_len = conv_out_len(len, stride);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((width - 1) / 2);
  for (std::size_t t = 0; t < out_len; ++t) {
    for (std::size_t tap = 0; tap < width; ++tap) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + tap) - pad;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
      kernels::gemm_nt(g + t * dout, k + tap * din * dout, gx + src * din, 1,
                       dout, din);
    }
  }
}

// gK[k] += x[t*s + k - pad]^T g[t]
void conv_backward_kernel(const float* x, const float* g, float* gk,
                          std::size_t len, std::size_t din, std::size_t dout,
                          std::size_t width, std::size_t stride) {
  const std::size_t out_len = conv_out_len(len, stride);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((width - 1) / 2);
  for (std::size_t t = 0; t < out_len; ++t) {
    for (std::size_t tap = 0; tap < width; ++tap) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + tap) - pad;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
      kernels::gemm_tn(x + src * din, g + t * dout, gk + tap * din * dout, 1,
                       din, dout);
    }
  }
}

void softmax_rows(const float* in, float* out, std::size_t rows,
                  std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float* x = in + r * cols;
    float* y = out + r * cols;
    const float mx = *std::max_element(x, x + cols);
    float z = 0.0f;
    for (std::size_t c = 0; c < cols; ++c) {
      y[c] = std::exp(x[c] - mx);
      z += y[c];
    }
    const float inv = 1.0f / z;
    for (std::size_t c = 0; c < cols; ++c) y[c] *= inv;
  }
}

// dx = y * (dy - <dy, y>) per row, accumulated into dx.
void softmax_backward(const float* y, const float* dy, float* dx,
                      std::size_t rows, std::size_t cols, float scale) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float* yr = y + r * cols;
    const float* gr = dy + r * cols;
    float s = 0.0f;
    for (std::size_t c = 0; c < cols; ++c) s += gr[c] * yr[c];
    float* xr = dx + r * cols;
    for (std::size_t c = 0; c < cols; ++c) xr[c] += scale * yr[c] * (gr[c] - s);
  }
}

template <typename F, typename G>
Tensor unary(Tape& tape, const Tensor& a, F forward, G derivative) {
  std::vector<float> out(a.size());
  const auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(in[i]);
  Tensor y(a.shape(), std::move(out));
  tape.record({a}, y, [a, y, derivative]() {
    if (!a.requires_grad()) return;
    Tensor ac = a;
    auto ga = ac.grad_buffer();
    const auto gy = y.grad();
    const auto xin = a.data();
    const auto yv = y.data();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * derivative(xin[i], yv[i]);
  });
  return y;
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul", "a");
  require_rank(b, 2, "matmul", "b");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner extents disagree, " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c = Tensor::zeros({m, n});
  kernels::gemm_nn(a.data().data(), b.data().data(), c.mutable_data().data(), m,
                   k, n);
  tape.record({a, b}, c, [a, b, c, m, k, n]() {
    const float* gc = c.grad().data();
    if (a.requires_grad()) {
      Tensor t = a;
      kernels::gemm_nt(gc, b.data().data(), t.grad_buffer().data(), m, n, k);
    }
    if (b.requires_grad()) {
      Tensor t = b;
      kernels::gemm_tn(a.data().data(), gc, t.grad_buffer().data(), m, k, n);
    }
  });
  return c;
}

Tensor conv1d(Tape& tape, const Tensor& x, const Tensor& kernel,
              std::size_t stride) {
  require_rank(x, 2, "conv1d", "x");
  require_rank(kernel, 3, "conv1d", "kernel");
  if (stride == 0) throw ShapeError("conv1d: stride must be >= 1");
  if (x.dim(0) == 0) throw ShapeError("conv1d: empty input (T=0)");
  if (kernel.dim(0) == 0) throw ShapeError("conv1d: kernel width must be >= 1");
  if (kernel.dim(1) != x.dim(1)) {
    throw ShapeError("conv1d: kernel " + shape_str(kernel.shape()) +
                     " does not match input features of " + shape_str(x.shape()));
  }
  const std::size_t len = x.dim(0), din = x.dim(1), width = kernel.dim(0),
                    dout = kernel.dim(2);
  Tensor y = Tensor::zeros({conv_out_len(len, stride), dout});
  conv_forward(x.data().data(), kernel.data().data(), y.mutable_data().data(),
               len, din, dout, width, stride);
  tape.record({x, kernel}, y, [=]() {
    const float* gy = y.grad().data();
    if (x.requires_grad()) {
      Tensor t = x;
      conv_backward_input(gy, kernel.data().data(), t.grad_buffer().data(), len,
                          din, dout, width, stride);
    }
    if (kernel.requires_grad()) {
      Tensor t = kernel;
      conv_backward_kernel(x.data().data(), gy, t.grad_buffer().data(), len, din,
                           dout, width, stride);
    }
  });
  return y;
}

Tensor conv1d_input_grad(Tape& tape, const Tensor& g, const Tensor& kernel,
                         std::size_t input_len, std::size_t stride) {
  require_rank(g, 2, "conv1d_input_grad", "g");
  require_rank(kernel, 3, "conv1d_input_grad", "kernel");
  if (stride == 0) throw ShapeError("conv1d_input_grad: stride must be >= 1");
  if (input_len == 0) throw ShapeError("conv1d_input_grad: empty input (T=0)");
  if (g.dim(0) != conv_out_len(input_len, stride) || g.dim(1) != kernel.dim(2)) {
    throw ShapeError("conv1d_input_grad: upstream " + shape_str(g.shape()) +
                     " inconsistent with kernel " + shape_str(kernel.shape()) +
                     " and input length " + std::to_string(input_len));
  }
  const std::size_t len = input_len, din = kernel.dim(1), width = kernel.dim(0),
                    dout = kernel.dim(2);
  Tensor gx = Tensor::zeros({len, din});
  conv_backward_input(g.data().data(), kernel.data().data(),
                      gx.mutable_data().data(), len, din, dout, width, stride);
  tape.record({g, kernel}, gx, [=]() {
    const float* r = gx.grad().data();
    if (g.requires_grad()) {
      Tensor t = g;
      conv_forward(r, kernel.data().data(), t.grad_buffer().data(), len, din,
                   dout, width, stride);
    }
    if (kernel.requires_grad()) {
      Tensor t = kernel;
      conv_backward_kernel(r, g.data().data(), t.grad_buffer().data(), len, din,
                           dout, width, stride);
    }
  });
  return gx;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  const bool broadcast = b.rank() == 1 && a.rank() >= 1 && a.shape() != b.shape();
  if (broadcast) {
    if (b.dim(0) != a.cols()) {
      throw ShapeError("add: cannot broadcast " + shape_str(b.shape()) +
                       " over " + shape_str(a.shape()));
    }
  } else {
    require_same(a, b, "add");
  }
  const std::size_t k = b.size();
  std::vector<float> out(a.data().begin(), a.data().end());
  const auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[broadcast ? i % k : i];
  Tensor y(a.shape(), std::move(out));
  tape.record({a, b}, y, [a, b, y, broadcast, k]() {
    const auto gy = y.grad();
    accumulate(a, gy);
    if (!b.requires_grad()) return;
    Tensor t = b;
    auto gb = t.grad_buffer();
    for (std::size_t i = 0; i < gy.size(); ++i) gb[broadcast ? i % k : i] += gy[i];
  });
  return y;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  Tensor y(a.shape(), std::move(out));
  tape.record({a, b}, y, [a, b, y]() {
    const auto gy = y.grad();
    accumulate(a, gy);
    if (!b.requires_grad()) return;
    Tensor t = b;
    auto gb = t.grad_buffer();
    for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
  });
  return y;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  Tensor y(a.shape(), std::move(out));
  tape.record({a, b}, y, [a, b, y]() {
    const auto gy = y.grad();
    if (a.requires_grad()) {
      Tensor t = a;
      auto ga = t.grad_buffer();
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * b.data()[i];
    }
    if (b.requires_grad()) {
      Tensor t = b;
      auto gb = t.grad_buffer();
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * a.data()[i];
    }
  });
  return y;
}

Tensor affine(Tape& tape, const Tensor& a, float scale, float shift) {
  return unary(
      tape, a, [scale, shift](float x) { return scale * x + shift; },
      [scale](float, float) { return scale; });
}

Tensor scale_by(Tape& tape, const Tensor& a, const Tensor& s) {
  if (s.size() != 1) {
    throw ShapeError("scale_by: factor must hold one value, got " +
                     shape_str(s.shape()));
  }
  const float f = s.item();
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * f;
  Tensor y(a.shape(), std::move(out));
  tape.record({a, s}, y, [a, s, y]() {
    const auto gy = y.grad();
    const float f = s.item();
    if (a.requires_grad()) {
      Tensor t = a;
      auto ga = t.grad_buffer();
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * f;
    }
    if (s.requires_grad()) {
      float acc = 0.0f;
      for (std::size_t i = 0; i < gy.size(); ++i) acc += gy[i] * a.data()[i];
      Tensor t = s;
      t.grad_buffer()[0] += acc;
    }
  });
  return y;
}

Tensor relu(Tape& tape, const Tensor& a) {
  return unary(
      tape, a, [](float x) { return x > 0.0f ? x : 0.0f; },
      [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

Tensor log(Tape& tape, const Tensor& a) {
  return unary(
      tape, a, [](float x) { return std::log(x); },
      [](float x, float) { return 1.0f / x; });
}

Tensor exp(Tape& tape, const Tensor& a) {
  return unary(
      tape, a, [](float x) { return std::exp(x); },
      [](float, float y) { return y; });
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
  return unary(
      tape, a,
      [](float x) {
        if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
        const float e = std::exp(x);
        return e / (1.0f + e);
      },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor clamp(Tape& tape, const Tensor& a, float lo, float hi) {
  return unary(
      tape, a, [lo, hi](float x) { return std::isnan(x) ? x : std::min(hi, std::max(lo, x)); },
      [lo, hi](float x, float) { return x > lo && x < hi ? 1.0f : 0.0f; });
}

Tensor sum(Tape& tape, const Tensor& a) {
  float acc = 0.0f;
  for (float v : a.data()) acc += v;
  Tensor y = Tensor::scalar(acc);
  tape.record({a}, y, [a, y]() {
    if (!a.requires_grad()) return;
    const float g = y.grad()[0];
    Tensor t = a;
    for (float& v : t.grad_buffer()) v += g;
  });
  return y;
}

Tensor mean(Tape& tape, const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  return affine(tape, sum(tape, a), 1.0f / static_cast<float>(a.size()), 0.0f);
}

Tensor mean_rows(Tape& tape, const Tensor& a) {
  require_rank(a, 2, "mean_rows", "a");
  const std::size_t n = a.dim(0), k = a.dim(1);
  if (n == 0) throw ShapeError("mean_rows: no rows");
  Tensor y = Tensor::zeros({1, k});
  auto yv = y.mutable_data();
  const float inv = 1.0f / static_cast<float>(n);
  for (std::size_t r = 0; r < n; ++r)
    kernels::axpy(inv, a.data().data() + r * k, yv.data(), k);
  tape.record({a}, y, [a, y, n, k, inv]() {
    if (!a.requires_grad()) return;
    Tensor t = a;
    auto ga = t.grad_buffer();
    for (std::size_t r = 0; r < n; ++r)
      kernels::axpy(inv, y.grad().data(), ga.data() + r * k, k);
  });
  return y;
}

Tensor repeat_rows(Tape& tape, const Tensor& v, std::size_t n) {
  const std::size_t k = v.size();
  std::vector<float> out(n * k);
  for (std::size_t r = 0; r < n; ++r)
    std::copy(v.data().begin(), v.data().end(), out.begin() + r * k);
  Tensor y({n, k}, std::move(out));
  tape.record({v}, y, [v, y, n, k]() {
    if (!v.requires_grad()) return;
    Tensor t = v;
    auto gv = t.grad_buffer();
    for (std::size_t r = 0; r < n; ++r)
      kernels::axpy(1.0f, y.grad().data() + r * k, gv.data(), k);
  });
  return y;
}

Tensor slice_rows(Tape& tape, const Tensor& a, std::size_t start,
                  std::size_t count) {
  require_rank(a, 2, "slice_rows", "a");
  if (start + count > a.dim(0)) {
    throw ShapeError("slice_rows: rows [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of range for " +
                     shape_str(a.shape()));
  }
  const std::size_t k = a.dim(1);
  std::vector<float> out(a.data().begin() + start * k,
                         a.data().begin() + (start + count) * k);
  Tensor y({count, k}, std::move(out));
  tape.record({a}, y, [a, y, start, k]() {
    if (!a.requires_grad()) return;
    Tensor t = a;
    auto ga = t.grad_buffer();
    const auto gy = y.grad();
    for (std::size_t i = 0; i < gy.size(); ++i) ga[start * k + i] += gy[i];
  });
  return y;
}

Tensor reshape(Tape& tape, const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " to " +
                     shape_str(shape) + " changes the element count");
  }
  Tensor y(std::move(shape), std::vector<float>(a.data().begin(), a.data().end()));
  tape.record({a}, y, [a, y]() { accumulate(a, y.grad()); });
  return y;
}

Tensor softmax(Tape& tape, const Tensor& a) {
  const std::size_t rows = a.rows(), cols = a.cols();
  Tensor y = Tensor::zeros(a.shape());
  softmax_rows(a.data().data(), y.mutable_data().data(), rows, cols);
  tape.record({a}, y, [a, y, rows, cols]() {
    if (!a.requires_grad()) return;
    Tensor t = a;
    softmax_backward(y.data().data(), y.grad().data(), t.grad_buffer().data(),
                     rows, cols, 1.0f);
  });
  return y;
}

Tensor log_softmax(Tape& tape, const Tensor& a) {
  const std::size_t rows = a.rows(), cols = a.cols();
  std::vector<float> out(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const float* x = a.data().data() + r * cols;
    const float mx = *std::max_element(x, x + cols);
    float z = 0.0f;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(x[c] - mx);
    const float lz = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[c] - lz;
  }
  Tensor y(a.shape(), std::move(out));
  tape.record({a}, y, [a, y, rows, cols]() {
    if (!a.requires_grad()) return;
    Tensor t = a;
    auto ga = t.grad_buffer();
    const auto gy = y.grad();
    const auto yv = y.data();
    for (std::size_t r = 0; r < rows; ++r) {
      float s = 0.0f;
      for (std::size_t c = 0; c < cols; ++c) s += gy[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c)
        ga[r * cols + c] += gy[r * cols + c] - std::exp(yv[r * cols + c]) * s;
    }
  });
  return y;
}

Tensor gumbel_softmax(Tape& tape, const Tensor& logits, float temperature,
                      Rng& rng) {
  if (!(temperature > 0.0f)) {
    throw std::invalid_argument("gumbel_softmax: temperature must be > 0, got " +
                                std::to_string(temperature));
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<float> z(logits.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    double u = unif(rng);
    while (u <= 0.0) u = unif(rng);
    const double g = -std::log(-std::log(u));
    z[i] = static_cast<float>((logits.data()[i] + g) / temperature);
  }
  const std::size_t rows = logits.rows(), cols = logits.cols();
  Tensor y = Tensor::zeros(logits.shape());
  softmax_rows(z.data(), y.mutable_data().data(), rows, cols);
  const float inv_t = 1.0f / temperature;
  tape.record({logits}, y, [logits, y, rows, cols, inv_t]() {
    if (!logits.requires_grad()) return;
    Tensor t = logits;
    softmax_backward(y.data().data(), y.grad().data(), t.grad_buffer().data(),
                     rows, cols, inv_t);
  });
  return y;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain,
                  const Tensor& bias, float eps) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gain.size() != cols || bias.size() != cols) {
    throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" +
                     shape_str(bias.shape()) + " do not match " +
                     shape_str(x.shape()));
  }
  std::vector<float> xhat(x.size()), inv_std(rows), out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = x.data().data() + r * cols;
    float mu = 0.0f;
    for (std::size_t c = 0; c < cols; ++c) mu += xr[c];
    mu /= static_cast<float>(cols);
    float var = 0.0f;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<float>(cols);
    inv_std[r] = 1.0f / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      const float h = (xr[c] - mu) * inv_std[r];
      xhat[r * cols + c] = h;
      out[r * cols + c] = gain.data()[c] * h + bias.data()[c];
    }
  }
  Tensor y(x.shape(), std::move(out));
  tape.record({x, gain, bias}, y,
              [x, gain, bias, y, rows, cols, xhat = std::move(xhat),
               inv_std = std::move(inv_std)]() {
    const auto gy = y.grad();
    if (gain.requires_grad() || bias.requires_grad()) {
      Tensor tg = gain, tb = bias;
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          if (gain.requires_grad()) tg.grad_buffer()[c] += gy[r * cols + c] * xhat[r * cols + c];
          if (bias.requires_grad()) tb.grad_buffer()[c] += gy[r * cols + c];
        }
      }
    }
    if (!x.requires_grad()) return;
    Tensor tx = x;
    auto gx = tx.grad_buffer();
    const float n = static_cast<float>(cols);
    for (std::size_t r = 0; r < rows; ++r) {
      float mean_d = 0.0f, mean_dh = 0.0f;
      for (std::size_t c = 0; c < cols; ++c) {
        const float d = gy[r * cols + c] * gain.data()[c];
        mean_d += d;
        mean_dh += d * xhat[r * cols + c];
      }
      mean_d /= n;
      mean_dh /= n;
      for (std::size_t c = 0; c < cols; ++c) {
        const float d = gy[r * cols + c] * gain.data()[c];
        gx[r * cols + c] += inv_std[r] * (d - mean_d - xhat[r * cols + c] * mean_dh);
      }
    }
  });
  return y;
}

Tensor embedding(Tape& tape, const Tensor& table, std::span<const int> ids) {
  require_rank(table, 2, "embedding", "table");
  const std::size_t vocab = table.dim(0), e = table.dim(1);
  std::vector<int> idv(ids.begin(), ids.end());
  std::vector<float> out(idv.size() * e);
  for (std::size_t i = 0; i < idv.size(); ++i) {
    if (idv[i] < 0 || static_cast<std::size_t>(idv[i]) >= vocab) {
      throw std::out_of_range("embedding: id " + std::to_string(idv[i]) +
                              " outside table of " + std::to_string(vocab) + " rows");
    }
    std::copy_n(table.data().begin() + idv[i] * e, e, out.begin() + i * e);
  }
  Tensor y({idv.size(), e}, std::move(out));
  tape.record({table}, y, [table, y, e, idv = std::move(idv)]() {
    Tensor t = table;
    auto gt = t.grad_buffer();
    for (std::size_t i = 0; i < idv.size(); ++i)
      kernels::axpy(1.0f, y.grad().data() + i * e, gt.data() + idv[i] * e, e);
  });
  return y;
}

Tensor concat_cols(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rank() == 2 ? parts[0].dim(0) : 0;
  std::size_t width = 0;
  std::vector<std::size_t> offsets;
  for (const Tensor& p : parts) {
    require_rank(p, 2, "concat_cols", "part");
    if (p.dim(0) != rows) {
      throw ShapeError("concat_cols: row counts differ, " + shape_str(parts[0].shape()) +
                       " vs " + shape_str(p.shape()));
    }
    offsets.push_back(width);
    width += p.dim(1);
  }
  std::vector<float> out(rows * width);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::size_t k = parts[i].dim(1);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(parts[i].data().begin() + r * k, k,
                  out.begin() + r * width + offsets[i]);
  }
  Tensor y({rows, width}, std::move(out));
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  tape.record(inputs, y, [inputs, y, rows, width, offsets]() {
    const auto gy = y.grad();
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!inputs[i].requires_grad()) continue;
      Tensor t = inputs[i];
      auto g = t.grad_buffer();
      const std::size_t k = t.dim(1);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < k; ++c) g[r * k + c] += gy[r * width + offsets[i] + c];
    }
  });
  return y;
}

Tensor nll_loss(Tape& tape, const Tensor& logp, std::span<const int> targets,
                std::span<const float> weights) {
  require_rank(logp, 2, "nll_loss", "logp");
  const std::size_t rows = logp.dim(0), cols = logp.dim(1);
  if (targets.size() != rows || (!weights.empty() && weights.size() != rows)) {
    throw ShapeError("nll_loss: " + std::to_string(targets.size()) +
                     " targets / " + std::to_string(weights.size()) +
                     " weights for " + shape_str(logp.shape()));
  }
  std::vector<int> tv(targets.begin(), targets.end());
  std::vector<float> wv(rows, 1.0f);
  if (!weights.empty()) wv.assign(weights.begin(), weights.end());
  float total_w = 0.0f, acc = 0.0f;
  for (std::size_t r = 0; r < rows; ++r) {
    if (tv[r] < 0 || static_cast<std::size_t>(tv[r]) >= cols) {
      throw std::out_of_range("nll_loss: target " + std::to_string(tv[r]) +
                              " outside " + std::to_string(cols) + " classes");
    }
    total_w += wv[r];
    acc -= wv[r] * logp.data()[r * cols + tv[r]];
  }
  if (total_w <= 0.0f) throw std::invalid_argument("nll_loss: weights sum to zero");
  Tensor y = Tensor::scalar(acc / total_w);
  tape.record({logp}, y, [logp, y, cols, tv = std::move(tv), wv = std::move(wv),
                          total_w]() {
    Tensor t = logp;
    auto g = t.grad_buffer();
    const float gy = y.grad()[0];
    for (std::size_t r = 0; r < tv.size(); ++r) g[r * cols + tv[r]] -= gy * wv[r] / total_w;
  });
  return y;
}

}  // namespace uasb
