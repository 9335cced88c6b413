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
#include <string_view>

// Dense inner-loop kernels. Every tensor operation with a non-trivial inner
// loop (matmul, conv1d and their backward rules) is expressed in terms of the
// primitives below, so the scalar and SIMD paths are the only two places the
// arithmetic lives.
//
// The scalar variants are the reference. The AVX2 variants are compiled in a
// separate translation unit with -mavx2 -mfma and chosen at runtime when the
// CPU reports both features.
namespace uasb::kernels {

enum class Isa { kScalar, kAvx2 };

// sum_i a[i] * b[i]
using DotFn = float (*)(const float* a, const float* b, std::size_t n);
// y[i] += alpha * x[i]
using AxpyFn = void (*)(float alpha, const float* x, float* y, std::size_t n);

struct KernelTable {
  Isa isa;
  DotFn dot;
  AxpyFn axpy;
};

namespace scalar {
float dot(const float* a, const float* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define UASB_HAVE_AVX2_TU 1
namespace avx2 {
float dot(const float* a, const float* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
}  // namespace avx2
#else
#define UASB_HAVE_AVX2_TU 0
#endif

// True when the running CPU can execute the AVX2 variants.
bool cpu_has_avx2();

// Currently selected table. The first call probes the CPU.
const KernelTable& active();

// Forces a particular ISA (tests use this to compare paths). Throws
// std::runtime_error if the ISA is not available on this machine.
void select(Isa isa);

std::string_view isa_name(Isa isa);

inline float dot(const float* a, const float* b, std::size_t n) {
  return active().dot(a, b, n);
}
inline void axpy(float alpha, const float* x, float* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}

// C[m x n] += A[m x k] * B[k x n], all row-major and contiguous.
void gemm_nn(const float* a, const float* b, float* c, std::size_t m,
             std::size_t k, std::size_t n);
// C[m x k] += A[m x n] * B[k x n]^T
void gemm_nt(const float* a, const float* b, float* c, std::size_t m,
             std::size_t n, std::size_t k);
// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn(const float* a, const float* b, float* c, std::size_t m,
             std::size_t k, std::size_t n);

}  // namespace uasb::kernels
