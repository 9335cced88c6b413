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

#include "uasb/kernels.h"

#include <stdexcept>

namespace uasb::kernels {
namespace {

constexpr KernelTable kScalarTable{Isa::kScalar, &scalar::dot, &scalar::axpy};
#if UASB_HAVE_AVX2_TU
constexpr KernelTable kAvx2Table{Isa::kAvx2, &avx2::dot, &avx2::axpy};
#endif

const KernelTable* probe() {
#if UASB_HAVE_AVX2_TU
  if (cpu_has_avx2()) return &kAvx2Table;
#endif
  return &kScalarTable;
}

// Selection happens once per process unless a test overrides it.
const KernelTable*& current() {
  static const KernelTable* table = probe();
  return table;
}

}  // namespace

bool cpu_has_avx2() {
#if UASB_HAVE_AVX2_TU && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& active() { return *current(); }

void select(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      current() = &kScalarTable;
      return;
    case Isa::kAvx2:
#if UASB_HAVE_AVX2_TU
      if (cpu_has_avx2()) {
        current() = &kAvx2Table;
        return;
      }
#endif
      throw std::runtime_error("AVX2/FMA kernels not available on this CPU");
  }
}

std::string_view isa_name(Isa isa) {
  return isa == Isa::kAvx2 ? "avx2" : "scalar";
}

void gemm_nn(const float* a, const float* b, float* c, std::size_t m,
             std::size_t k, std::size_t n) {
  const KernelTable& kt = active();
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * n;
    const float* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = arow[p];
      if (av != 0.0f) kt.axpy(av, b + p * n, crow, n);
    }
  }
}

void gemm_nt(const float* a, const float* b, float* c, std::size_t m,
             std::size_t n, std::size_t k) {
  const KernelTable& kt = active();
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * n;
    float* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) crow[p] += kt.dot(arow, b + p * n, n);
  }
}

void gemm_tn(const float* a, const float* b, float* c, std::size_t m,
             std::size_t k, std::size_t n) {
  const KernelTable& kt = active();
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    const float* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = arow[p];
      if (av != 0.0f) kt.axpy(av, brow, c + p * n, n);
    }
  }
}

}  // namespace uasb::kernels
