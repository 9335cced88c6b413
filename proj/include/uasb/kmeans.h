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
#include <span>
#include <vector>

namespace uasb::kmeans {

struct Codebook {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<float> centroids;  // k x dim

  const float* centroid(std::size_t i) const { return centroids.data() + i * dim; }
};

struct FitOptions {
  std::size_t k = 8;
  std::size_t max_iters = 100;
  std::uint64_t seed = 1;
};

// Lloyd iterations from k-means++ seeding. `data` is n x dim, row-major.
// Stops after max_iters or when no assignment changes. If `wcss_trace` is
// given it receives the within-cluster sum of squares after every
// iteration; fit() itself throws if that sequence ever increases.
Codebook fit(std::span<const float> data, std::size_t dim, const FitOptions& options,
             std::vector<double>* wcss_trace = nullptr);

// Nearest centroid per row under squared Euclidean distance, ties to the
// lower index.
std::vector<int> assign(const Codebook& codebook, std::span<const float> frames,
                        std::size_t dim);

double wcss(const Codebook& codebook, std::span<const float> data, std::size_t dim);

}  // namespace uasb::kmeans
