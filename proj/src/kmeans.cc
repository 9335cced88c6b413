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

#include "uasb/kmeans.h"

#include <algorithm>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "uasb/errors.h"

namespace uasb::kmeans {
namespace {

double sq_dist(const float* a, const double* c, std::size_t dim) {
  double acc = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    const double d = static_cast<double>(a[j]) - c[j];
    acc += d * d;
  }
  return acc;
}

int nearest(const float* x, const std::vector<double>& centers, std::size_t k,
            std::size_t dim, double* best_dist) {
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    const double d = sq_dist(x, centers.data() + c * dim, dim);
    if (d < bd) {
      bd = d;
      best = static_cast<int>(c);
    }
  }
  if (best_dist) *best_dist = bd;
  return best;
}

std::vector<double> seed_plus_plus(std::span<const float> data, std::size_t n,
                                   std::size_t dim, std::size_t k, std::mt19937_64& rng) {
  std::vector<double> centers(k * dim);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const std::size_t first = pick(rng);
  for (std::size_t j = 0; j < dim; ++j) centers[j] = data[first * dim + j];
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(&data[i * dim], centers.data(), dim);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    if (!(total > 0.0)) {
      throw std::invalid_argument("kmeans: data has fewer than " + std::to_string(k) +
                                  " distinct points");
    }
    const double r = u(rng) * total;
    double acc = 0.0;
    std::size_t chosen = n;
    for (std::size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (d2[i] > 0.0) chosen = i;
      if (acc > r && d2[i] > 0.0) break;
    }
    for (std::size_t j = 0; j < dim; ++j) centers[c * dim + j] = data[chosen * dim + j];
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], sq_dist(&data[i * dim], centers.data() + c * dim, dim));
  }
  return centers;
}

}  // namespace

Codebook fit(std::span<const float> data, std::size_t dim, const FitOptions& options,
             std::vector<double>* wcss_trace) {
  if (dim == 0 || data.size() % dim != 0) {
    throw std::invalid_argument("kmeans: data size is not a multiple of dim");
  }
  const std::size_t n = data.size() / dim, k = options.k;
  if (k == 0) throw std::invalid_argument("kmeans: K must be >= 1");
  if (n < k) {
    throw std::invalid_argument("kmeans: " + std::to_string(n) + " points cannot form " +
                                std::to_string(k) + " clusters");
  }
  std::mt19937_64 rng(options.seed);
  std::vector<double> centers = seed_plus_plus(data, n, dim, k, rng);
  std::vector<int> labels(n, -1);
  double prev = std::numeric_limits<double>::infinity();

  for (std::size_t iter = 0; iter < options.max_iters; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const int c = nearest(&data[i * dim], centers, k, dim, nullptr);
      changed |= c != labels[i];
      labels[i] = c;
    }
    if (!changed) break;
    // Empty clusters keep their previous centroid.
    std::vector<double> sums(k * dim, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      counts[labels[i]]++;
      for (std::size_t j = 0; j < dim; ++j) sums[labels[i] * dim + j] += data[i * dim + j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < dim; ++j)
        centers[c * dim + j] = sums[c * dim + j] / static_cast<double>(counts[c]);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      total += sq_dist(&data[i * dim], centers.data() + labels[i] * dim, dim);
    if (total > prev * (1.0 + 1e-12) + 1e-12) {
      throw NumericError("kmeans: WCSS increased at iteration " + std::to_string(iter) +
                         " (" + std::to_string(prev) + " -> " + std::to_string(total) + ")");
    }
    prev = total;
    if (wcss_trace) wcss_trace->push_back(total);
  }

  Codebook cb;
  cb.k = k;
  cb.dim = dim;
  cb.centroids.assign(centers.begin(), centers.end());
  return cb;
}

std::vector<int> assign(const Codebook& codebook, std::span<const float> frames,
                        std::size_t dim) {
  if (dim != codebook.dim || frames.size() % dim != 0) {
    throw std::invalid_argument("kmeans::assign: frame dim " + std::to_string(dim) +
                                " does not match codebook dim " + std::to_string(codebook.dim));
  }
  const std::vector<double> centers(codebook.centroids.begin(), codebook.centroids.end());
  const std::size_t n = frames.size() / dim;
  std::vector<int> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = nearest(&frames[i * dim], centers, codebook.k, dim, nullptr);
  return ids;
}

double wcss(const Codebook& codebook, std::span<const float> data, std::size_t dim) {
  const std::vector<double> centers(codebook.centroids.begin(), codebook.centroids.end());
  double total = 0.0;
  for (std::size_t i = 0; i < data.size() / dim; ++i) {
    double d = 0.0;
    nearest(&data[i * dim], centers, codebook.k, dim, &d);
    total += d;
  }
  return total;
}

}  // namespace uasb::kmeans
