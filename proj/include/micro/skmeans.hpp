// Copyright 2026 The micro-retrieval Authors
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

#include <cmath>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include <fmt/core.h>

#include "micro/common.hpp"
#include "micro/embedding.hpp"
#include "micro/io.hpp"
#include "micro/log.hpp"

namespace micro {

struct ClusterParams {
  std::size_t num_interests = 1;
  std::size_t iters = 25;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

/// Hard assignment of items to interests plus unit-norm centroids (K x d).
struct ClusterAssignment {
  std::size_t num_interests = 0;
  std::size_t dim = 0;
  std::vector<InterestId> item_to_interest;
  std::vector<double> centroids;
  std::vector<double> objective_trace;  // sum of cosines after each iteration
  std::size_t zero_vectors = 0;

  std::span<const double> centroid(InterestId k) const { return {centroids.data() + std::size_t{k} * dim, dim}; }

  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> s(num_interests, 0);
    for (auto k : item_to_interest) ++s[k];
    return s;
  }
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) s += a[c] * b[c];
  return s;
}

inline bool normalize(std::span<double> v) {
  const double n = std::sqrt(dot(v, v));
  if (n == 0.0) return false;
  for (auto& x : v) x /= n;
  return true;
}

}  // namespace detail

/// Spherical k-means over `rows` vectors of dimension `dim` (row-major).
///
/// Seeding is k-means++ on cosine distance; assignment picks the highest
/// cosine centroid (lowest id on ties); empty clusters take the member with
/// the lowest cosine to its centroid from a cluster with >1 members. Zero
/// vectors are assigned to interest 0 and do not move centroids. The
/// objective never decreases between iterations.
template <typename T>
ClusterAssignment spherical_kmeans(std::span<const T> data, std::size_t rows, std::size_t dim,
                                   const ClusterParams& params) {
  const std::size_t K = params.num_interests;
  if (K == 0) throw InvalidArgument("number of interests must be >= 1");
  if (K > rows) throw InvalidArgument(fmt::format("K={} exceeds item count {}", K, rows));

  std::vector<double> x(rows * dim);
  std::vector<char> nonzero(rows, 0);
  std::vector<std::size_t> live;
  for (std::size_t r = 0; r < rows; ++r) {
    std::span<double> row(x.data() + r * dim, dim);
    for (std::size_t c = 0; c < dim; ++c) row[c] = static_cast<double>(data[r * dim + c]);
    if (detail::normalize(row)) {
      nonzero[r] = 1;
      live.push_back(r);
    }
  }
  ClusterAssignment out;
  out.num_interests = K;
  out.dim = dim;
  out.zero_vectors = rows - live.size();
  if (live.empty()) throw InvalidArgument("all item vectors are zero");
  if (K > live.size())
    throw InvalidArgument(fmt::format("K={} exceeds the {} nonzero item vectors", K, live.size()));
  if (out.zero_vectors > 0)
    log_warn("zero_vector_items", "count={} assigned_interest=0", out.zero_vectors);

  auto row = [&](std::size_t r) { return std::span<const double>(x.data() + r * dim, dim); };
  std::vector<double>& cen = out.centroids;
  cen.assign(K * dim, 0.0);
  auto centroid = [&](std::size_t k) { return std::span<double>(cen.data() + k * dim, dim); };

  // k-means++ seeding with distance 1 - cos.
  std::mt19937_64 rng(params.seed);
  std::vector<double> best_cos(rows, -2.0);
  std::vector<char> chosen(rows, 0);
  std::size_t first = live[uniform_index(rng, live.size())];
  for (std::size_t k = 0; k < K; ++k) {
    std::size_t pick = first;
    if (k > 0) {
      double total = 0.0;
      for (std::size_t r : live) total += chosen[r] ? 0.0 : std::max(0.0, 1.0 - best_cos[r]);
      if (total > 0.0) {
        double target = uniform01(rng) * total;
        pick = kNoId;
        for (std::size_t r : live) {
          if (chosen[r]) continue;
          const double w = std::max(0.0, 1.0 - best_cos[r]);
          if (w <= 0.0) continue;
          pick = r;
          if (target < w) break;
          target -= w;
        }
      } else {
        std::vector<std::size_t> rest;
        for (std::size_t r : live)
          if (!chosen[r]) rest.push_back(r);
        pick = rest[uniform_index(rng, rest.size())];
      }
    }
    chosen[pick] = 1;
    std::copy_n(row(pick).begin(), dim, centroid(k).begin());
    for (std::size_t r : live) best_cos[r] = std::max(best_cos[r], detail::dot(row(r), centroid(k)));
  }

  auto& assign = out.item_to_interest;
  assign.assign(rows, 0);
  std::vector<double> cos_to_own(rows, 0.0);
  std::vector<InterestId> previous;

  for (std::size_t iter = 0; iter < std::max<std::size_t>(params.iters, 1); ++iter) {
    parallel_for(rows, params.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t r = begin; r < end; ++r) {
        if (!nonzero[r]) {
          assign[r] = 0;
          cos_to_own[r] = 0.0;
          continue;
        }
        InterestId best = 0;
        double best_value = detail::dot(row(r), centroid(0));
        for (std::size_t k = 1; k < K; ++k) {
          const double c = detail::dot(row(r), centroid(k));
          if (c > best_value) {
            best_value = c;
            best = static_cast<InterestId>(k);
          }
        }
        assign[r] = best;
        cos_to_own[r] = best_value;
      }
    });

    std::vector<std::size_t> size(K, 0);
    for (std::size_t r : live) ++size[assign[r]];
    for (std::size_t k = 0; k < K; ++k) {
      if (size[k] > 0) continue;
      std::size_t donor = kNoId;
      double lowest = 2.0;
      for (std::size_t r : live) {
        if (size[assign[r]] > 1 && cos_to_own[r] < lowest) {
          lowest = cos_to_own[r];
          donor = r;
        }
      }
      --size[assign[donor]];
      assign[donor] = static_cast<InterestId>(k);
      size[k] = 1;
      cos_to_own[donor] = 1.0;
      log_debug("empty_cluster_repaired", "interest={} item={}", k, donor);
    }

    std::vector<double> sums(K * dim, 0.0);
    for (std::size_t r : live) {
      auto src = row(r);
      double* dst = sums.data() + std::size_t{assign[r]} * dim;
      for (std::size_t c = 0; c < dim; ++c) dst[c] += src[c];
    }
    for (std::size_t k = 0; k < K; ++k) {
      std::span<double> s(sums.data() + k * dim, dim);
      if (detail::normalize(s)) std::copy(s.begin(), s.end(), centroid(k).begin());
    }

    double objective = 0.0;
    for (std::size_t r : live) objective += detail::dot(row(r), centroid(assign[r]));
    out.objective_trace.push_back(objective);
    log_debug("skmeans_iter", "iter={} objective={:.9f}", iter + 1, objective);

    if (assign == previous) break;
    previous = assign;
  }
  return out;
}

/// Clusters the item rows of an embedding table.
inline ClusterAssignment cluster_items(const EmbeddingTable& emb, const ClusterParams& params) {
  return spherical_kmeans<float>(emb.item_data, emb.num_items, emb.dim, params);
}

/// Exports `item<delim>interest` lines, dense item ids.
inline void save_cluster_map(const std::filesystem::path& path, const ClusterAssignment& c, char delim = '\t') {
  std::string body = fmt::format("# interests {}\n", c.num_interests);
  for (std::size_t i = 0; i < c.item_to_interest.size(); ++i)
    body += fmt::format("{}{}{}\n", i, delim, c.item_to_interest[i]);
  io::atomic_write(path, body);
}

/// Reads a cluster map; centroids are not persisted, so only the map and K come back.
inline ClusterAssignment load_cluster_map(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw MissingArtifact("no cluster map at " + path.string() + "; run `micro cluster` first");
  ClusterAssignment c;
  io::for_each_line(path, [&](std::size_t number, std::string_view line) {
    if (line.empty()) return;
    const auto f = io::split_fields(line, ' ');
    if (line.front() == '#') {
      if (f.size() != 3) throw ParseError("bad cluster header", number);
      c.num_interests = io::parse_or_throw<std::size_t>(f[2], number, "interest count");
      return;
    }
    if (f.size() != 2) throw ParseError("expected item and interest", number);
    const auto item = io::parse_or_throw<std::size_t>(f[0], number, "item");
    if (item != c.item_to_interest.size()) throw ParseError("cluster rows must be in item order", number);
    const auto k = io::parse_or_throw<InterestId>(f[1], number, "interest");
    if (k >= c.num_interests) throw ParseError("interest id out of range", number);
    c.item_to_interest.push_back(k);
  });
  return c;
}

}  // namespace micro
