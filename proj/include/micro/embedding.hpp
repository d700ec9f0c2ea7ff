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
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <vector>

#include "micro/common.hpp"
#include "micro/graph.hpp"
#include "micro/log.hpp"

namespace micro {

enum class ScoreFunction {
  kDot,          // f(u, i) = <u, i>
  kTranslation,  // f(u, i) = margin - ||u + r - i||^2 with one learned relation vector r
};

struct EmbeddingParams {
  std::size_t dim = 128;
  std::size_t epochs = 20;
  std::size_t negatives = 10;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
  ScoreFunction score = ScoreFunction::kDot;
  double translation_margin = 4.0;
};

/// Row-major user and item embeddings. Rows of users/items without training
/// engagements are all-zero.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<float> user_data;
  std::vector<float> item_data;
  std::vector<float> relation;        // only for kTranslation
  ScoreFunction score_function = ScoreFunction::kDot;
  float translation_margin = 4.0f;
  std::vector<double> epoch_loss;     // mean loss per positive edge (its negatives included)

  std::span<const float> user(UserId u) const { return {user_data.data() + std::size_t{u} * dim, dim}; }
  std::span<const float> item(ItemId i) const { return {item_data.data() + std::size_t{i} * dim, dim}; }
  std::span<float> user(UserId u) { return {user_data.data() + std::size_t{u} * dim, dim}; }
  std::span<float> item(ItemId i) { return {item_data.data() + std::size_t{i} * dim, dim}; }

  double score(UserId u, ItemId i) const {
    const auto uv = user(u);
    const auto iv = item(i);
    double s = 0.0;
    if (score_function == ScoreFunction::kDot) {
      for (std::size_t c = 0; c < dim; ++c) s += double(uv[c]) * iv[c];
      return s;
    }
    for (std::size_t c = 0; c < dim; ++c) {
      const double diff = double(uv[c]) + relation[c] - iv[c];
      s += diff * diff;
    }
    return translation_margin - s;
  }
};

namespace detail {
inline double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }
// -log(sigmoid(x)) without overflow.
inline double softplus_neg(double x) { return x >= 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x)); }
}  // namespace detail

/// Trains shallow co-embeddings with logistic loss: observed edges are pushed
/// up, uniformly sampled train items are pushed down. Single-threaded and
/// fully determined by the seed.
inline EmbeddingTable train_embeddings(const EngagementGraph& train, const EmbeddingParams& params) {
  if (params.dim == 0) throw InvalidArgument("embedding dimension must be >= 1");
  if (params.epochs == 0) throw InvalidArgument("epochs must be >= 1");
  if (train.edges.empty()) throw EmptyInput("cannot train embeddings on an empty graph");

  const std::size_t d = params.dim;
  EmbeddingTable t;
  t.dim = d;
  t.num_users = train.num_users;
  t.num_items = train.num_items;
  t.score_function = params.score;
  t.translation_margin = static_cast<float>(params.translation_margin);
  t.user_data.assign(t.num_users * d, 0.0f);
  t.item_data.assign(t.num_items * d, 0.0f);

  std::mt19937_64 rng(params.seed);
  const float scale = 0.5f / std::sqrt(static_cast<float>(d));
  auto init = [&](std::vector<float>& v) {
    for (auto& x : v) x = static_cast<float>((uniform01(rng) * 2.0 - 1.0) * scale);
  };
  init(t.user_data);
  init(t.item_data);
  if (params.score == ScoreFunction::kTranslation) {
    t.relation.assign(d, 0.0f);
  }

  std::vector<ItemId> negative_pool;
  {
    std::vector<char> seen(train.num_items, 0);
    for (const auto& e : train.edges) {
      if (!seen[e.item]) {
        seen[e.item] = 1;
        negative_pool.push_back(e.item);
      }
    }
    std::sort(negative_pool.begin(), negative_pool.end());
  }

  std::vector<std::size_t> order(train.edges.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad_user(d), grad_rel(d);
  const double lr = params.learning_rate;
  const bool translate = params.score == ScoreFunction::kTranslation;

  // Gradient of the loss w.r.t. score is (sigmoid(f) - label). For translation
  // scoring df/du = -2(u + r - i), df/di = +2(u + r - i), df/dr = df/du.
  auto step = [&](UserId u, ItemId i, double label) {
    auto uv = t.user(u);
    auto iv = t.item(i);
    const double f = t.score(u, i);
    const double g = detail::sigmoid(f) - label;
    for (std::size_t c = 0; c < d; ++c) {
      if (!translate) {
        grad_user[c] += g * iv[c];
        iv[c] -= static_cast<float>(lr * g * uv[c]);
      } else {
        const double diff = double(uv[c]) + t.relation[c] - iv[c];
        grad_user[c] += g * -2.0 * diff;
        grad_rel[c] += g * -2.0 * diff;
        iv[c] -= static_cast<float>(lr * g * 2.0 * diff);
      }
    }
    return label > 0.5 ? detail::softplus_neg(f) : detail::softplus_neg(-f);
  };

  for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss = 0.0;
    for (std::size_t idx : order) {
      const Edge& e = train.edges[idx];
      std::fill(grad_user.begin(), grad_user.end(), 0.0);
      if (translate) std::fill(grad_rel.begin(), grad_rel.end(), 0.0);
      loss += step(e.user, e.item, 1.0);
      for (std::size_t n = 0; n < params.negatives; ++n) {
        const ItemId j = negative_pool[uniform_index(rng, negative_pool.size())];
        if (j == e.item) continue;
        loss += step(e.user, j, 0.0);
      }
      auto uv = t.user(e.user);
      for (std::size_t c = 0; c < d; ++c) uv[c] -= static_cast<float>(lr * grad_user[c]);
      if (translate)
        for (std::size_t c = 0; c < d; ++c) t.relation[c] -= static_cast<float>(lr * grad_rel[c]);
    }
    const double mean = loss / static_cast<double>(order.size());
    t.epoch_loss.push_back(mean);
    log_info("embed_epoch", "epoch={} mean_loss={:.6f}", epoch + 1, mean);
  }

  // Entities without training engagements carry no learned signal.
  std::vector<char> user_active(t.num_users, 0), item_active(t.num_items, 0);
  for (const auto& e : train.edges) {
    user_active[e.user] = 1;
    item_active[e.item] = 1;
  }
  for (std::size_t u = 0; u < t.num_users; ++u)
    if (!user_active[u]) std::fill_n(t.user_data.begin() + u * d, d, 0.0f);
  for (std::size_t i = 0; i < t.num_items; ++i)
    if (!item_active[i]) std::fill_n(t.item_data.begin() + i * d, d, 0.0f);
  return t;
}

inline bool is_zero(std::span<const float> v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; });
}

namespace detail {
inline constexpr char kEmbeddingMagic[8] = {'M', 'I', 'C', 'R', 'O', 'E', 'M', 'B'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;
}  // namespace detail

/// Binary layout: 8-byte magic, u32 version, u32 score function, u64 users,
/// u64 items, u64 dim, f32 margin, then user rows, item rows, relation row
/// (translation only), all little-endian f32.
inline void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& t) {
  std::string buf;
  auto put = [&](const void* p, std::size_t n) { buf.append(static_cast<const char*>(p), n); };
  put(detail::kEmbeddingMagic, 8);
  const std::uint32_t version = detail::kEmbeddingVersion;
  const std::uint32_t fn = static_cast<std::uint32_t>(t.score_function);
  const std::uint64_t dims[3] = {t.num_users, t.num_items, t.dim};
  put(&version, 4);
  put(&fn, 4);
  put(dims, sizeof dims);
  put(&t.translation_margin, 4);
  put(t.user_data.data(), t.user_data.size() * sizeof(float));
  put(t.item_data.data(), t.item_data.size() * sizeof(float));
  if (t.score_function == ScoreFunction::kTranslation) put(t.relation.data(), t.relation.size() * sizeof(float));
  io::atomic_write(path, buf);
}

inline EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw MissingArtifact("no embeddings at " + path.string() + "; run `micro embed` first");
  const std::string buf = io::read_file(path);
  std::size_t pos = 0;
  auto get = [&](void* p, std::size_t n) {
    if (pos + n > buf.size()) throw Error("truncated embedding file: " + path.string());
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  };
  char magic[8];
  get(magic, 8);
  if (std::memcmp(magic, detail::kEmbeddingMagic, 8) != 0) throw Error("not an embedding file: " + path.string());
  std::uint32_t version = 0, fn = 0;
  std::uint64_t dims[3];
  get(&version, 4);
  if (version != detail::kEmbeddingVersion) throw Error("unsupported embedding file version");
  get(&fn, 4);
  get(dims, sizeof dims);
  EmbeddingTable t;
  get(&t.translation_margin, 4);
  t.num_users = dims[0];
  t.num_items = dims[1];
  t.dim = dims[2];
  t.score_function = static_cast<ScoreFunction>(fn);
  t.user_data.resize(t.num_users * t.dim);
  t.item_data.resize(t.num_items * t.dim);
  get(t.user_data.data(), t.user_data.size() * sizeof(float));
  get(t.item_data.data(), t.item_data.size() * sizeof(float));
  if (t.score_function == ScoreFunction::kTranslation) {
    t.relation.resize(t.dim);
    get(t.relation.data(), t.dim * sizeof(float));
  }
  return t;
}

}  // namespace micro
