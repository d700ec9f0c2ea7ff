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

#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "micro/embedding.hpp"

using namespace micro;

namespace {

struct Planted {
  EngagementGraph train;
  std::vector<Edge> held_out;
};

// Two blocks of 100 users x 100 items; within-block edge probability 0.2, none across.
Planted planted_blocks(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Edge> train, held;
  for (UserId u = 0; u < 200; ++u)
    for (ItemId i = 0; i < 200; ++i) {
      if ((u < 100) != (i < 100)) continue;
      if (uniform01(rng) >= 0.2) continue;
      (uniform01(rng) < 0.1 ? held : train).push_back({u, i, 0});
    }
  return {build_dense_graph(train, 200, 200, 1), held};
}

}  // namespace

TEST(Embedding, PlantedBlocksRankWithinAboveAcross) {
  const auto p = planted_blocks(7);
  EmbeddingParams params;
  params.dim = 16;
  params.seed = 3;
  const auto emb = train_embeddings(p.train, params);
  std::mt19937_64 rng(99);
  std::size_t wins = 0, trials = 0;
  for (const auto& e : p.held_out) {
    for (int r = 0; r < 20; ++r) {
      const ItemId cross = static_cast<ItemId>((e.item < 100 ? 100 : 0) + rng() % 100);
      wins += emb.score(e.user, e.item) > emb.score(e.user, cross);
      ++trials;
    }
  }
  const double accuracy = static_cast<double>(wins) / static_cast<double>(trials);
  EXPECT_GE(accuracy, 0.95) << "pairwise ranking accuracy " << accuracy;
}

TEST(Embedding, LossDecreases) {
  const auto p = planted_blocks(1);
  EmbeddingParams params;
  params.dim = 16;
  params.epochs = 8;
  const auto emb = train_embeddings(p.train, params);
  ASSERT_EQ(emb.epoch_loss.size(), 8u);
  EXPECT_LT(emb.epoch_loss.back(), emb.epoch_loss.front());
}

TEST(Embedding, TranslationScoringLearns) {
  const auto p = planted_blocks(2);
  EmbeddingParams params;
  params.dim = 16;
  params.epochs = 10;
  params.learning_rate = 0.02;
  params.score = ScoreFunction::kTranslation;
  const auto emb = train_embeddings(p.train, params);
  EXPECT_LT(emb.epoch_loss.back(), emb.epoch_loss.front());
  for (float x : emb.relation) EXPECT_TRUE(std::isfinite(x));
}

TEST(Embedding, SingleEdgeOneEpoch) {
  const auto g = build_dense_graph({{0, 0, 0}}, 1, 1, 1);
  EmbeddingParams params;
  params.epochs = 1;
  const auto emb = train_embeddings(g, params);
  for (float x : emb.user_data) EXPECT_TRUE(std::isfinite(x));
  for (float x : emb.item_data) EXPECT_TRUE(std::isfinite(x));
}

TEST(Embedding, ProductionConfigurationAccepted) {
  const auto g = build_dense_graph({{0, 0, 0}, {1, 1, 0}}, 2, 2, 1);
  EmbeddingParams params;  // d=128, 20 epochs are the defaults
  EXPECT_EQ(params.dim, 128u);
  EXPECT_EQ(params.epochs, 20u);
  EXPECT_NO_THROW(train_embeddings(g, params));
}

TEST(Embedding, InvalidArguments) {
  const auto g = build_dense_graph({{0, 0, 0}}, 1, 1, 1);
  EmbeddingParams params;
  params.dim = 0;
  EXPECT_THROW(train_embeddings(g, params), InvalidArgument);
  params.dim = 4;
  params.epochs = 0;
  EXPECT_THROW(train_embeddings(g, params), InvalidArgument);
  params.epochs = 1;
  EXPECT_THROW(train_embeddings(build_dense_graph({}, 1, 1, 1), params), EmptyInput);
}

TEST(Embedding, InactiveRowsAreZero) {
  const auto g = build_dense_graph({{0, 0, 0}, {0, 2, 0}}, 3, 4, 1);
  EmbeddingParams params;
  params.dim = 8;
  params.epochs = 2;
  const auto emb = train_embeddings(g, params);
  EXPECT_FALSE(is_zero(emb.user(0)));
  EXPECT_TRUE(is_zero(emb.user(1)));
  EXPECT_TRUE(is_zero(emb.item(1)));
  EXPECT_TRUE(is_zero(emb.item(3)));
}

TEST(Embedding, DeterministicAndRoundTrips) {
  const auto p = planted_blocks(4);
  EmbeddingParams params;
  params.dim = 8;
  params.epochs = 2;
  params.seed = 5;
  const auto a = train_embeddings(p.train, params);
  const auto b = train_embeddings(p.train, params);
  EXPECT_EQ(a.user_data, b.user_data);
  EXPECT_EQ(a.item_data, b.item_data);
  const auto path = std::filesystem::temp_directory_path() / ("micro_emb_" + std::to_string(::getpid()) + ".bin");
  save_embeddings(path, a);
  const auto c = load_embeddings(path);
  EXPECT_EQ(c.user_data, a.user_data);
  EXPECT_EQ(c.item_data, a.item_data);
  EXPECT_EQ(c.dim, a.dim);
  std::filesystem::remove(path);
  EXPECT_THROW(load_embeddings(path), MissingArtifact);
}
