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

#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "micro/init.hpp"

using namespace micro;

namespace {

ClusterAssignment cluster_map(std::vector<InterestId> map, std::size_t K) {
  ClusterAssignment c;
  c.num_interests = K;
  c.item_to_interest = std::move(map);
  return c;
}

}  // namespace

TEST(Init, SingleInterestUser) {
  const auto g = build_dense_graph({{0, 0, 0}, {0, 1, 0}, {0, 2, 0}, {1, 3, 0}}, 3, 4, 1);
  const auto a = build_init(g, cluster_map({7, 7, 7, 2}, 8), 0.1, 0.01);
  EXPECT_EQ(a.user_interest.get(0, 7), 3u);
  EXPECT_EQ(a.alpha_support(0), (std::vector<InterestId>{7}));
  EXPECT_TRUE(a.is_cold(2));
  EXPECT_TRUE(a.alpha_support(2).empty());
  EXPECT_EQ(a.cold_users(), 1u);
  EXPECT_DOUBLE_EQ(a.prior(0, 7), 0.1);
  EXPECT_DOUBLE_EQ(a.prior(0, 2), 0.0);
  EXPECT_DOUBLE_EQ(a.prior(2, 5), 0.1);
}

TEST(Init, MissingClusterIsInconsistent) {
  const auto g = build_dense_graph({{0, 0, 0}, {0, 1, 0}}, 1, 2, 1);
  EXPECT_THROW(build_init(g, cluster_map({0}, 1), 0.1, 0.01), Inconsistency);
  EXPECT_THROW(build_init(g, cluster_map({0, kNoId}, 1), 0.1, 0.01), Inconsistency);
  EXPECT_THROW(build_init(g, cluster_map({0, 0}, 1), 0.0, 0.01), InvalidArgument);
}

TEST(Init, ConservationOnRandomTrain) {
  std::mt19937_64 rng(3);
  std::vector<Edge> edges;
  for (int e = 0; e < 10000; ++e)
    edges.push_back({static_cast<UserId>(rng() % 500), static_cast<ItemId>(rng() % 300), 0});
  const auto g = build_dense_graph(edges, 500, 300, 1);
  std::vector<InterestId> map(300);
  for (auto& k : map) k = static_cast<InterestId>(rng() % 20);
  const auto a = build_init(g, cluster_map(map, 20), 0.1, 0.01);
  std::uint64_t su = 0, sk = 0;
  for (auto n : a.user_totals) su += n;
  for (auto n : a.interest_totals) sk += n;
  EXPECT_EQ(su, 10000u);
  EXPECT_EQ(sk, 10000u);
  EXPECT_EQ(a.user_interest.total(), 10000u);
  EXPECT_EQ(a.item_interest.total(), 10000u);
  for (std::size_t u = 0; u < 500; ++u) {
    EXPECT_EQ(a.user_interest.row_total(u), a.user_totals[u]);
    EXPECT_LE(a.support_size(static_cast<UserId>(u)), std::min<std::size_t>(20, a.user_totals[u]));
    for (InterestId k : a.alpha_support(static_cast<UserId>(u))) EXPECT_GT(a.user_interest.get(u, k), 0u);
  }
}

TEST(Init, MleMixtureExamples) {
  // u0: k1 x3, k2 x1. interest 3 has a single item.
  const auto g = build_dense_graph({{0, 0, 0}, {0, 1, 0}, {0, 0, 0}, {0, 2, 0}, {1, 3, 0}}, 2, 4, 1);
  const auto a = build_init(g, cluster_map({1, 1, 2, 3}, 4), 0.1, 0.01);
  const auto m = mle_mixture(a);
  EXPECT_DOUBLE_EQ(m.p_interest(0, 1), 0.75);
  EXPECT_DOUBLE_EQ(m.p_interest(0, 2), 0.25);
  EXPECT_DOUBLE_EQ(m.p_item_in_interest(3, 3), 1.0);
  EXPECT_TRUE(m.p_i_given_k[0].empty());
}

TEST(Init, MleMixtureMatchesBruteForce) {
  std::mt19937_64 rng(11);
  std::vector<Edge> edges;
  for (int e = 0; e < 2000; ++e) edges.push_back({static_cast<UserId>(rng() % 40), static_cast<ItemId>(rng() % 60), 0});
  const auto g = build_dense_graph(edges, 40, 60, 1);
  std::vector<InterestId> map(60);
  for (auto& k : map) k = static_cast<InterestId>(rng() % 6);
  const auto a = build_init(g, cluster_map(map, 6), 0.1, 0.01);
  const auto m = mle_mixture(a);
  // Oracle from the raw edges.
  std::vector<std::vector<double>> nuk(40, std::vector<double>(6, 0)), nik(60, std::vector<double>(6, 0));
  std::vector<double> nu(40, 0), nk(6, 0);
  for (const auto& e : edges) {
    const auto k = map[e.item];
    ++nuk[e.user][k], ++nu[e.user], ++nik[e.item][k], ++nk[k];
  }
  for (UserId u = 0; u < 40; ++u)
    for (ItemId i = 0; i < 60; ++i) {
      double p = 0.0;
      for (std::size_t k = 0; k < 6; ++k)
        if (nu[u] > 0 && nk[k] > 0) p += nuk[u][k] / nu[u] * (nik[i][k] / nk[k]);
      EXPECT_NEAR(m.p_item(u, i), p, 1e-15);
    }
}

TEST(Init, SaveLoadRoundTrip) {
  const auto g = build_dense_graph({{0, 0, 0}, {0, 1, 0}, {1, 1, 0}, {2, 3, 0}}, 4, 4, 1);
  const auto a = build_init(g, cluster_map({0, 1, 1, 2}, 3), 0.25, 0.05);
  const auto dir = std::filesystem::temp_directory_path() / ("micro_init_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  save_init(dir, a);
  const auto b = load_init(dir);
  EXPECT_EQ(b.num_users, a.num_users);
  EXPECT_EQ(b.num_interests, a.num_interests);
  EXPECT_DOUBLE_EQ(b.alpha, 0.25);
  EXPECT_DOUBLE_EQ(b.beta, 0.05);
  EXPECT_EQ(b.item_to_interest, a.item_to_interest);
  EXPECT_TRUE(b.user_interest == a.user_interest);
  EXPECT_TRUE(b.item_interest == a.item_interest);
  EXPECT_EQ(b.user_totals, a.user_totals);
  EXPECT_EQ(b.interest_totals, a.interest_totals);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(load_init(dir), MissingArtifact);
}
