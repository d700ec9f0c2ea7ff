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
#include <map>

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace micro;

TEST(Synth, SingleInterestItemFrequencies) {
  SynthSpec spec;
  spec.num_users = 1000;
  spec.num_items = 20;
  spec.num_interests = 1;
  spec.support_size = 1;
  spec.num_chunks = 1;
  spec.engagements_per_user = 100;
  spec.beta_gen = 2.0;
  spec.seed = 3;
  const auto data = generate(spec);
  for (auto k : data.truth.z[0]) ASSERT_EQ(k, 0u);
  std::vector<double> observed(20, 0.0);
  for (const auto& e : data.graph.edges) ++observed[e.item];
  const double n = static_cast<double>(data.graph.edges.size());
  EXPECT_EQ(n, 100000.0);
  double chi2 = 0.0;
  for (const auto& [i, p] : data.truth.phi[0][0]) {
    const double expected = n * p;
    chi2 += (observed[i] - expected) * (observed[i] - expected) / expected;
  }
  EXPECT_LT(chi2, 36.191);  // chi-square(19) at p = 0.01
}

TEST(Synth, PointMassThetaGivesIdenticalAssignments) {
  SynthSpec spec;
  spec.num_users = 50;
  spec.num_interests = 6;
  spec.support_size = 1;
  spec.num_chunks = 2;
  const auto data = generate(spec);
  const auto slices = data.graph.slices();
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t j = 0; j < slices[t].size(); ++j)
      EXPECT_EQ(data.truth.z[t][j], data.truth.support[slices[t].engagements[j].user][0]);
}

TEST(Synth, DistributionsNormalizedAndSupportsNonEmpty) {
  SynthSpec spec;
  spec.num_interests = 7;
  spec.support_size = 3;
  spec.separated = false;
  spec.poisson_engagements = true;
  const auto data = generate(spec);
  for (std::size_t u = 0; u < spec.num_users; ++u) {
    EXPECT_EQ(data.truth.support[u].size(), 3u);
    double s = 0.0;
    for (double p : data.truth.theta[u]) s += p;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  for (const auto& per_t : data.truth.phi)
    for (const auto& phi : per_t) {
      double s = 0.0;
      for (const auto& [i, p] : phi) s += p;
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  EXPECT_NO_THROW(data.graph.validate());
}

TEST(Synth, SeparatedBlocksAndDrift) {
  SynthSpec spec;
  spec.drift = PhiDrift::kStatic;
  const auto data = generate(spec);
  const auto slices = data.graph.slices();
  for (std::size_t t = 0; t < slices.size(); ++t)
    for (std::size_t j = 0; j < slices[t].size(); ++j)
      EXPECT_EQ(slices[t].engagements[j].item * spec.num_interests / spec.num_items, data.truth.z[t][j]);
  for (std::size_t k = 0; k < spec.num_interests; ++k)
    EXPECT_EQ(data.truth.phi[0][k], data.truth.phi[2][k]);
  spec.drift = PhiDrift::kFresh;
  const auto fresh = generate(spec);
  EXPECT_NE(fresh.truth.phi[0][0], fresh.truth.phi[1][0]);
}

TEST(Synth, SeedDeterminism) {
  SynthSpec spec;
  spec.seed = 77;
  const auto a = generate(spec), b = generate(spec);
  ASSERT_EQ(a.graph.edges.size(), b.graph.edges.size());
  for (std::size_t e = 0; e < a.graph.edges.size(); ++e) {
    EXPECT_EQ(a.graph.edges[e].user, b.graph.edges[e].user);
    EXPECT_EQ(a.graph.edges[e].item, b.graph.edges[e].item);
  }
  EXPECT_EQ(a.truth.z, b.truth.z);
  spec.seed = 78;
  EXPECT_NE(generate(spec).truth.z, a.truth.z);
}

TEST(Synth, EmpiricalMixturesConvergeToTheta) {
  SynthSpec spec;
  spec.num_users = 20;
  spec.num_interests = 4;
  spec.support_size = 3;
  spec.num_chunks = 1;
  spec.engagements_per_user = 20000;
  const auto data = generate(spec);
  const auto slice = data.graph.slices()[0];
  for (std::size_t x = 0; x < slice.users.size(); ++x) {
    std::vector<double> f(4, 0.0);
    for (std::size_t j = slice.offsets[x]; j < slice.offsets[x + 1]; ++j) f[data.truth.z[0][j]] += 1.0 / 20000;
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(f[k], data.truth.theta[slice.users[x]][k], 0.02);
  }
}

TEST(Synth, RecoveryOfTruthAndRandomAssignments) {
  SynthSpec spec;
  spec.num_chunks = 2;
  spec.support_size = 5;
  const auto data = generate(spec);
  // no seeded chunks: every user is cold, so any labeling is admissible
  const auto init = init_from_truth(data, 0, 0.1, 0.01, spec);
  const auto slice = data.graph.slices()[1];
  const auto truth_model = ChunkModel::from_assignments(slice, init, nullptr, data.truth.z[1]);
  auto r = score_recovery(data.truth, {&truth_model}, init);
  EXPECT_EQ(r.chunks[0].z_accuracy, 1.0);

  std::mt19937_64 rng(1);
  std::vector<InterestId> random(slice.size());
  for (auto& k : random) k = static_cast<InterestId>(rng() % 5);
  const auto random_model = ChunkModel::from_assignments(slice, init, nullptr, random);
  r = score_recovery(data.truth, {&random_model}, init);
  EXPECT_NEAR(r.chunks[0].z_accuracy, 0.2, 0.03);

  const auto wrong = ChunkModel::from_assignments(data.graph.slices()[0], init, nullptr, data.truth.z[0]);
  ChunkModel relabeled = wrong;
  relabeled.chunk = 7;  // no such chunk in the truth
  EXPECT_THROW(score_recovery(data.truth, {&relabeled}, init), InvalidArgument);
}

TEST(Synth, HungarianRecoversPermutation) {
  const std::vector<InterestId> truth = {0, 0, 1, 1, 2, 2, 2, 3};
  const std::vector<InterestId> perm = {2, 0, 3, 1};
  std::vector<InterestId> fitted;
  for (auto k : truth) fitted.push_back(perm[k]);
  EXPECT_EQ(permuted_accuracy(fitted, truth, 4), 1.0);
  std::vector<std::vector<double>> confusion = {{0, 5, 1}, {4, 0, 0}, {0, 1, 3}};
  EXPECT_EQ(best_label_permutation(confusion), (std::vector<InterestId>{1, 0, 2}));
}

TEST(Synth, PlantAndRecover) {
  SynthSpec spec;  // K=5, U=200, I=500, N=20, separated blocks
  spec.num_chunks = 3;
  spec.seed = 2024;
  const auto data = generate(spec);
  const auto init = init_from_truth(data, 1, 0.1, 0.01, spec);
  const auto slices = data.graph.slices();
  std::vector<ChunkModel> fits;
  SamplerConfig cfg;
  cfg.seed = 1;
  for (std::size_t t = 1; t < 3; ++t) fits.push_back(fit_chunk(slices[t], init, cfg));
  std::vector<const ChunkModel*> ptrs;
  for (const auto& f : fits) ptrs.push_back(&f);
  const auto r = score_recovery(data.truth, ptrs, init);
  EXPECT_GE(r.min_accuracy(), 0.8);
  EXPECT_LE(r.max_mean_tv(), 0.15);
}

TEST(Synth, SaveWritesEdgeListAndTruth) {
  SynthSpec spec;
  spec.num_users = 10;
  spec.num_items = 20;
  const auto data = generate(spec);
  const auto dir = std::filesystem::temp_directory_path() / ("micro_synth_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  save_synth(dir, data);
  const auto g = load_edge_list(dir / "edges.tsv");
  EXPECT_EQ(g.edges.size(), data.graph.edges.size());
  EXPECT_TRUE(std::filesystem::exists(dir / "theta.tsv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "phi.tsv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "z.tsv"));
  std::filesystem::remove_all(dir);
}
