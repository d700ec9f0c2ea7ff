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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include <fmt/core.h>

#include "micro/graph.hpp"
#include "micro/init.hpp"
#include "micro/io.hpp"
#include "micro/sampler.hpp"

namespace micro {

enum class PhiDrift {
  kFresh,   // a new phi_{k,t} is drawn for every chunk
  kStatic,  // one phi_k shared by all chunks
};

struct SynthSpec {
  std::size_t num_users = 200;
  std::size_t num_items = 500;
  std::size_t num_interests = 5;
  std::size_t num_chunks = 4;
  std::size_t engagements_per_user = 20;
  bool poisson_engagements = false;    // N_{u,t} ~ Poisson(engagements_per_user) instead of fixed
  std::size_t support_size = 2;        // interests with positive theta_u mass
  double theta_concentration = 1.0;    // Dirichlet concentration on the support
  double beta_gen = 0.1;               // Dirichlet concentration of each phi_{k,t}
  bool separated = true;               // each interest draws from its own disjoint item block
  PhiDrift drift = PhiDrift::kFresh;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_users == 0 || num_items == 0 || num_interests == 0 || num_chunks == 0)
      throw InvalidArgument("synth sizes must be positive");
    if (support_size == 0 || support_size > num_interests) throw InvalidArgument("support size must be in [1, K]");
    if (separated && num_items < num_interests) throw InvalidArgument("separated blocks need I >= K");
    if (!(theta_concentration > 0.0) || !(beta_gen > 0.0)) throw InvalidArgument("concentrations must be positive");
  }
};

struct SynthTruth {
  std::size_t num_interests = 0;
  std::vector<std::vector<double>> theta;               // U x K, dense
  std::vector<std::vector<InterestId>> support;         // per user, ascending
  // phi[t][k]: (item, probability) over the interest's item range
  std::vector<std::vector<std::vector<std::pair<ItemId, double>>>> phi;
  std::vector<std::vector<InterestId>> z;               // per chunk, in slice order
};

struct SynthData {
  EngagementGraph graph;
  SynthTruth truth;
};

namespace detail {

template <typename Rng>
std::vector<double> dirichlet(Rng& rng, std::size_t n, double concentration) {
  std::gamma_distribution<double> gamma(concentration, 1.0);
  std::vector<double> p(n);
  double total = 0.0;
  for (auto& x : p) total += (x = gamma(rng));
  if (!(total > 0.0)) {
    std::fill(p.begin(), p.end(), 0.0);
    p[uniform_index(rng, n)] = 1.0;
    return p;
  }
  for (auto& x : p) x /= total;
  return p;
}

template <typename Rng>
std::size_t categorical(Rng& rng, const std::vector<double>& cumulative) {
  const double target = uniform01(rng) * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

inline std::pair<ItemId, ItemId> item_block(const SynthSpec& spec, std::size_t k) {
  if (!spec.separated) return {0, static_cast<ItemId>(spec.num_items)};
  return {static_cast<ItemId>(k * spec.num_items / spec.num_interests),
          static_cast<ItemId>((k + 1) * spec.num_items / spec.num_interests)};
}

}  // namespace detail

/// Forward-samples the generative process: theta_u ~ Dir on a random support,
/// phi_{k,t} ~ Dir(beta_gen) per chunk, then for each engagement z ~ theta_u
/// and item ~ phi_{z,t}. Chunk edges are emitted grouped by ascending user.
inline SynthData generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t U = spec.num_users, K = spec.num_interests, T = spec.num_chunks;
  std::mt19937_64 rng(spec.seed);
  SynthData out;
  SynthTruth& truth = out.truth;
  truth.num_interests = K;
  truth.theta.assign(U, std::vector<double>(K, 0.0));
  truth.support.resize(U);
  std::vector<InterestId> all(K);
  std::iota(all.begin(), all.end(), InterestId{0});
  for (std::size_t u = 0; u < U; ++u) {
    std::vector<InterestId> pool = all;
    for (std::size_t s = 0; s < spec.support_size; ++s)
      std::swap(pool[s], pool[s + uniform_index(rng, K - s)]);
    truth.support[u].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(spec.support_size));
    std::sort(truth.support[u].begin(), truth.support[u].end());
    const auto w = detail::dirichlet(rng, spec.support_size, spec.theta_concentration);
    for (std::size_t s = 0; s < spec.support_size; ++s) truth.theta[u][truth.support[u][s]] = w[s];
  }

  truth.phi.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    truth.phi[t].resize(K);
    for (std::size_t k = 0; k < K; ++k) {
      if (spec.drift == PhiDrift::kStatic && t > 0) {
        truth.phi[t][k] = truth.phi[0][k];
        continue;
      }
      const auto [lo, hi] = detail::item_block(spec, k);
      const auto w = detail::dirichlet(rng, hi - lo, spec.beta_gen);
      for (ItemId i = lo; i < hi; ++i) truth.phi[t][k].emplace_back(i, w[i - lo]);
    }
  }

  std::vector<std::vector<double>> theta_cum(U);
  for (std::size_t u = 0; u < U; ++u) {
    double c = 0.0;
    for (InterestId k : truth.support[u]) theta_cum[u].push_back(c += truth.theta[u][k]);
  }
  std::poisson_distribution<std::size_t> poisson(static_cast<double>(spec.engagements_per_user));
  std::vector<Edge> edges;
  truth.z.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<std::vector<double>> phi_cum(K);
    for (std::size_t k = 0; k < K; ++k) {
      double c = 0.0;
      for (const auto& [i, p] : truth.phi[t][k]) phi_cum[k].push_back(c += p);
    }
    for (std::size_t u = 0; u < U; ++u) {
      const std::size_t n = spec.poisson_engagements ? poisson(rng) : spec.engagements_per_user;
      for (std::size_t j = 0; j < n; ++j) {
        const InterestId k = truth.support[u][detail::categorical(rng, theta_cum[u])];
        const ItemId i = truth.phi[t][k][detail::categorical(rng, phi_cum[k])].first;
        edges.push_back({static_cast<UserId>(u), i, static_cast<ChunkId>(t)});
        truth.z[t].push_back(k);
      }
    }
  }
  out.graph = build_dense_graph(std::move(edges), U, spec.num_items, T);
  return out;
}

/// Init artifact whose t=0 counts come from the true assignments of chunks
/// [0, train_chunks). Item clusters are the interest blocks when separated.
inline InitArtifact init_from_truth(const SynthData& data, std::size_t train_chunks, double alpha, double beta,
                                    const SynthSpec& spec) {
  std::vector<Engagement> es;
  std::vector<InterestId> ks;
  const auto slices = data.graph.slices();
  for (std::size_t t = 0; t < train_chunks && t < slices.size(); ++t) {
    es.insert(es.end(), slices[t].engagements.begin(), slices[t].engagements.end());
    ks.insert(ks.end(), data.truth.z[t].begin(), data.truth.z[t].end());
  }
  InitArtifact a = build_init_from_assignments(data.graph.num_users, data.graph.num_items, data.truth.num_interests, es,
                                               ks, alpha, beta);
  a.item_to_interest.assign(data.graph.num_items, kNoId);
  if (spec.separated) {
    for (std::size_t k = 0; k < spec.num_interests; ++k) {
      const auto [lo, hi] = detail::item_block(spec, k);
      for (ItemId i = lo; i < hi; ++i) a.item_to_interest[i] = static_cast<InterestId>(k);
    }
  }
  return a;
}

struct ChunkRecovery {
  ChunkId chunk = 0;
  double z_accuracy = 0.0;
  double mean_theta_tv = 0.0;
  std::size_t engagements = 0;
  std::size_t users = 0;
};

struct RecoveryReport {
  std::vector<ChunkRecovery> chunks;

  double min_accuracy() const {
    double m = 1.0;
    for (const auto& c : chunks) m = std::min(m, c.z_accuracy);
    return m;
  }
  double max_mean_tv() const {
    double m = 0.0;
    for (const auto& c : chunks) m = std::max(m, c.mean_theta_tv);
    return m;
  }
};

/// Total-variation distance between a user's smoothed fitted mixture and truth.
inline double theta_total_variation(UserId u, const ChunkModel& m, const InitArtifact& init, const SynthTruth& truth) {
  std::vector<double> fitted(truth.num_interests, 0.0);
  for (const auto& [k, p] : user_mixture(u, m, init)) fitted[k] = p;
  double tv = 0.0;
  for (std::size_t k = 0; k < truth.num_interests; ++k) tv += std::abs(fitted[k] - truth.theta[u][k]);
  return 0.5 * tv;
}

/// Exact-match z recovery and mean per-user theta TV for each fitted chunk.
/// Labels are compared as-is (the sampler is anchored by truth supports).
inline RecoveryReport score_recovery(const SynthTruth& truth, const std::vector<const ChunkModel*>& fitted,
                                     const InitArtifact& init) {
  RecoveryReport r;
  for (const ChunkModel* m : fitted) {
    if (m->chunk >= truth.z.size() || truth.z[m->chunk].size() != m->size())
      throw InvalidArgument(fmt::format("fitted chunk {} does not match the truth shape", m->chunk));
    ChunkRecovery c;
    c.chunk = m->chunk;
    c.engagements = m->size();
    std::size_t hits = 0;
    for (std::size_t j = 0; j < m->size(); ++j) hits += m->assignments()[j] == truth.z[m->chunk][j];
    c.z_accuracy = m->size() ? static_cast<double>(hits) / static_cast<double>(m->size()) : 1.0;
    double tv = 0.0;
    for (UserId u : m->chunk_users()) {
      if (init.is_cold(u)) continue;
      tv += theta_total_variation(u, *m, init, truth);
      ++c.users;
    }
    c.mean_theta_tv = c.users ? tv / static_cast<double>(c.users) : 0.0;
    r.chunks.push_back(c);
  }
  return r;
}

/// Label permutation maximizing matched counts in a K x K confusion matrix
/// (rows = fitted label, columns = true label), by the Hungarian method.
/// Returns perm with perm[fitted] = true label.
inline std::vector<InterestId> best_label_permutation(const std::vector<std::vector<double>>& confusion) {
  const std::size_t n = confusion.size();
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials formulation minimizing cost = -confusion.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -confusion[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<InterestId> perm(n, 0);
  for (std::size_t j = 1; j <= n; ++j) perm[p[j] - 1] = static_cast<InterestId>(j - 1);
  return perm;
}

/// z recovery after the best relabeling, for fits not anchored to truth labels.
inline double permuted_accuracy(std::span<const InterestId> fitted, std::span<const InterestId> truth, std::size_t K) {
  if (fitted.size() != truth.size()) throw InvalidArgument("assignment lengths differ");
  std::vector<std::vector<double>> confusion(K, std::vector<double>(K, 0.0));
  for (std::size_t j = 0; j < fitted.size(); ++j) confusion[fitted[j]][truth[j]] += 1.0;
  const auto perm = best_label_permutation(confusion);
  std::size_t hits = 0;
  for (std::size_t j = 0; j < fitted.size(); ++j) hits += perm[fitted[j]] == truth[j];
  return fitted.empty() ? 1.0 : static_cast<double>(hits) / static_cast<double>(fitted.size());
}

/// Writes `edges.tsv` (user item chunk) plus truth files `theta.tsv`
/// (u k p), `phi.tsv` (chunk k item p) and `z.tsv` (chunk index user item z).
inline void save_synth(const std::filesystem::path& dir, const SynthData& data) {
  std::string edges;
  for (const auto& e : data.graph.edges) edges += fmt::format("{}\t{}\t{}\n", e.user, e.item, e.chunk);
  io::atomic_write(dir / "edges.tsv", edges);
  std::string theta;
  for (std::size_t u = 0; u < data.truth.theta.size(); ++u)
    for (InterestId k : data.truth.support[u]) theta += fmt::format("{}\t{}\t{:.17g}\n", u, k, data.truth.theta[u][k]);
  io::atomic_write(dir / "theta.tsv", theta);
  std::string phi;
  for (std::size_t t = 0; t < data.truth.phi.size(); ++t)
    for (std::size_t k = 0; k < data.truth.phi[t].size(); ++k)
      for (const auto& [i, p] : data.truth.phi[t][k])
        if (p > 0.0) phi += fmt::format("{}\t{}\t{}\t{:.17g}\n", t, k, i, p);
  io::atomic_write(dir / "phi.tsv", phi);
  std::string z;
  const auto slices = data.graph.slices();
  for (std::size_t t = 0; t < slices.size(); ++t)
    for (std::size_t j = 0; j < slices[t].size(); ++j)
      z += fmt::format("{}\t{}\t{}\t{}\t{}\n", t, j, slices[t].engagements[j].user, slices[t].engagements[j].item,
                       data.truth.z[t][j]);
  io::atomic_write(dir / "z.tsv", z);
}

}  // namespace micro
