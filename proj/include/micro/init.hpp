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

#include <filesystem>
#include <span>
#include <vector>

#include <fmt/core.h>

#include "micro/count_table.hpp"
#include "micro/graph.hpp"
#include "micro/io.hpp"
#include "micro/log.hpp"
#include "micro/skmeans.hpp"

namespace micro {

/// t=0 state handed to the per-chunk sampler: every train engagement takes the
/// interest of its item's cluster.
///
/// Invariants: user_interest row sums equal user_totals; the support of user u
/// is exactly the set of interests with positive N_uk0; alpha, beta > 0.
struct InitArtifact {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t num_interests = 0;
  double alpha = 0.1;
  double beta = 0.01;
  std::vector<InterestId> item_to_interest;  // cluster map, kNoId for unclustered items
  std::vector<std::uint64_t> user_totals;    // N_u0
  CountTable user_interest;                  // N_uk0, rows = users
  std::vector<std::uint64_t> interest_totals;  // N_k0
  CountTable item_interest;                  // N_ik0, rows = items

  /// Interests with N_uk0 > 0, ascending. Empty for cold users.
  std::vector<InterestId> alpha_support(UserId u) const {
    std::vector<InterestId> s;
    if (u >= num_users) return s;
    for (const auto& e : user_interest.row(u)) s.push_back(e.col);
    return s;
  }

  std::size_t support_size(UserId u) const { return u < num_users ? user_interest.row(u).size() : 0; }
  bool is_cold(UserId u) const { return support_size(u) == 0; }

  /// Prior mass alpha_u(k).
  double prior(UserId u, InterestId k) const {
    if (is_cold(u)) return alpha;
    return user_interest.get(u, k) > 0 ? alpha : 0.0;
  }

  std::size_t cold_users() const {
    std::size_t n = 0;
    for (std::size_t u = 0; u < num_users; ++u) n += is_cold(static_cast<UserId>(u));
    return n;
  }
};

/// Builds the artifact from raw t=0 user-interest engagement pairs.
inline InitArtifact build_init_from_assignments(std::size_t num_users, std::size_t num_items, std::size_t K,
                                                std::span<const Engagement> engagements,
                                                std::span<const InterestId> interests, double alpha, double beta) {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw InvalidArgument("alpha and beta must be positive");
  if (engagements.size() != interests.size()) throw InvalidArgument("one interest per engagement required");
  InitArtifact a;
  a.num_users = num_users;
  a.num_items = num_items;
  a.num_interests = K;
  a.alpha = alpha;
  a.beta = beta;
  a.user_totals.assign(num_users, 0);
  a.interest_totals.assign(K, 0);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> uk, ik;
  uk.reserve(engagements.size());
  ik.reserve(engagements.size());
  for (std::size_t j = 0; j < engagements.size(); ++j) {
    const auto& e = engagements[j];
    const InterestId k = interests[j];
    if (k >= K) throw Inconsistency("interest id out of range");
    ++a.user_totals[e.user];
    ++a.interest_totals[k];
    uk.emplace_back(e.user, k);
    ik.emplace_back(e.item, k);
  }
  a.user_interest = CountTable::from_pairs(num_users, std::move(uk));
  a.item_interest = CountTable::from_pairs(num_items, std::move(ik));
  return a;
}

inline InitArtifact build_init(const EngagementGraph& train, const ClusterAssignment& cluster, double alpha,
                               double beta) {
  std::vector<Engagement> es;
  std::vector<InterestId> ks;
  es.reserve(train.edges.size());
  ks.reserve(train.edges.size());
  for (const auto& e : train.edges) {
    if (e.item >= cluster.item_to_interest.size() || cluster.item_to_interest[e.item] == kNoId)
      throw Inconsistency(fmt::format("train item {} has no interest cluster", e.item));
    es.push_back({e.user, e.item});
    ks.push_back(cluster.item_to_interest[e.item]);
  }
  InitArtifact a = build_init_from_assignments(train.num_users, train.num_items, cluster.num_interests, es, ks,
                                               alpha, beta);
  a.item_to_interest = cluster.item_to_interest;
  a.item_to_interest.resize(train.num_items, kNoId);
  const std::size_t cold = a.cold_users();
  log_info("init_built", "users={} interests={} engagements={} cold_users={}", a.num_users, a.num_interests,
           es.size(), cold);
  return a;
}

/// Counting MLE mixture p(i|u) = sum_k p(k|u) p(i|k) over the t=0 counts.
struct MleMixture {
  struct Weighted {
    std::uint32_t id;
    double p;
  };
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t num_interests = 0;
  std::vector<std::vector<Weighted>> p_k_given_u;  // per user, ascending interest
  std::vector<std::vector<Weighted>> p_i_given_k;  // per interest, descending p then ascending item

  double p_interest(UserId u, InterestId k) const {
    for (const auto& w : p_k_given_u[u])
      if (w.id == k) return w.p;
    return 0.0;
  }

  double p_item_in_interest(InterestId k, ItemId i) const {
    for (const auto& w : p_i_given_k[k])
      if (w.id == i) return w.p;
    return 0.0;
  }

  double p_item(UserId u, ItemId i) const {
    double s = 0.0;
    for (const auto& w : p_k_given_u[u]) s += w.p * p_item_in_interest(w.id, i);
    return s;
  }
};

inline MleMixture mle_mixture(const InitArtifact& init) {
  MleMixture m;
  m.num_users = init.num_users;
  m.num_items = init.num_items;
  m.num_interests = init.num_interests;
  m.p_k_given_u.resize(init.num_users);
  for (std::size_t u = 0; u < init.num_users; ++u) {
    const double total = static_cast<double>(init.user_totals[u]);
    if (total == 0.0) continue;
    for (const auto& e : init.user_interest.row(u))
      m.p_k_given_u[u].push_back({e.col, static_cast<double>(e.count) / total});
  }
  m.p_i_given_k.resize(init.num_interests);
  for (std::size_t i = 0; i < init.num_items; ++i) {
    for (const auto& e : init.item_interest.row(i)) {
      const double total = static_cast<double>(init.interest_totals[e.col]);
      m.p_i_given_k[e.col].push_back({static_cast<std::uint32_t>(i), static_cast<double>(e.count) / total});
    }
  }
  for (auto& list : m.p_i_given_k)
    std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.p != b.p ? a.p > b.p : a.id < b.id; });
  return m;
}

/// Text bundle in `dir`: meta.txt, clusters.tsv, user_interest.tsv (u k count)
/// and item_interest.tsv (i k count). Totals are recomputed on load.
inline void save_init(const std::filesystem::path& dir, const InitArtifact& a) {
  io::atomic_write(dir / "meta.txt",
                   fmt::format("format micro-init\nversion 1\nusers {}\nitems {}\ninterests {}\nalpha {:.17g}\nbeta {:.17g}\n",
                               a.num_users, a.num_items, a.num_interests, a.alpha, a.beta));
  std::string clusters;
  for (std::size_t i = 0; i < a.item_to_interest.size(); ++i)
    if (a.item_to_interest[i] != kNoId) clusters += fmt::format("{}\t{}\n", i, a.item_to_interest[i]);
  io::atomic_write(dir / "clusters.tsv", clusters);
  auto dump = [](const CountTable& t) {
    std::string s;
    for (std::size_t r = 0; r < t.rows(); ++r)
      for (const auto& e : t.row(r)) s += fmt::format("{}\t{}\t{}\n", r, e.col, e.count);
    return s;
  };
  io::atomic_write(dir / "user_interest.tsv", dump(a.user_interest));
  io::atomic_write(dir / "item_interest.tsv", dump(a.item_interest));
}

inline InitArtifact load_init(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "meta.txt"))
    throw MissingArtifact("no init artifact in " + dir.string() + "; run `micro init` first");
  InitArtifact a;
  io::for_each_line(dir / "meta.txt", [&](std::size_t number, std::string_view line) {
    const auto f = io::split_fields(line, ' ');
    if (f.size() != 2) throw ParseError("bad meta row", number);
    if (f[0] == "version" && f[1] != "1") throw Error("unsupported init artifact version");
    if (f[0] == "users") a.num_users = io::parse_or_throw<std::size_t>(f[1], number, "users");
    if (f[0] == "items") a.num_items = io::parse_or_throw<std::size_t>(f[1], number, "items");
    if (f[0] == "interests") a.num_interests = io::parse_or_throw<std::size_t>(f[1], number, "interests");
    if (f[0] == "alpha") a.alpha = io::parse_or_throw<double>(f[1], number, "alpha");
    if (f[0] == "beta") a.beta = io::parse_or_throw<double>(f[1], number, "beta");
  });
  a.item_to_interest.assign(a.num_items, kNoId);
  io::for_each_line(dir / "clusters.tsv", [&](std::size_t number, std::string_view line) {
    const auto f = io::split_fields(line, ' ');
    if (f.size() != 2) throw ParseError("bad cluster row", number);
    const auto i = io::parse_or_throw<std::size_t>(f[0], number, "item");
    if (i >= a.num_items) throw ParseError("item out of range", number);
    a.item_to_interest[i] = io::parse_or_throw<InterestId>(f[1], number, "interest");
  });
  auto read = [&](const char* name, std::size_t rows) {
    std::vector<std::tuple<std::uint32_t, std::uint32_t, Count>> triples;
    io::for_each_line(dir / name, [&](std::size_t number, std::string_view line) {
      const auto f = io::split_fields(line, ' ');
      if (f.size() != 3) throw ParseError(std::string("bad row in ") + name, number);
      const auto r = io::parse_or_throw<std::uint32_t>(f[0], number, "row");
      const auto c = io::parse_or_throw<std::uint32_t>(f[1], number, "interest");
      if (r >= rows || c >= a.num_interests) throw ParseError("index out of range", number);
      triples.emplace_back(r, c, io::parse_or_throw<Count>(f[2], number, "count"));
    });
    return CountTable::from_triples(rows, std::move(triples));
  };
  a.user_interest = read("user_interest.tsv", a.num_users);
  a.item_interest = read("item_interest.tsv", a.num_items);
  a.user_totals.assign(a.num_users, 0);
  for (std::size_t u = 0; u < a.num_users; ++u) a.user_totals[u] = a.user_interest.row_total(u);
  a.interest_totals.assign(a.num_interests, 0);
  for (std::size_t i = 0; i < a.num_items; ++i)
    for (const auto& e : a.item_interest.row(i)) a.interest_totals[e.col] += e.count;
  if (a.user_interest.total() != a.item_interest.total())
    throw Inconsistency("init artifact user and item counts disagree");
  return a;
}

}  // namespace micro
