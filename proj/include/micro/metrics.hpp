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
#include <array>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "micro/graph.hpp"
#include "micro/retrieval.hpp"

namespace micro {

struct Query {
  UserId user = 0;
  ChunkId chunk = 0;           // the chunk whose engagements are the ground truth
  std::vector<ItemId> truth;   // deduplicated, ascending
};

struct QuerySet {
  std::vector<Query> queries;
};

/// One query per (user, chunk) with at least one engagement in that chunk.
inline QuerySet build_queries(std::span<const ChunkSlice> chunks) {
  QuerySet qs;
  for (const auto& slice : chunks) {
    for (std::size_t x = 0; x < slice.users.size(); ++x) {
      Query q{slice.users[x], slice.chunk, {}};
      for (const auto& e : slice.user_engagements(x)) q.truth.push_back(e.item);
      std::sort(q.truth.begin(), q.truth.end());
      q.truth.erase(std::unique(q.truth.begin(), q.truth.end()), q.truth.end());
      qs.queries.push_back(std::move(q));
    }
  }
  return qs;
}

namespace detail {
inline bool relevant(std::span<const ItemId> truth, ItemId i) { return std::binary_search(truth.begin(), truth.end(), i); }
}  // namespace detail

// The metric functions take the ranked candidate ids (already cut at M) and a
// sorted, deduplicated truth set.

inline double recall_at_m(std::span<const ItemId> ranked, std::span<const ItemId> truth) {
  std::size_t hits = 0;
  for (ItemId i : ranked) hits += detail::relevant(truth, i);
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

inline double mrr_at_m(std::span<const ItemId> ranked, std::span<const ItemId> truth) {
  for (std::size_t r = 0; r < ranked.size(); ++r)
    if (detail::relevant(truth, ranked[r])) return 1.0 / static_cast<double>(r + 1);
  return 0.0;
}

/// Binary gains, log2(rank + 1) discount; the ideal ranking puts
/// min(|truth|, |ranked cutoff|) relevant items first.
inline double ndcg_at_m(std::span<const ItemId> ranked, std::span<const ItemId> truth, std::size_t M) {
  double dcg = 0.0;
  for (std::size_t r = 0; r < ranked.size() && r < M; ++r)
    if (detail::relevant(truth, ranked[r])) dcg += 1.0 / std::log2(static_cast<double>(r + 2));
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min(truth.size(), M); ++r) idcg += 1.0 / std::log2(static_cast<double>(r + 2));
  return idcg > 0.0 ? dcg / idcg : 0.0;
}

struct QueryMetrics {
  double recall = 0.0;
  double mrr = 0.0;
  double ndcg = 0.0;
};

inline QueryMetrics score_query(const CandidateList& cands, const Query& q, std::size_t M) {
  std::vector<ItemId> ranked = cands.item_ids();
  if (ranked.size() > M) ranked.resize(M);
  return {recall_at_m(ranked, q.truth), mrr_at_m(ranked, q.truth), ndcg_at_m(ranked, q.truth, M)};
}

struct MetricMeans {
  double recall = 0.0;
  double mrr = 0.0;
  double ndcg = 0.0;
  std::size_t queries = 0;
};

/// Per-chunk and overall means for one (method, M).
struct MetricsSummary {
  std::map<ChunkId, MetricMeans> per_chunk;
  MetricMeans overall;
};

/// Unweighted means within each chunk; overall is the mean over all queries.
inline MetricsSummary aggregate(std::span<const QueryMetrics> metrics, const QuerySet& qs) {
  if (metrics.size() != qs.queries.size()) throw InvalidArgument("one metrics row per query required");
  MetricsSummary s;
  std::map<ChunkId, std::array<double, 3>> sums;
  double tr = 0.0, tm = 0.0, tn = 0.0;
  for (std::size_t q = 0; q < metrics.size(); ++q) {
    auto& acc = sums[qs.queries[q].chunk];
    acc[0] += metrics[q].recall;
    acc[1] += metrics[q].mrr;
    acc[2] += metrics[q].ndcg;
    ++s.per_chunk[qs.queries[q].chunk].queries;
    tr += metrics[q].recall;
    tm += metrics[q].mrr;
    tn += metrics[q].ndcg;
  }
  for (auto& [chunk, m] : s.per_chunk) {
    const double n = static_cast<double>(m.queries);
    m.recall = sums[chunk][0] / n;
    m.mrr = sums[chunk][1] / n;
    m.ndcg = sums[chunk][2] / n;
  }
  s.overall.queries = metrics.size();
  if (!metrics.empty()) {
    const double n = static_cast<double>(metrics.size());
    s.overall = {tr / n, tm / n, tn / n, metrics.size()};
  }
  return s;
}

/// All summaries of a run keyed by (method, M).
struct MetricsReport {
  std::map<std::pair<std::string, std::size_t>, MetricsSummary> summaries;
};

/// Delimited report: `method M chunk metric value queries`, tab separated,
/// with `overall` in the chunk column for the overall block.
inline std::string format_report(const MetricsReport& report) {
  std::string s = "method\tM\tchunk\tmetric\tvalue\tqueries\n";
  auto rows = [&](const std::string& method, std::size_t M, const std::string& chunk, const MetricMeans& m) {
    s += fmt::format("{}\t{}\t{}\trecall\t{:.17g}\t{}\n", method, M, chunk, m.recall, m.queries);
    s += fmt::format("{}\t{}\t{}\tmrr\t{:.17g}\t{}\n", method, M, chunk, m.mrr, m.queries);
    s += fmt::format("{}\t{}\t{}\tndcg\t{:.17g}\t{}\n", method, M, chunk, m.ndcg, m.queries);
  };
  for (const auto& [key, summary] : report.summaries)
    for (const auto& [chunk, m] : summary.per_chunk) rows(key.first, key.second, std::to_string(chunk), m);
  for (const auto& [key, summary] : report.summaries) rows(key.first, key.second, "overall", summary.overall);
  return s;
}

inline MetricsReport parse_report(const std::filesystem::path& path) {
  MetricsReport r;
  io::for_each_line(path, [&](std::size_t number, std::string_view line) {
    if (number == 1 || line.empty()) return;
    const auto f = io::split_fields(line, '\t');
    if (f.size() != 6) throw ParseError("expected 6 report fields", number);
    const std::string method(f[0]);
    const auto M = io::parse_or_throw<std::size_t>(f[1], number, "M");
    const auto value = io::parse_or_throw<double>(f[4], number, "value");
    const auto queries = io::parse_or_throw<std::size_t>(f[5], number, "queries");
    auto& summary = r.summaries[{method, M}];
    MetricMeans& m = f[2] == "overall" ? summary.overall
                                       : summary.per_chunk[io::parse_or_throw<ChunkId>(f[2], number, "chunk")];
    m.queries = queries;
    if (f[3] == "recall") m.recall = value;
    else if (f[3] == "mrr") m.mrr = value;
    else if (f[3] == "ndcg") m.ndcg = value;
    else throw ParseError("unknown metric", number);
  });
  return r;
}

}  // namespace micro
