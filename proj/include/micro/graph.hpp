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
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <fmt/core.h>

#include "micro/common.hpp"
#include "micro/io.hpp"

namespace micro {

using RawId = std::int64_t;

struct Edge {
  UserId user;
  ItemId item;
  ChunkId chunk;
  friend bool operator==(const Edge&, const Edge&) = default;
};

struct RawEdge {
  RawId user;
  RawId item;
  RawId ordinal;
};

struct Engagement {
  UserId user;
  ItemId item;
  friend bool operator==(const Engagement&, const Engagement&) = default;
};

/// Bidirectional raw id <-> dense index map. Dense ids follow first appearance.
class IdMap {
 public:
  std::uint32_t intern(RawId raw) {
    auto [it, inserted] = to_dense_.try_emplace(raw, static_cast<std::uint32_t>(to_raw_.size()));
    if (inserted) to_raw_.push_back(raw);
    return it->second;
  }

  std::uint32_t dense(RawId raw) const {
    auto it = to_dense_.find(raw);
    return it == to_dense_.end() ? kNoId : it->second;
  }

  RawId raw(std::uint32_t dense) const { return to_raw_.at(dense); }
  std::size_t size() const { return to_raw_.size(); }
  const std::vector<RawId>& raw_ids() const { return to_raw_; }

  static IdMap identity(std::size_t n) {
    IdMap m;
    for (std::size_t i = 0; i < n; ++i) m.intern(static_cast<RawId>(i));
    return m;
  }

 private:
  std::vector<RawId> to_raw_;
  std::unordered_map<RawId, std::uint32_t> to_dense_;
};

/// The engagements of one time chunk, grouped by user in ascending user order.
/// Within a user the original edge order is kept. Duplicate pairs stay distinct.
struct ChunkSlice {
  ChunkId chunk = 0;
  std::vector<Engagement> engagements;
  std::vector<UserId> users;          // distinct users, ascending
  std::vector<std::size_t> offsets;   // users.size() + 1 boundaries into engagements

  std::size_t size() const { return engagements.size(); }
  bool empty() const { return engagements.empty(); }

  std::span<const Engagement> user_engagements(std::size_t user_index) const {
    return std::span<const Engagement>(engagements).subspan(
        offsets[user_index], offsets[user_index + 1] - offsets[user_index]);
  }

  /// Sorted distinct items of this chunk.
  std::vector<ItemId> item_pool() const {
    std::vector<ItemId> pool;
    pool.reserve(engagements.size());
    for (const auto& e : engagements) pool.push_back(e.item);
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    return pool;
  }

  static ChunkSlice build(ChunkId chunk, std::vector<Engagement> engagements) {
    ChunkSlice s;
    s.chunk = chunk;
    std::stable_sort(engagements.begin(), engagements.end(),
                     [](const Engagement& a, const Engagement& b) { return a.user < b.user; });
    s.engagements = std::move(engagements);
    s.offsets.push_back(0);
    for (std::size_t j = 0; j < s.engagements.size(); ++j) {
      if (j == 0 || s.engagements[j].user != s.engagements[j - 1].user) {
        if (j != 0) s.offsets.push_back(j);
        s.users.push_back(s.engagements[j].user);
      }
    }
    if (!s.engagements.empty()) s.offsets.push_back(s.engagements.size());
    return s;
  }
};

struct GraphStats {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t num_chunks = 0;
  std::size_t num_edges = 0;
  std::size_t active_users = 0;
  std::size_t active_items = 0;
  std::size_t min_user_degree = 0;
  std::size_t max_user_degree = 0;
  std::size_t min_item_degree = 0;
  std::size_t max_item_degree = 0;

  /// Key-value text, one `key value` pair per line.
  std::string to_text() const {
    return fmt::format(
        "users {}\nitems {}\nchunks {}\nedges {}\nactive_users {}\nactive_items {}\n"
        "min_user_degree {}\nmax_user_degree {}\nmin_item_degree {}\nmax_item_degree {}\n",
        num_users, num_items, num_chunks, num_edges, active_users, active_items, min_user_degree,
        max_user_degree, min_item_degree, max_item_degree);
  }
};

/// Time-chunked bipartite engagement graph with dense ids.
///
/// Invariants: every edge has user < num_users, item < num_items and
/// chunk < num_chunks; chunk ids are contiguous from 0. Immutable by convention
/// once built; all transforms return new graphs.
struct EngagementGraph {
  std::vector<Edge> edges;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t num_chunks = 0;
  IdMap users;
  IdMap items;
  std::vector<RawId> chunk_labels;  // raw ordinal (or regrouped label) per chunk

  std::size_t edge_count() const { return edges.size(); }

  std::vector<std::size_t> user_degrees() const {
    std::vector<std::size_t> deg(num_users, 0);
    for (const auto& e : edges) ++deg[e.user];
    return deg;
  }

  std::vector<std::size_t> item_degrees() const {
    std::vector<std::size_t> deg(num_items, 0);
    for (const auto& e : edges) ++deg[e.item];
    return deg;
  }

  ChunkSlice slice(ChunkId chunk) const {
    std::vector<Engagement> es;
    for (const auto& e : edges)
      if (e.chunk == chunk) es.push_back({e.user, e.item});
    return ChunkSlice::build(chunk, std::move(es));
  }

  std::vector<ChunkSlice> slices() const {
    std::vector<std::vector<Engagement>> per(num_chunks);
    for (const auto& e : edges) per[e.chunk].push_back({e.user, e.item});
    std::vector<ChunkSlice> out;
    out.reserve(num_chunks);
    for (std::size_t t = 0; t < num_chunks; ++t)
      out.push_back(ChunkSlice::build(static_cast<ChunkId>(t), std::move(per[t])));
    return out;
  }

  GraphStats stats() const {
    GraphStats s;
    s.num_users = num_users;
    s.num_items = num_items;
    s.num_chunks = num_chunks;
    s.num_edges = edges.size();
    auto summarize = [](const std::vector<std::size_t>& deg, std::size_t& active, std::size_t& lo,
                        std::size_t& hi) {
      lo = std::numeric_limits<std::size_t>::max();
      hi = 0;
      active = 0;
      for (std::size_t d : deg) {
        if (d == 0) continue;
        ++active;
        lo = std::min(lo, d);
        hi = std::max(hi, d);
      }
      if (active == 0) lo = 0;
    };
    summarize(user_degrees(), s.active_users, s.min_user_degree, s.max_user_degree);
    summarize(item_degrees(), s.active_items, s.min_item_degree, s.max_item_degree);
    return s;
  }

  void validate() const {
    for (const auto& e : edges) {
      if (e.user >= num_users || e.item >= num_items || e.chunk >= num_chunks)
        throw Inconsistency("edge outside graph id ranges");
    }
  }
};

/// Builds a graph from raw triples: ids are densified by first appearance and
/// ordinals are compacted to 0..T-1 in sorted order.
inline EngagementGraph build_graph(const std::vector<RawEdge>& raw) {
  EngagementGraph g;
  std::vector<RawId> ordinals;
  ordinals.reserve(raw.size());
  for (const auto& r : raw) ordinals.push_back(r.ordinal);
  std::sort(ordinals.begin(), ordinals.end());
  ordinals.erase(std::unique(ordinals.begin(), ordinals.end()), ordinals.end());
  std::unordered_map<RawId, ChunkId> chunk_of;
  for (std::size_t t = 0; t < ordinals.size(); ++t) chunk_of.emplace(ordinals[t], static_cast<ChunkId>(t));

  g.edges.reserve(raw.size());
  for (const auto& r : raw) {
    const UserId u = g.users.intern(r.user);
    const ItemId i = g.items.intern(r.item);
    g.edges.push_back({u, i, chunk_of.at(r.ordinal)});
  }
  g.num_users = g.users.size();
  g.num_items = g.items.size();
  g.num_chunks = ordinals.size();
  g.chunk_labels = std::move(ordinals);
  return g;
}

/// Builds a graph whose ids are already dense (identity id maps).
inline EngagementGraph build_dense_graph(std::vector<Edge> edges, std::size_t num_users,
                                         std::size_t num_items, std::size_t num_chunks) {
  EngagementGraph g;
  g.edges = std::move(edges);
  g.num_users = num_users;
  g.num_items = num_items;
  g.num_chunks = num_chunks;
  g.users = IdMap::identity(num_users);
  g.items = IdMap::identity(num_items);
  g.chunk_labels.resize(num_chunks);
  std::iota(g.chunk_labels.begin(), g.chunk_labels.end(), RawId{0});
  g.validate();
  return g;
}

struct EdgeListFormat {
  char delimiter = '\t';
};

/// Reads `user<delim>item<delim>chunk` lines. Blank lines are ignored and a
/// leading non-numeric row is treated as a header.
inline EngagementGraph load_edge_list(const std::filesystem::path& path, EdgeListFormat format = {}) {
  std::vector<RawEdge> raw;
  bool seen_record = false;
  io::for_each_line(path, [&](std::size_t number, std::string_view line) {
    if (io::trim(line).empty()) return;
    const auto fields = io::split_fields(line, format.delimiter);
    if (!seen_record) {
      seen_record = true;
      RawId probe{};
      if (fields.size() == 3 && !io::parse_number(fields[0], probe)) return;  // header
    }
    if (fields.size() != 3)
      throw ParseError("expected 3 fields, found " + std::to_string(fields.size()), number);
    raw.push_back({io::parse_or_throw<RawId>(fields[0], number, "user id"),
                   io::parse_or_throw<RawId>(fields[1], number, "item id"),
                   io::parse_or_throw<RawId>(fields[2], number, "chunk ordinal")});
  });
  if (raw.empty()) throw EmptyInput("edge list has no records: " + path.string());
  return build_graph(raw);
}

/// Coarsens chunks by integer division of the chunk index.
inline EngagementGraph regroup_chunks(const EngagementGraph& g, std::size_t factor) {
  if (factor == 0) throw InvalidArgument("regroup factor must be >= 1");
  EngagementGraph out = g;
  for (auto& e : out.edges) e.chunk = static_cast<ChunkId>(e.chunk / factor);
  out.num_chunks = g.num_chunks == 0 ? 0 : (g.num_chunks - 1) / factor + 1;
  out.chunk_labels.resize(out.num_chunks);
  std::iota(out.chunk_labels.begin(), out.chunk_labels.end(), RawId{0});
  return out;
}

struct SplitSpec {
  std::size_t train_end = 1;  // t_split: train is [0, train_end), test is [train_end, T)
};

struct TrainTestSplit {
  EngagementGraph train;          // single chunk 0 holding every train edge; shared id spaces
  std::vector<ChunkSlice> test;   // one slice per held-out chunk, original chunk ids
};

inline TrainTestSplit split(const EngagementGraph& g, SplitSpec spec) {
  if (spec.train_end < 1 || spec.train_end > g.num_chunks)
    throw InvalidArgument(fmt::format("invalid split: t_split={} outside [1, {}]", spec.train_end, g.num_chunks));
  TrainTestSplit out;
  out.train.num_users = g.num_users;
  out.train.num_items = g.num_items;
  out.train.num_chunks = 1;
  out.train.users = g.users;
  out.train.items = g.items;
  out.train.chunk_labels = {0};
  const std::size_t num_test = g.num_chunks - spec.train_end;
  std::vector<std::vector<Engagement>> per(num_test);
  for (const auto& e : g.edges) {
    if (e.chunk < spec.train_end)
      out.train.edges.push_back({e.user, e.item, 0});
    else
      per[e.chunk - spec.train_end].push_back({e.user, e.item});
  }
  out.test.reserve(num_test);
  for (std::size_t t = 0; t < num_test; ++t)
    out.test.push_back(ChunkSlice::build(static_cast<ChunkId>(spec.train_end + t), std::move(per[t])));
  return out;
}

/// Keeps every edge of a seeded random fraction of users. Id spaces are kept.
inline EngagementGraph subsample_users(const EngagementGraph& g, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0) throw InvalidArgument("subsample fraction must be in (0, 1]");
  std::mt19937_64 rng(seed);
  std::vector<char> keep(g.num_users);
  for (auto& k : keep) k = uniform01(rng) < fraction;
  EngagementGraph out = g;
  out.edges.clear();
  for (const auto& e : g.edges)
    if (keep[e.user]) out.edges.push_back(e);
  return out;
}

/// Persists a dense graph as `graph.tsv` (user item chunk, dense ids) plus
/// `users.tsv` / `items.tsv` (dense raw) and `chunks.tsv` (chunk label).
inline void save_graph(const std::filesystem::path& dir, const EngagementGraph& g) {
  std::string body = fmt::format("# users {} items {} chunks {}\n", g.num_users, g.num_items, g.num_chunks);
  body.reserve(g.edges.size() * 16);
  for (const auto& e : g.edges) body += fmt::format("{}\t{}\t{}\n", e.user, e.item, e.chunk);
  io::atomic_write(dir / "graph.tsv", body);
  auto write_map = [&](const char* name, const IdMap& m) {
    std::string s;
    for (std::size_t d = 0; d < m.size(); ++d) s += fmt::format("{}\t{}\n", d, m.raw(static_cast<std::uint32_t>(d)));
    io::atomic_write(dir / name, s);
  };
  write_map("users.tsv", g.users);
  write_map("items.tsv", g.items);
  std::string chunks;
  for (std::size_t t = 0; t < g.chunk_labels.size(); ++t) chunks += fmt::format("{}\t{}\n", t, g.chunk_labels[t]);
  io::atomic_write(dir / "chunks.tsv", chunks);
  io::atomic_write(dir / "stats.txt", g.stats().to_text());
}

inline EngagementGraph load_graph(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "graph.tsv"))
    throw MissingArtifact("no ingested graph in " + dir.string() + "; run `micro ingest` first");
  EngagementGraph g;
  io::for_each_line(dir / "graph.tsv", [&](std::size_t number, std::string_view line) {
    if (line.empty()) return;
    const auto f = io::split_fields(line, ' ');
    if (line.front() == '#') {
      if (f.size() != 7) throw ParseError("bad graph header", number);
      g.num_users = io::parse_or_throw<std::size_t>(f[2], number, "count");
      g.num_items = io::parse_or_throw<std::size_t>(f[4], number, "count");
      g.num_chunks = io::parse_or_throw<std::size_t>(f[6], number, "count");
      return;
    }
    if (f.size() != 3) throw ParseError("expected 3 fields", number);
    g.edges.push_back({io::parse_or_throw<UserId>(f[0], number, "user"),
                       io::parse_or_throw<ItemId>(f[1], number, "item"),
                       io::parse_or_throw<ChunkId>(f[2], number, "chunk")});
  });
  auto read_map = [&](const char* name) {
    IdMap m;
    io::for_each_line(dir / name, [&](std::size_t number, std::string_view line) {
      const auto f = io::split_fields(line, ' ');
      if (f.size() != 2) throw ParseError(std::string("bad id map row in ") + name, number);
      m.intern(io::parse_or_throw<RawId>(f[1], number, "raw id"));
    });
    return m;
  };
  g.users = read_map("users.tsv");
  g.items = read_map("items.tsv");
  io::for_each_line(dir / "chunks.tsv", [&](std::size_t number, std::string_view line) {
    const auto f = io::split_fields(line, ' ');
    if (f.size() != 2) throw ParseError("bad chunk row", number);
    g.chunk_labels.push_back(io::parse_or_throw<RawId>(f[1], number, "chunk label"));
  });
  if (g.users.size() != g.num_users || g.items.size() != g.num_items)
    throw Inconsistency("graph bundle id maps disagree with header");
  g.validate();
  return g;
}

}  // namespace micro
