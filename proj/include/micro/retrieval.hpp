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
#include <limits>
#include <span>
#include <vector>

#include "micro/common.hpp"
#include "micro/embedding.hpp"
#include "micro/graph.hpp"
#include "micro/init.hpp"
#include "micro/log.hpp"
#include "micro/sampler.hpp"
#include "micro/skmeans.hpp"

namespace micro {

enum class ColdUserPolicy { kPopularityFallback, kEmpty };

struct RetrievalConfig {
  std::size_t M = 100;
  std::size_t L = 0;  // per-interest truncation; 0 means 5 * M
  bool exclude_seen = true;
  ColdUserPolicy cold_user_policy = ColdUserPolicy::kPopularityFallback;

  std::size_t truncation() const { return L == 0 ? 5 * M : L; }

  void validate() const {
    if (M < 1) throw InvalidArgument("M must be >= 1");
    if (truncation() < M) throw InvalidArgument("L must be >= M");
  }
};

struct ScoredItem {
  ItemId item;
  double score;
  friend bool operator==(const ScoredItem&, const ScoredItem&) = default;
};

/// Ranked candidates for one (user, query chunk): descending score, ties by
/// ascending item id, no duplicates.
struct CandidateList {
  UserId user = 0;
  ChunkId chunk = 0;
  std::vector<ScoredItem> items;

  std::vector<ItemId> item_ids() const {
    std::vector<ItemId> ids;
    ids.reserve(items.size());
    for (const auto& s : items) ids.push_back(s.item);
    return ids;
  }
};

inline bool ranks_before(const ScoredItem& a, const ScoredItem& b) {
  return a.score != b.score ? a.score > b.score : a.item < b.item;
}

/// Keeps the best M entries, ordered.
inline void select_top(std::vector<ScoredItem>& cands, std::size_t M) {
  if (cands.size() > M) {
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(M), cands.end(), ranks_before);
    cands.resize(M);
  } else {
    std::sort(cands.begin(), cands.end(), ranks_before);
  }
}

/// Items each user has engaged with so far, per user, sorted.
class SeenItems {
 public:
  explicit SeenItems(std::size_t num_users = 0) : items_(num_users) {}

  static SeenItems from_graph(const EngagementGraph& g) {
    SeenItems s(g.num_users);
    for (const auto& e : g.edges) s.items_[e.user].push_back(e.item);
    for (auto& v : s.items_) s.normalize(v);
    return s;
  }

  void add(const ChunkSlice& slice) {
    for (std::size_t x = 0; x < slice.users.size(); ++x) {
      auto& v = items_.at(slice.users[x]);
      for (const auto& e : slice.user_engagements(x)) v.push_back(e.item);
      normalize(v);
    }
  }

  bool contains(UserId u, ItemId i) const {
    if (u >= items_.size()) return false;
    const auto& v = items_[u];
    return std::binary_search(v.begin(), v.end(), i);
  }

  std::span<const ItemId> of(UserId u) const { return items_.at(u); }

 private:
  static void normalize(std::vector<ItemId>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  std::vector<std::vector<ItemId>> items_;
};

/// Chunk-t popularity: every chunk item by engagement count, ties by ascending id.
struct PopularityRanking {
  ChunkId chunk = 0;
  std::vector<ScoredItem> ranked;
};

inline PopularityRanking build_popularity(const ChunkSlice& slice) {
  PopularityRanking p;
  p.chunk = slice.chunk;
  std::vector<ItemId> items;
  items.reserve(slice.size());
  for (const auto& e : slice.engagements) items.push_back(e.item);
  std::sort(items.begin(), items.end());
  for (std::size_t a = 0; a < items.size();) {
    std::size_t b = a;
    while (b < items.size() && items[b] == items[a]) ++b;
    p.ranked.push_back({items[a], static_cast<double>(b - a)});
    a = b;
  }
  std::stable_sort(p.ranked.begin(), p.ranked.end(), ranks_before);
  return p;
}

/// Shared per-query state: which items to exclude and the cold-user fallback.
struct QueryContext {
  ChunkId query_chunk = 0;
  const SeenItems* seen = nullptr;
  const PopularityRanking* fallback = nullptr;

  bool excluded(UserId u, ItemId i, const RetrievalConfig& cfg) const {
    return cfg.exclude_seen && seen != nullptr && seen->contains(u, i);
  }
};

inline CandidateList popularity_retrieve(const PopularityRanking& ranking, UserId u, const RetrievalConfig& cfg,
                                         const QueryContext& ctx = {}) {
  CandidateList out{u, ctx.query_chunk, {}};
  for (const auto& s : ranking.ranked) {
    if (out.items.size() >= cfg.M) break;
    if (!ctx.excluded(u, s.item, cfg)) out.items.push_back(s);
  }
  return out;
}

/// Unpersonalized top-M of a chunk.
inline CandidateList popularity_retrieve(const ChunkSlice& slice, const RetrievalConfig& cfg) {
  return popularity_retrieve(build_popularity(slice), 0, cfg, QueryContext{slice.chunk + 1, nullptr, nullptr});
}

inline CandidateList cold_user_candidates(UserId u, const RetrievalConfig& cfg, const QueryContext& ctx) {
  if (cfg.cold_user_policy == ColdUserPolicy::kPopularityFallback && ctx.fallback != nullptr)
    return popularity_retrieve(*ctx.fallback, u, cfg, ctx);
  return CandidateList{u, ctx.query_chunk, {}};
}

/// Per-interest top-L items of a fitted chunk by the smoothed estimate
/// (beta + N_ikt) / (I beta + N_kt). Only items engaged in the chunk under
/// that interest are listed; `default_phi[k]` is the value for any other pool item.
struct ScoredInterestIndex {
  ChunkId chunk = 0;
  std::size_t num_items = 0;
  std::vector<std::vector<ScoredItem>> lists;
  std::vector<double> default_phi;
  std::vector<ItemId> pool;
};

inline ScoredInterestIndex build_index(const ChunkModel& m, const RetrievalConfig& cfg) {
  ScoredInterestIndex idx;
  idx.chunk = m.chunk;
  idx.num_items = m.num_items;
  idx.pool.assign(m.item_pool().begin(), m.item_pool().end());
  idx.lists.resize(m.num_interests);
  idx.default_phi.resize(m.num_interests);
  const double item_mass = static_cast<double>(m.num_items) * m.beta;
  for (std::size_t k = 0; k < m.num_interests; ++k)
    idx.default_phi[k] = (m.beta + 0.0) / (item_mass + static_cast<double>(m.interest_total(static_cast<InterestId>(k))));
  for (std::size_t p = 0; p < idx.pool.size(); ++p) {
    for (const auto& e : m.item_row_by_pool_index(p)) {
      const double phi = (m.beta + static_cast<double>(e.count)) / (item_mass + static_cast<double>(m.interest_total(e.col)));
      idx.lists[e.col].push_back({idx.pool[p], phi});
    }
  }
  const std::size_t L = cfg.truncation();
  for (auto& list : idx.lists) select_top(list, L);
  return idx;
}

namespace detail {
struct ScoreScratch {
  std::vector<double> phi;        // per item; NaN when unset
  std::vector<std::uint32_t> mark;
  std::uint32_t epoch = 0;

  void ensure(std::size_t n) {
    if (phi.size() < n) {
      phi.assign(n, std::numeric_limits<double>::quiet_NaN());
      mark.assign(n, 0);
      epoch = 0;
    }
  }
  std::uint32_t next_epoch() {
    if (++epoch == 0) {
      std::fill(mark.begin(), mark.end(), 0);
      epoch = 1;
    }
    return epoch;
  }
};
inline ScoreScratch& scratch() {
  thread_local ScoreScratch s;
  return s;
}
}  // namespace detail

/// Top-M items by sum over the user's support of theta(k) * phi_k(i), scored
/// over the union of the support's truncated interest lists. When fewer than M
/// such items survive exclusion, remaining pool items (which all share the
/// baseline score) fill the list in ascending id order.
inline CandidateList retrieve_micro(UserId u, const ChunkModel& m, const ScoredInterestIndex& idx,
                                    const InitArtifact& init, const RetrievalConfig& cfg, const QueryContext& ctx) {
  if (init.is_cold(u)) return cold_user_candidates(u, cfg, ctx);
  const auto theta = user_mixture(u, m, init);
  auto& sc = detail::scratch();
  sc.ensure(idx.num_items);
  const std::uint32_t in_union = sc.next_epoch();

  std::vector<ItemId> cands;
  for (const auto& [k, w] : theta)
    for (const auto& s : idx.lists[k])
      if (sc.mark[s.item] != in_union) {
        sc.mark[s.item] = in_union;
        cands.push_back(s.item);
      }

  std::vector<double> score(cands.size(), 0.0);
  double baseline = 0.0;
  for (const auto& [k, w] : theta) {
    for (const auto& s : idx.lists[k]) sc.phi[s.item] = s.score;
    const double dflt = idx.default_phi[k];
    for (std::size_t c = 0; c < cands.size(); ++c) {
      const double phi = sc.phi[cands[c]];
      score[c] += w * (std::isnan(phi) ? dflt : phi);
    }
    baseline += w * dflt;
    for (const auto& s : idx.lists[k]) sc.phi[s.item] = std::numeric_limits<double>::quiet_NaN();
  }

  CandidateList out{u, ctx.query_chunk, {}};
  out.items.reserve(cands.size() + cfg.M);
  for (std::size_t c = 0; c < cands.size(); ++c)
    if (!ctx.excluded(u, cands[c], cfg)) out.items.push_back({cands[c], score[c]});
  std::size_t fill = 0;
  for (ItemId i : idx.pool) {
    if (fill >= cfg.M) break;
    if (sc.mark[i] == in_union || ctx.excluded(u, i, cfg)) continue;
    out.items.push_back({i, baseline});
    ++fill;
  }
  select_top(out.items, cfg.M);
  return out;
}

/// Static mixture retrieval over train items: score(i) = sum_k p(k|u) p(i|k).
/// When `pool` is non-empty only those items are eligible (sorted ascending).
inline CandidateList retrieve_mle(UserId u, const MleMixture& mix, const RetrievalConfig& cfg, const QueryContext& ctx,
                                  std::span<const ItemId> pool = {}) {
  if (u >= mix.num_users || mix.p_k_given_u[u].empty()) return cold_user_candidates(u, cfg, ctx);
  auto& sc = detail::scratch();
  sc.ensure(mix.num_items);
  const std::uint32_t in_union = sc.next_epoch();
  const std::size_t L = cfg.truncation();
  std::vector<ItemId> cands;
  for (const auto& pk : mix.p_k_given_u[u]) {
    std::size_t kept = 0;
    for (const auto& pi : mix.p_i_given_k[pk.id]) {
      if (kept >= L) break;
      if (!pool.empty() && !std::binary_search(pool.begin(), pool.end(), pi.id)) continue;
      if (ctx.excluded(u, pi.id, cfg)) continue;
      ++kept;
      if (sc.mark[pi.id] != in_union) {
        sc.mark[pi.id] = in_union;
        sc.phi[pi.id] = 0.0;
        cands.push_back(pi.id);
      }
      sc.phi[pi.id] += pk.p * pi.p;
    }
  }
  CandidateList out{u, ctx.query_chunk, {}};
  out.items.reserve(cands.size());
  for (ItemId i : cands) {
    out.items.push_back({i, sc.phi[i]});
    sc.phi[i] = std::numeric_limits<double>::quiet_NaN();
  }
  select_top(out.items, cfg.M);
  return out;
}

/// Chunk items encoded as the mean of their engaging users' vectors (one term
/// per engagement).
struct ItemVectors {
  std::size_t dim = 0;
  std::vector<ItemId> items;   // ascending
  std::vector<double> data;    // items.size() x dim
  std::vector<double> norms;

  std::span<const double> vector(std::size_t row) const { return {data.data() + row * dim, dim}; }
};

inline ItemVectors ann_encode_items(const ChunkSlice& slice, const EmbeddingTable& emb) {
  ItemVectors v;
  v.dim = emb.dim;
  v.items = slice.item_pool();
  v.data.assign(v.items.size() * v.dim, 0.0);
  std::vector<std::size_t> counts(v.items.size(), 0);
  for (const auto& e : slice.engagements) {
    if (e.user >= emb.num_users) throw Inconsistency("engaging user has no embedding row");
    const std::size_t row = static_cast<std::size_t>(std::lower_bound(v.items.begin(), v.items.end(), e.item) - v.items.begin());
    const auto uv = emb.user(e.user);
    double* dst = v.data.data() + row * v.dim;
    for (std::size_t c = 0; c < v.dim; ++c) dst[c] += uv[c];
    ++counts[row];
  }
  v.norms.resize(v.items.size());
  for (std::size_t r = 0; r < v.items.size(); ++r) {
    double* dst = v.data.data() + r * v.dim;
    double n2 = 0.0;
    for (std::size_t c = 0; c < v.dim; ++c) {
      dst[c] /= static_cast<double>(counts[r]);
      n2 += dst[c] * dst[c];
    }
    v.norms[r] = std::sqrt(n2);
  }
  return v;
}

namespace detail {
inline double cosine(std::span<const double> q, double q_norm, std::span<const double> v, double v_norm) {
  if (v_norm == 0.0) return -std::numeric_limits<double>::infinity();
  double s = 0.0;
  for (std::size_t c = 0; c < q.size(); ++c) s += q[c] * v[c];
  return s / (q_norm * v_norm);
}
inline std::vector<double> user_query(UserId u, const EmbeddingTable& emb, double& norm) {
  const auto uv = emb.user(u);
  std::vector<double> q(uv.begin(), uv.end());
  double n2 = 0.0;
  for (double x : q) n2 += x * x;
  norm = std::sqrt(n2);
  return q;
}
}  // namespace detail

/// Exact cosine scan over the chunk's encoded items. Zero item vectors score
/// -inf; a zero user vector yields an empty list.
inline CandidateList ann_retrieve(UserId u, const ItemVectors& vecs, const EmbeddingTable& emb,
                                  const RetrievalConfig& cfg, const QueryContext& ctx) {
  CandidateList out{u, ctx.query_chunk, {}};
  double qn = 0.0;
  const auto q = detail::user_query(u, emb, qn);
  if (qn == 0.0) {
    log_warn("ann_zero_user_vector", "user={}", u);
    return out;
  }
  out.items.reserve(vecs.items.size());
  for (std::size_t r = 0; r < vecs.items.size(); ++r) {
    if (ctx.excluded(u, vecs.items[r], cfg)) continue;
    out.items.push_back({vecs.items[r], detail::cosine(q, qn, vecs.vector(r), vecs.norms[r])});
  }
  select_top(out.items, cfg.M);
  return out;
}

/// Inverted-file approximate index over encoded items: spherical k-means
/// coarse lists, probe the `nprobe` closest lists, exact cosine within them.
class IvfIndex {
 public:
  IvfIndex(const ItemVectors& vecs, std::size_t nlist, std::uint64_t seed) : vecs_(&vecs) {
    std::vector<double> live;
    for (std::size_t r = 0; r < vecs.items.size(); ++r)
      if (vecs.norms[r] > 0.0) rows_.push_back(r);
    nlist = std::clamp<std::size_t>(nlist, 1, std::max<std::size_t>(rows_.size(), 1));
    if (rows_.empty()) {
      lists_.resize(1);
      return;
    }
    live.reserve(rows_.size() * vecs.dim);
    for (std::size_t r : rows_) live.insert(live.end(), vecs.vector(r).begin(), vecs.vector(r).end());
    clusters_ = spherical_kmeans<double>(live, rows_.size(), vecs.dim, ClusterParams{nlist, 25, seed, 1});
    lists_.resize(nlist);
    for (std::size_t n = 0; n < rows_.size(); ++n) lists_[clusters_.item_to_interest[n]].push_back(rows_[n]);
  }

  std::size_t nlist() const { return lists_.size(); }

  CandidateList search(UserId u, const EmbeddingTable& emb, const RetrievalConfig& cfg, const QueryContext& ctx,
                       std::size_t nprobe) const {
    CandidateList out{u, ctx.query_chunk, {}};
    double qn = 0.0;
    const auto q = detail::user_query(u, emb, qn);
    if (qn == 0.0 || rows_.empty()) return out;
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t l = 0; l < lists_.size(); ++l) {
      double s = 0.0;
      const auto c = clusters_.centroid(static_cast<InterestId>(l));
      for (std::size_t d = 0; d < q.size(); ++d) s += q[d] * c[d];
      order.emplace_back(-s, l);
    }
    std::sort(order.begin(), order.end());
    for (std::size_t p = 0; p < std::min(nprobe, order.size()); ++p) {
      for (std::size_t r : lists_[order[p].second]) {
        if (ctx.excluded(u, vecs_->items[r], cfg)) continue;
        out.items.push_back({vecs_->items[r], detail::cosine(q, qn, vecs_->vector(r), vecs_->norms[r])});
      }
    }
    select_top(out.items, cfg.M);
    return out;
  }

 private:
  const ItemVectors* vecs_;
  std::vector<std::size_t> rows_;
  ClusterAssignment clusters_;
  std::vector<std::vector<std::size_t>> lists_;
};

}  // namespace micro
