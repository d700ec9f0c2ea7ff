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
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include <fmt/core.h>

#include "micro/count_table.hpp"
#include "micro/graph.hpp"
#include "micro/init.hpp"
#include "micro/io.hpp"
#include "micro/log.hpp"

namespace micro {

enum class UserCountMode {
  kResetToTrain,  // every chunk starts user counters from N_uk0
  kAccumulate,    // chunk t starts from N_uk0 plus the sampled counts of earlier chunks
};

struct SamplerConfig {
  std::size_t max_sweeps = 20;
  double convergence_tol = 1e-4;  // relative log-joint change between consecutive sweeps
  std::uint64_t seed = 0;
  UserCountMode user_count_mode = UserCountMode::kResetToTrain;

  void validate() const {
    if (max_sweeps < 1) throw InvalidArgument("max_sweeps must be >= 1");
    if (!(convergence_tol >= 0.0)) throw InvalidArgument("convergence_tol must be >= 0");
  }
};

struct SweepStats {
  std::size_t sweep = 0;
  double log_joint = 0.0;
  std::size_t changed = 0;
};

namespace detail {

inline void sparse_add(std::vector<CountEntry>& row, std::uint32_t k, int delta) {
  auto it = std::lower_bound(row.begin(), row.end(), k, [](const CountEntry& e, std::uint32_t v) { return e.col < v; });
  if (delta > 0) {
    if (it != row.end() && it->col == k)
      it->count += static_cast<Count>(delta);
    else
      row.insert(it, CountEntry{k, static_cast<Count>(delta)});
    return;
  }
  if (it == row.end() || it->col != k || it->count < static_cast<Count>(-delta))
    throw Inconsistency("count table would go negative");
  it->count -= static_cast<Count>(-delta);
  if (it->count == 0) row.erase(it);
}

inline Count sparse_get(std::span<const CountEntry> row, std::uint32_t k) {
  auto it = std::lower_bound(row.begin(), row.end(), k, [](const CountEntry& e, std::uint32_t v) { return e.col < v; });
  return (it != row.end() && it->col == k) ? it->count : 0;
}

}  // namespace detail

/// Sampler state for one time chunk.
///
/// User counters are `base + local`, where base is N_uk0 (or the accumulated
/// counts of earlier chunks) and local holds this chunk's sampled assignments.
/// Item and interest counters cover this chunk only. Users with a nonempty
/// alpha support are confined to it; cold users range over all K interests.
class ChunkModel {
 public:
  ChunkId chunk = 0;
  std::size_t num_items = 0;
  std::size_t num_interests = 0;
  double alpha = 0.0;
  double beta = 0.0;

  std::vector<SweepStats> trace;  // trace[0] is the state right after initialization
  bool converged = false;
  std::size_t underflow_events = 0;

  /// Builds tables for the given assignments (one per engagement, slice order).
  static ChunkModel from_assignments(const ChunkSlice& slice, const InitArtifact& init,
                                     std::shared_ptr<const CountTable> base, std::vector<InterestId> z) {
    if (z.size() != slice.size()) throw InvalidArgument("assignment vector length differs from chunk size");
    ChunkModel m;
    m.chunk = slice.chunk;
    m.num_items = init.num_items;
    m.num_interests = init.num_interests;
    m.alpha = init.alpha;
    m.beta = init.beta;
    m.base_ = base ? std::move(base) : std::make_shared<const CountTable>(init.user_interest);
    if (m.base_->rows() != init.num_users) throw Inconsistency("base user counts have the wrong number of users");
    m.engagements_ = slice.engagements;
    m.users_ = slice.users;
    m.user_offsets_ = slice.offsets;
    m.all_interests_.resize(init.num_interests);
    std::iota(m.all_interests_.begin(), m.all_interests_.end(), InterestId{0});

    m.support_offsets_.assign(1, 0);
    m.engagement_user_.resize(m.engagements_.size());
    for (std::size_t x = 0; x < m.users_.size(); ++x) {
      const UserId u = m.users_[x];
      if (u >= init.num_users) throw Inconsistency(fmt::format("user {} unknown to the init artifact", u));
      for (const auto& e : init.user_interest.row(u)) m.support_.push_back(e.col);
      m.support_offsets_.push_back(m.support_.size());
      for (std::size_t j = m.user_offsets_[x]; j < m.user_offsets_[x + 1]; ++j)
        m.engagement_user_[j] = static_cast<std::uint32_t>(x);
    }

    m.pool_ = slice.item_pool();
    m.engagement_item_.resize(m.engagements_.size());
    for (std::size_t j = 0; j < m.engagements_.size(); ++j) {
      const ItemId i = m.engagements_[j].item;
      if (i >= init.num_items) throw Inconsistency(fmt::format("item {} outside the item id space", i));
      m.engagement_item_[j] = static_cast<std::uint32_t>(std::lower_bound(m.pool_.begin(), m.pool_.end(), i) - m.pool_.begin());
    }
    m.local_user_.assign(m.users_.size(), {});
    m.item_counts_.assign(m.pool_.size(), {});
    m.interest_totals_.assign(init.num_interests, 0);
    m.z_.assign(m.engagements_.size(), kNoId);
    for (std::size_t j = 0; j < z.size(); ++j) {
      const auto support = m.support_of(m.engagement_user_[j]);
      if (z[j] >= m.num_interests || !std::binary_search(support.begin(), support.end(), z[j]))
        throw Inconsistency(fmt::format("assignment {} outside the user's support", z[j]));
      m.add_assignment(j, z[j]);
    }
    return m;
  }

  std::size_t size() const { return engagements_.size(); }
  std::span<const Engagement> engagements() const { return engagements_; }
  std::span<const InterestId> assignments() const { return z_; }
  std::span<const ItemId> item_pool() const { return pool_; }
  std::span<const UserId> chunk_users() const { return users_; }
  const CountTable& base_user_counts() const { return *base_; }
  std::shared_ptr<const CountTable> base_ptr() const { return base_; }
  std::span<const std::uint64_t> interest_totals() const { return interest_totals_; }

  /// Effective support of the x-th chunk user (ascending).
  std::span<const InterestId> support_of(std::size_t x) const {
    const std::size_t b = support_offsets_[x], e = support_offsets_[x + 1];
    if (b == e) return all_interests_;
    return std::span<const InterestId>(support_).subspan(b, e - b);
  }

  std::size_t chunk_user_index(UserId u) const {
    auto it = std::lower_bound(users_.begin(), users_.end(), u);
    return (it != users_.end() && *it == u) ? static_cast<std::size_t>(it - users_.begin()) : kNoId;
  }

  /// N_uk for this chunk's state: base plus this chunk's assignments.
  Count user_interest(UserId u, InterestId k) const { return base_->get(u, k) + chunk_user_interest(u, k); }

  /// This chunk's contribution to N_uk only.
  Count chunk_user_interest(UserId u, InterestId k) const {
    const std::size_t x = chunk_user_index(u);
    return x == kNoId ? 0 : detail::sparse_get(local_user_[x], k);
  }

  std::span<const CountEntry> chunk_user_row(std::size_t x) const { return local_user_[x]; }

  Count item_interest(ItemId i, InterestId k) const {
    const std::size_t p = pool_index(i);
    return p == kNoId ? 0 : detail::sparse_get(item_counts_[p], k);
  }

  std::span<const CountEntry> item_row_by_pool_index(std::size_t p) const { return item_counts_[p]; }

  std::size_t pool_index(ItemId i) const {
    auto it = std::lower_bound(pool_.begin(), pool_.end(), i);
    return (it != pool_.end() && *it == i) ? static_cast<std::size_t>(it - pool_.begin()) : kNoId;
  }

  std::uint64_t interest_total(InterestId k) const { return interest_totals_[k]; }
  std::size_t chunk_user_of(std::size_t j) const { return engagement_user_[j]; }

  /// Removes engagement j's current assignment from every table.
  void remove_assignment(std::size_t j) {
    const InterestId k = z_[j];
    if (k == kNoId) throw Inconsistency("engagement has no assignment to remove");
    detail::sparse_add(local_user_[engagement_user_[j]], k, -1);
    detail::sparse_add(item_counts_[engagement_item_[j]], k, -1);
    --interest_totals_[k];
    z_[j] = kNoId;
  }

  /// Assigns engagement j to interest k and adds it to every table.
  void add_assignment(std::size_t j, InterestId k) {
    if (z_[j] != kNoId) throw Inconsistency("engagement already assigned");
    detail::sparse_add(local_user_[engagement_user_[j]], k, +1);
    detail::sparse_add(item_counts_[engagement_item_[j]], k, +1);
    ++interest_totals_[k];
    z_[j] = k;
  }

  /// Unnormalized conditional weights over the support of engagement j's user,
  /// evaluated in the current state (j must already be removed). Returns the
  /// support the weights are aligned with.
  std::span<const InterestId> conditional_weights(std::size_t j, std::vector<double>& weights) const {
    const std::size_t x = engagement_user_[j];
    const auto support = support_of(x);
    const auto base_row = base_->row(users_[x]);
    const auto& local_row = local_user_[x];
    const auto& item_row = item_counts_[engagement_item_[j]];
    const double prior = alpha;
    const double item_mass = static_cast<double>(num_items) * beta;
    weights.resize(support.size());
    std::size_t b = 0, l = 0, r = 0;
    for (std::size_t s = 0; s < support.size(); ++s) {
      const InterestId k = support[s];
      while (b < base_row.size() && base_row[b].col < k) ++b;
      while (l < local_row.size() && local_row[l].col < k) ++l;
      while (r < item_row.size() && item_row[r].col < k) ++r;
      const Count nb = (b < base_row.size() && base_row[b].col == k) ? base_row[b].count : 0;
      const Count nl = (l < local_row.size() && local_row[l].col == k) ? local_row[l].count : 0;
      const Count ni = (r < item_row.size() && item_row[r].col == k) ? item_row[r].count : 0;
      weights[s] = (prior + static_cast<double>(nb + nl)) * (beta + static_cast<double>(ni)) /
                   (item_mass + static_cast<double>(interest_totals_[k]));
    }
    return support;
  }

 private:
  std::shared_ptr<const CountTable> base_;
  std::vector<Engagement> engagements_;
  std::vector<UserId> users_;
  std::vector<std::size_t> user_offsets_;
  std::vector<std::uint32_t> engagement_user_;
  std::vector<std::size_t> support_offsets_;
  std::vector<InterestId> support_;
  std::vector<InterestId> all_interests_;
  std::vector<ItemId> pool_;
  std::vector<std::uint32_t> engagement_item_;
  std::vector<std::vector<CountEntry>> local_user_;
  std::vector<std::vector<CountEntry>> item_counts_;
  std::vector<std::uint64_t> interest_totals_;
  std::vector<InterestId> z_;
};

/// Unnormalized collapsed conditional for assigning an engagement of (u, i)
/// to interest k, given a state from which that engagement was removed:
/// (alpha_u(k) + N_uk) (beta + N_ikt) / (I beta + N_kt).
inline double gibbs_weight(UserId u, ItemId i, InterestId k, const ChunkModel& m, const InitArtifact& init) {
  const double prior = init.prior(u, k);
  const Count nuk = m.user_interest(u, k);
  const double item_mass = static_cast<double>(m.num_items) * m.beta;
  return (prior + static_cast<double>(nuk)) * (m.beta + static_cast<double>(m.item_interest(i, k))) /
         (item_mass + static_cast<double>(m.interest_total(k)));
}

/// Log of the collapsed probability of this chunk's assignments and items,
/// conditional on the base user counts:
///
///   sum_u [ sum_k lgamma(a_uk + B_uk + n_uk) - lgamma(a_uk + B_uk)
///           - lgamma(A_u + B_u + n_u) + lgamma(A_u + B_u) ]
/// + sum_k [ lgamma(I beta) - lgamma(I beta + N_kt) ]
/// + sum_{i,k} [ lgamma(beta + N_ikt) - lgamma(beta) ]
///
/// An empty chunk scores 0.
inline double log_joint(const ChunkModel& m, const InitArtifact& /*init*/) {
  double lj = 0.0;
  const auto users = m.chunk_users();
  for (std::size_t x = 0; x < users.size(); ++x) {
    const auto base_row = m.base_user_counts().row(users[x]);
    const double prior_mass = m.alpha * static_cast<double>(m.support_of(x).size());
    double base_total = 0.0;
    for (const auto& e : base_row) base_total += e.count;
    double chunk_total = 0.0;
    for (const auto& e : m.chunk_user_row(x)) {
      const double nb = detail::sparse_get(base_row, e.col);
      lj += std::lgamma(m.alpha + nb + e.count) - std::lgamma(m.alpha + nb);
      chunk_total += e.count;
    }
    lj -= std::lgamma(prior_mass + base_total + chunk_total) - std::lgamma(prior_mass + base_total);
  }
  const double item_mass = static_cast<double>(m.num_items) * m.beta;
  for (std::size_t k = 0; k < m.num_interests; ++k) {
    const auto n = m.interest_total(static_cast<InterestId>(k));
    if (n > 0) lj += std::lgamma(item_mass) - std::lgamma(item_mass + static_cast<double>(n));
  }
  const double lgb = std::lgamma(m.beta);
  for (std::size_t p = 0; p < m.item_pool().size(); ++p)
    for (const auto& e : m.item_row_by_pool_index(p)) lj += std::lgamma(m.beta + e.count) - lgb;
  return lj;
}

/// Draws initial assignments uniformly from each user's support (all K for
/// cold users).
inline ChunkModel init_chunk(const ChunkSlice& slice, const InitArtifact& init, const SamplerConfig& cfg,
                             std::shared_ptr<const CountTable> base = nullptr) {
  cfg.validate();
  std::mt19937_64 rng(mix_seed(cfg.seed, 2ULL * slice.chunk));
  std::vector<InterestId> z(slice.size());
  for (std::size_t x = 0; x < slice.users.size(); ++x) {
    const auto support = init.alpha_support(slice.users[x]);
    for (std::size_t j = slice.offsets[x]; j < slice.offsets[x + 1]; ++j) {
      z[j] = support.empty() ? static_cast<InterestId>(uniform_index(rng, init.num_interests))
                             : support[uniform_index(rng, support.size())];
    }
  }
  ChunkModel m = ChunkModel::from_assignments(slice, init, std::move(base), std::move(z));
  m.trace.push_back({0, log_joint(m, init), 0});
  return m;
}

/// Resamples every engagement once in slice order. Returns how many
/// assignments changed.
template <typename Rng>
std::size_t sweep(ChunkModel& m, const InitArtifact& /*init*/, Rng& rng) {
  std::vector<double> weights;
  std::size_t changed = 0;
  for (std::size_t j = 0; j < m.size(); ++j) {
    const InterestId old = m.assignments()[j];
    m.remove_assignment(j);
    const auto support = m.conditional_weights(j, weights);
    double total = 0.0;
    for (double w : weights) total += w;
    std::size_t pick = 0;
    if (!(total > 0.0) || !std::isfinite(total)) {
      ++m.underflow_events;
      log_warn("gibbs_underflow", "chunk={} engagement={} support={}", m.chunk, j, support.size());
      pick = uniform_index(rng, support.size());
    } else {
      double target = uniform01(rng) * total;
      pick = support.size() - 1;
      for (std::size_t s = 0; s < weights.size(); ++s) {
        if (target < weights[s]) {
          pick = s;
          break;
        }
        target -= weights[s];
      }
      while (weights[pick] <= 0.0 && pick > 0) --pick;
    }
    m.add_assignment(j, support[pick]);
    changed += support[pick] != old;
  }
  return changed;
}

/// Initializes and sweeps until the relative log-joint change drops below the
/// tolerance or max_sweeps is reached. The final sample is the estimate.
inline ChunkModel fit_chunk(const ChunkSlice& slice, const InitArtifact& init, const SamplerConfig& cfg,
                            std::shared_ptr<const CountTable> base = nullptr) {
  ChunkModel m = init_chunk(slice, init, cfg, std::move(base));
  std::mt19937_64 rng(mix_seed(cfg.seed, 2ULL * slice.chunk + 1));
  double previous = m.trace.back().log_joint;
  for (std::size_t s = 1; s <= cfg.max_sweeps; ++s) {
    const std::size_t changed = sweep(m, init, rng);
    const double lj = log_joint(m, init);
    m.trace.push_back({s, lj, changed});
    log_debug("gibbs_sweep", "chunk={} sweep={} log_joint={:.6f} changed={}", m.chunk, s, lj, changed);
    const double delta = std::abs(lj - previous);
    previous = lj;
    if (delta == 0.0 || (lj != 0.0 && delta / std::abs(lj) < cfg.convergence_tol)) {
      m.converged = true;
      break;
    }
  }
  if (slice.empty()) m.converged = true;
  if (!m.converged)
    log_warn("gibbs_not_converged", "chunk={} sweeps={} log_joint={:.6f}", m.chunk, cfg.max_sweeps, previous);
  log_info("chunk_fitted", "chunk={} engagements={} sweeps={} log_joint={:.6f} converged={}", m.chunk, m.size(),
           m.trace.size() - 1, previous, m.converged);
  return m;
}

/// Base counts for the next chunk in accumulate mode: base plus this chunk's assignments.
inline CountTable accumulate_user_counts(const ChunkModel& m) {
  const CountTable& base = m.base_user_counts();
  std::vector<std::tuple<std::uint32_t, std::uint32_t, Count>> triples;
  triples.reserve(base.nonzeros() + m.size());
  for (std::size_t u = 0; u < base.rows(); ++u)
    for (const auto& e : base.row(u)) triples.emplace_back(static_cast<std::uint32_t>(u), e.col, e.count);
  const auto users = m.chunk_users();
  for (std::size_t x = 0; x < users.size(); ++x)
    for (const auto& e : m.chunk_user_row(x)) triples.emplace_back(users[x], e.col, e.count);
  return CountTable::from_triples(base.rows(), std::move(triples));
}

/// Smoothed user mixture over the user's alpha support:
/// theta(k) = (alpha + N_uk) / sum_{k' in support} (alpha + N_uk').
inline std::vector<std::pair<InterestId, double>> user_mixture(UserId u, const ChunkModel& m, const InitArtifact& init) {
  std::vector<std::pair<InterestId, double>> theta;
  const auto support = init.alpha_support(u);
  double total = 0.0;
  for (InterestId k : support) {
    const double w = init.alpha + static_cast<double>(m.user_interest(u, k));
    theta.emplace_back(k, w);
    total += w;
  }
  for (auto& [k, w] : theta) w /= total;
  return theta;
}

/// Text dump: a header line, then `[assignments]` (user item interest per
/// engagement in scan order), `[user_interest]` (u k count, this chunk's
/// contribution), `[item_interest]` (i k count), `[interest]` (k count) and
/// `[diagnostics]` (sweep log_joint changed).
inline std::string format_chunk_model(const ChunkModel& m) {
  std::string s = fmt::format("micro-chunk-model 1 chunk {} engagements {} interests {} converged {}\n", m.chunk,
                              m.size(), m.num_interests, m.converged ? 1 : 0);
  s += "[assignments]\n";
  for (std::size_t j = 0; j < m.size(); ++j)
    s += fmt::format("{}\t{}\t{}\n", m.engagements()[j].user, m.engagements()[j].item, m.assignments()[j]);
  s += "[user_interest]\n";
  for (std::size_t x = 0; x < m.chunk_users().size(); ++x)
    for (const auto& e : m.chunk_user_row(x)) s += fmt::format("{}\t{}\t{}\n", m.chunk_users()[x], e.col, e.count);
  s += "[item_interest]\n";
  for (std::size_t p = 0; p < m.item_pool().size(); ++p)
    for (const auto& e : m.item_row_by_pool_index(p)) s += fmt::format("{}\t{}\t{}\n", m.item_pool()[p], e.col, e.count);
  s += "[interest]\n";
  for (std::size_t k = 0; k < m.num_interests; ++k)
    if (m.interest_total(static_cast<InterestId>(k)) > 0) s += fmt::format("{}\t{}\n", k, m.interest_total(static_cast<InterestId>(k)));
  s += "[diagnostics]\n";
  for (const auto& t : m.trace) s += fmt::format("{}\t{:.17g}\t{}\n", t.sweep, t.log_joint, t.changed);
  return s;
}

inline void save_chunk_model(const std::filesystem::path& path, const ChunkModel& m) {
  io::atomic_write(path, format_chunk_model(m));
}

/// Per-sweep diagnostics as `sweep<TAB>log_joint<TAB>changed` rows with a header.
inline std::string format_sweep_trace(const ChunkModel& m) {
  std::string s = "sweep\tlog_joint\tchanged\n";
  for (const auto& t : m.trace) s += fmt::format("{}\t{:.17g}\t{}\n", t.sweep, t.log_joint, t.changed);
  return s;
}

/// Rebuilds a model from a dump. The assignment section must match the slice
/// engagement by engagement; the count sections are cross-checked.
inline ChunkModel load_chunk_model(const std::filesystem::path& path, const ChunkSlice& slice, const InitArtifact& init,
                                   std::shared_ptr<const CountTable> base = nullptr) {
  std::vector<InterestId> z;
  std::vector<std::tuple<std::uint32_t, std::uint32_t, Count>> user_rows, item_rows;
  std::vector<std::pair<std::uint32_t, std::uint64_t>> interest_rows;
  std::vector<SweepStats> trace;
  bool converged = false;
  std::string section;
  io::for_each_line(path, [&](std::size_t number, std::string_view line) {
    if (line.empty()) return;
    if (number == 1) {
      const auto f = io::split_fields(line, ' ');
      if (f.size() != 10 || f[0] != "micro-chunk-model" || f[1] != "1") throw ParseError("not a chunk model dump", number);
      if (io::parse_or_throw<ChunkId>(f[3], number, "chunk") != slice.chunk) throw Inconsistency("chunk model is for another chunk");
      converged = f[9] == "1";
      return;
    }
    if (line.front() == '[') {
      section = std::string(line);
      return;
    }
    const auto f = io::split_fields(line, ' ');
    if (section == "[assignments]") {
      if (f.size() != 3) throw ParseError("bad assignment row", number);
      const std::size_t j = z.size();
      if (j >= slice.size() || slice.engagements[j].user != io::parse_or_throw<UserId>(f[0], number, "user") ||
          slice.engagements[j].item != io::parse_or_throw<ItemId>(f[1], number, "item"))
        throw Inconsistency(fmt::format("chunk model engagement {} does not match the slice", j));
      z.push_back(io::parse_or_throw<InterestId>(f[2], number, "interest"));
    } else if (section == "[user_interest]" || section == "[item_interest]") {
      if (f.size() != 3) throw ParseError("bad count row", number);
      auto& rows = section == "[user_interest]" ? user_rows : item_rows;
      rows.emplace_back(io::parse_or_throw<std::uint32_t>(f[0], number, "row"),
                        io::parse_or_throw<std::uint32_t>(f[1], number, "interest"),
                        io::parse_or_throw<Count>(f[2], number, "count"));
    } else if (section == "[interest]") {
      if (f.size() != 2) throw ParseError("bad interest row", number);
      interest_rows.emplace_back(io::parse_or_throw<std::uint32_t>(f[0], number, "interest"),
                                 io::parse_or_throw<std::uint64_t>(f[1], number, "count"));
    } else if (section == "[diagnostics]") {
      if (f.size() != 3) throw ParseError("bad diagnostics row", number);
      trace.push_back({io::parse_or_throw<std::size_t>(f[0], number, "sweep"),
                       io::parse_or_throw<double>(f[1], number, "log_joint"),
                       io::parse_or_throw<std::size_t>(f[2], number, "changed")});
    } else {
      throw ParseError("row outside a known section", number);
    }
  });
  ChunkModel m = ChunkModel::from_assignments(slice, init, std::move(base), std::move(z));
  for (const auto& [u, k, n] : user_rows)
    if (m.chunk_user_interest(u, k) != n) throw Inconsistency("chunk model user counts disagree with assignments");
  for (const auto& [i, k, n] : item_rows)
    if (m.item_interest(i, k) != n) throw Inconsistency("chunk model item counts disagree with assignments");
  std::uint64_t listed = 0;
  for (const auto& [k, n] : interest_rows) {
    if (k >= m.num_interests || m.interest_total(k) != n) throw Inconsistency("chunk model interest totals disagree");
    listed += n;
  }
  if (listed != m.size()) throw Inconsistency("chunk model interest totals do not cover the chunk");
  m.trace = std::move(trace);
  m.converged = converged;
  return m;
}

}  // namespace micro
