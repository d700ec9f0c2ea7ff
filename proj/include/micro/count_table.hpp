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
#include <span>
#include <tuple>
#include <vector>

#include "micro/common.hpp"

namespace micro {

struct CountEntry {
  std::uint32_t col;
  Count count;
  friend bool operator==(const CountEntry&, const CountEntry&) = default;
};

/// Immutable sparse row-major count table (CSR). Rows hold strictly positive
/// counts sorted by column.
class CountTable {
 public:
  CountTable() : offsets_(1, 0) {}

  /// Builds from (row, col) observations; repeated pairs accumulate.
  static CountTable from_pairs(std::size_t num_rows, std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs) {
    std::sort(pairs.begin(), pairs.end());
    CountTable t;
    t.offsets_.assign(num_rows + 1, 0);
    for (std::size_t p = 0; p < pairs.size();) {
      std::size_t q = p;
      while (q < pairs.size() && pairs[q] == pairs[p]) ++q;
      if (pairs[p].first >= num_rows) throw InvalidArgument("count table row out of range");
      t.entries_.push_back({pairs[p].second, static_cast<Count>(q - p)});
      ++t.offsets_[pairs[p].first + 1];
      p = q;
    }
    for (std::size_t r = 0; r < num_rows; ++r) t.offsets_[r + 1] += t.offsets_[r];
    return t;
  }

  /// Builds from (row, col, count) triples; zero counts are dropped, repeats summed.
  static CountTable from_triples(std::size_t num_rows, std::vector<std::tuple<std::uint32_t, std::uint32_t, Count>> triples) {
    std::sort(triples.begin(), triples.end());
    CountTable t;
    t.offsets_.assign(num_rows + 1, 0);
    for (std::size_t p = 0; p < triples.size();) {
      const auto [r, c, n0] = triples[p];
      Count n = 0;
      std::size_t q = p;
      while (q < triples.size() && std::get<0>(triples[q]) == r && std::get<1>(triples[q]) == c) n += std::get<2>(triples[q++]);
      p = q;
      if (n == 0) continue;
      if (r >= num_rows) throw InvalidArgument("count table row out of range");
      t.entries_.push_back({c, n});
      ++t.offsets_[r + 1];
    }
    for (std::size_t r = 0; r < num_rows; ++r) t.offsets_[r + 1] += t.offsets_[r];
    return t;
  }

  std::size_t rows() const { return offsets_.size() - 1; }
  std::size_t nonzeros() const { return entries_.size(); }

  std::span<const CountEntry> row(std::size_t r) const {
    return std::span<const CountEntry>(entries_).subspan(offsets_[r], offsets_[r + 1] - offsets_[r]);
  }

  Count get(std::size_t r, std::uint32_t c) const {
    const auto es = row(r);
    auto it = std::lower_bound(es.begin(), es.end(), c, [](const CountEntry& e, std::uint32_t v) { return e.col < v; });
    return (it != es.end() && it->col == c) ? it->count : 0;
  }

  std::uint64_t row_total(std::size_t r) const {
    std::uint64_t s = 0;
    for (const auto& e : row(r)) s += e.count;
    return s;
  }

  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (const auto& e : entries_) s += e.count;
    return s;
  }

  friend bool operator==(const CountTable&, const CountTable&) = default;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<CountEntry> entries_;
};

}  // namespace micro
