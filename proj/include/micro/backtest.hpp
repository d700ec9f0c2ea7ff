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
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <fmt/core.h>
#include <fmt/format.h>

#include "micro/embedding.hpp"
#include "micro/graph.hpp"
#include "micro/init.hpp"
#include "micro/io.hpp"
#include "micro/log.hpp"
#include "micro/metrics.hpp"
#include "micro/retrieval.hpp"
#include "micro/sampler.hpp"
#include "micro/skmeans.hpp"

namespace micro {

namespace fs = std::filesystem;

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m = {"micro", "mle", "ann", "popularity"};
  return m;
}

enum class AnnIndexKind { kExact, kIvf };

/// Everything a pipeline run depends on. Every stage reads and writes
/// artifacts under `output_dir`.
struct RunConfig {
  fs::path input;                 // edge list for `ingest`
  char delimiter = '\t';
  std::size_t regroup = 1;        // chunk coarsening factor
  double subsample = 1.0;         // fraction of users kept
  std::size_t test_chunks = 3;    // trailing chunks held out

  EmbeddingParams embedding;
  std::size_t num_interests = 100;
  std::size_t kmeans_iters = 25;
  double alpha = 0.1;
  double beta = 0.01;
  SamplerConfig sampler;

  std::vector<std::size_t> Ms = {100};
  std::size_t L = 0;              // 0 means 5 * max(M)
  bool exclude_seen = true;
  ColdUserPolicy cold_user_policy = ColdUserPolicy::kPopularityFallback;
  AnnIndexKind ann_index = AnnIndexKind::kExact;
  std::size_t ivf_nlist = 0;      // 0 means round(sqrt(pool size))
  std::size_t ivf_nprobe = 8;
  std::vector<std::string> methods = {"micro", "mle", "ann", "popularity"};
  bool dump_candidates = false;
  bool prepare = false;           // build missing upstream artifacts instead of failing

  std::uint64_t seed = 0;
  std::size_t threads = 1;
  fs::path output_dir = "run";

  std::size_t max_m() const { return *std::max_element(Ms.begin(), Ms.end()); }

  RetrievalConfig retrieval() const {
    RetrievalConfig r;
    r.M = max_m();
    r.L = L;
    r.exclude_seen = exclude_seen;
    r.cold_user_policy = cold_user_policy;
    return r;
  }

  bool runs(std::string_view method) const { return std::find(methods.begin(), methods.end(), method) != methods.end(); }

  void validate() const {
    if (Ms.empty()) throw InvalidArgument("the M list must not be empty");
    for (auto m : Ms)
      if (m < 1) throw InvalidArgument("every M must be >= 1");
    if (methods.empty()) throw InvalidArgument("no retrieval methods selected");
    for (const auto& m : methods)
      if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
        throw InvalidArgument(fmt::format("unknown method '{}'", m));
    if (test_chunks < 2) throw InvalidArgument("at least 2 test chunks are needed (fit on t, evaluate on t+1)");
    if (num_interests < 1) throw InvalidArgument("K must be >= 1");
    if (!(alpha > 0.0) || !(beta > 0.0)) throw InvalidArgument("alpha and beta must be positive");
    retrieval().validate();
    sampler.validate();
  }

  // Seeds for each randomized stage, derived from the single run seed.
  std::uint64_t embed_seed() const { return mix_seed(seed, 1); }
  std::uint64_t cluster_seed() const { return mix_seed(seed, 2); }
  std::uint64_t sampler_seed() const { return mix_seed(seed, 3); }
  std::uint64_t subsample_seed() const { return mix_seed(seed, 4); }
  std::uint64_t ivf_seed() const { return mix_seed(seed, 5); }
};

/// Values that determine the chunk models; a change invalidates persisted fits.
inline std::string model_fingerprint(const RunConfig& c) {
  return fmt::format(
      "regroup {}\nsubsample {:.17g}\ntest_chunks {}\ndim {}\nepochs {}\nnegatives {}\nlr {:.17g}\nscore {}\n"
      "interests {}\nkmeans_iters {}\nalpha {:.17g}\nbeta {:.17g}\nmax_sweeps {}\ntol {:.17g}\nuser_counts {}\nseed {}\n",
      c.regroup, c.subsample, c.test_chunks, c.embedding.dim, c.embedding.epochs, c.embedding.negatives,
      c.embedding.learning_rate, static_cast<int>(c.embedding.score), c.num_interests, c.kmeans_iters, c.alpha, c.beta,
      c.sampler.max_sweeps, c.sampler.convergence_tol, static_cast<int>(c.sampler.user_count_mode), c.seed);
}

/// Model fingerprint plus everything that changes per-query results.
inline std::string eval_fingerprint(const RunConfig& c) {
  std::string s = model_fingerprint(c);
  s += fmt::format("M {}\nL {}\nexclude_seen {}\ncold {}\nann_index {}\nnlist {}\nnprobe {}\nmethods {}\n",
                   fmt::join(c.Ms, ","), c.L, c.exclude_seen ? 1 : 0, static_cast<int>(c.cold_user_policy),
                   static_cast<int>(c.ann_index), c.ivf_nlist, c.ivf_nprobe, fmt::join(c.methods, ","));
  return s;
}

struct RunPaths {
  fs::path root;
  fs::path graph() const { return root / "graph"; }
  fs::path embeddings() const { return root / "embeddings.bin"; }
  fs::path clusters() const { return root / "clusters.tsv"; }
  fs::path init() const { return root / "init"; }
  fs::path chunks() const { return root / "chunks"; }
  fs::path chunk_model(ChunkId t) const { return chunks() / fmt::format("chunk_{}.model", t); }
  fs::path chunk_trace(ChunkId t) const { return chunks() / fmt::format("chunk_{}.trace.tsv", t); }
  fs::path eval() const { return root / "eval"; }
  fs::path eval_chunk(ChunkId t) const { return eval() / fmt::format("chunk_{}.tsv", t); }
  fs::path candidates(ChunkId t, std::string_view method) const {
    return root / "candidates" / fmt::format("chunk_{}_{}.tsv", t, method);
  }
  fs::path metrics() const { return root / "metrics.tsv"; }
  fs::path table(std::size_t M) const { return root / fmt::format("table_M{}.tsv", M); }
  fs::path series(std::string_view metric, std::size_t M) const {
    return root / fmt::format("series_{}_M{}.tsv", metric, M);
  }
};

// ---- stages -----------------------------------------------------------------

inline EngagementGraph run_ingest(const RunConfig& cfg) {
  if (cfg.input.empty()) throw InvalidArgument("ingest needs an input edge list");
  if (!fs::exists(cfg.input)) throw InvalidArgument("input edge list not found: " + cfg.input.string());
  EngagementGraph g = load_edge_list(cfg.input, EdgeListFormat{cfg.delimiter});
  if (cfg.regroup > 1) g = regroup_chunks(g, cfg.regroup);
  if (cfg.subsample < 1.0) g = subsample_users(g, cfg.subsample, cfg.subsample_seed());
  g.validate();
  save_graph(RunPaths{cfg.output_dir}.graph(), g);
  log_info("ingested", "users={} items={} chunks={} edges={}", g.num_users, g.num_items, g.num_chunks, g.edges.size());
  return g;
}

inline EngagementGraph require_graph(const RunConfig& cfg) {
  const RunPaths p{cfg.output_dir};
  if (cfg.prepare && !fs::exists(p.graph() / "graph.tsv")) return run_ingest(cfg);
  return load_graph(p.graph());
}

inline TrainTestSplit split_for_run(const EngagementGraph& g, const RunConfig& cfg) {
  if (g.num_chunks <= cfg.test_chunks)
    throw InvalidArgument(fmt::format("graph has {} chunks; holding out {} leaves no train chunk", g.num_chunks,
                                      cfg.test_chunks));
  return split(g, SplitSpec{g.num_chunks - cfg.test_chunks});
}

inline EmbeddingTable run_embed(const RunConfig& cfg) {
  const auto g = require_graph(cfg);
  const auto s = split_for_run(g, cfg);
  EmbeddingParams params = cfg.embedding;
  params.seed = cfg.embed_seed();
  EmbeddingTable emb = train_embeddings(s.train, params);
  save_embeddings(RunPaths{cfg.output_dir}.embeddings(), emb);
  log_info("embedded", "dim={} epochs={} final_loss={:.6f}", emb.dim, params.epochs,
           emb.epoch_loss.empty() ? 0.0 : emb.epoch_loss.back());
  return emb;
}

inline EmbeddingTable require_embeddings(const RunConfig& cfg) {
  const RunPaths p{cfg.output_dir};
  if (cfg.prepare && !fs::exists(p.embeddings())) return run_embed(cfg);
  return load_embeddings(p.embeddings());
}

inline ClusterAssignment run_cluster(const RunConfig& cfg) {
  const auto emb = require_embeddings(cfg);
  ClusterAssignment c = cluster_items(emb, ClusterParams{cfg.num_interests, cfg.kmeans_iters, cfg.cluster_seed(), cfg.threads});
  save_cluster_map(RunPaths{cfg.output_dir}.clusters(), c);
  log_info("clustered", "interests={} zero_vectors={} objective={:.6f}", c.num_interests, c.zero_vectors,
           c.objective_trace.empty() ? 0.0 : c.objective_trace.back());
  return c;
}

inline ClusterAssignment require_clusters(const RunConfig& cfg) {
  const RunPaths p{cfg.output_dir};
  if (cfg.prepare && !fs::exists(p.clusters())) return run_cluster(cfg);
  return load_cluster_map(p.clusters());
}

inline InitArtifact run_init(const RunConfig& cfg) {
  const auto g = require_graph(cfg);
  const auto s = split_for_run(g, cfg);
  const auto c = require_clusters(cfg);
  if (c.item_to_interest.size() != g.num_items) throw Inconsistency("cluster map does not cover the graph's items");
  InitArtifact a = build_init(s.train, c, cfg.alpha, cfg.beta);
  const RunPaths p{cfg.output_dir};
  fs::create_directories(p.init());
  save_init(p.init(), a);
  return a;
}

inline InitArtifact require_init(const RunConfig& cfg) {
  const RunPaths p{cfg.output_dir};
  if (cfg.prepare && !fs::exists(p.init() / "meta.txt")) return run_init(cfg);
  return load_init(p.init());
}

// ---- per-query results --------------------------------------------------------

/// Metrics of one method at one M for every query of one chunk, query order fixed.
struct ChunkEval {
  ChunkId chunk = 0;
  std::vector<UserId> users;
  std::map<std::pair<std::string, std::size_t>, std::vector<QueryMetrics>> rows;
};

inline std::string format_chunk_eval(const ChunkEval& e) {
  std::string s = "method\tM\tuser\trecall\tmrr\tndcg\n";
  for (const auto& [key, metrics] : e.rows)
    for (std::size_t q = 0; q < metrics.size(); ++q)
      s += fmt::format("{}\t{}\t{}\t{:.17g}\t{:.17g}\t{:.17g}\n", key.first, key.second, e.users[q], metrics[q].recall,
                       metrics[q].mrr, metrics[q].ndcg);
  return s;
}

inline ChunkEval parse_chunk_eval(const fs::path& path, ChunkId chunk) {
  ChunkEval e;
  e.chunk = chunk;
  std::map<std::pair<std::string, std::size_t>, std::vector<UserId>> users;
  io::for_each_line(path, [&](std::size_t number, std::string_view line) {
    if (number == 1 || line.empty()) return;
    const auto f = io::split_fields(line, '\t');
    if (f.size() != 6) throw ParseError("expected 6 eval fields", number);
    const std::pair<std::string, std::size_t> key{std::string(f[0]), io::parse_or_throw<std::size_t>(f[1], number, "M")};
    users[key].push_back(io::parse_or_throw<UserId>(f[2], number, "user"));
    e.rows[key].push_back({io::parse_or_throw<double>(f[3], number, "recall"),
                           io::parse_or_throw<double>(f[4], number, "mrr"),
                           io::parse_or_throw<double>(f[5], number, "ndcg")});
  });
  for (const auto& [key, u] : users) {
    if (e.users.empty()) e.users = u;
    if (u != e.users) throw Inconsistency(fmt::format("{}: methods disagree on the query set", path.string()));
  }
  return e;
}

namespace detail {

inline void sync_fingerprint(const fs::path& dir, const std::string& fingerprint, std::string_view what) {
  const fs::path f = dir / "fingerprint.txt";
  fs::create_directories(dir);
  if (fs::exists(f) && io::read_file(f) == fingerprint) return;
  if (fs::exists(f)) {
    log_warn("stale_outputs", "dir={} what={} action=discard", dir.string(), what);
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.path().extension() != ".txt") fs::remove(entry.path());
  }
  io::atomic_write(f, fingerprint);
}

inline std::string format_candidates(const std::vector<CandidateList>& lists, const EngagementGraph& g,
                                     std::string_view method) {
  std::string s = "user\tchunk\trank\titem\tscore\tmethod\n";
  for (const auto& c : lists)
    for (std::size_t r = 0; r < c.items.size(); ++r)
      s += fmt::format("{}\t{}\t{}\t{}\t{:.17g}\t{}\n", g.users.raw(c.user), c.chunk, r + 1, g.items.raw(c.items[r].item),
                       c.items[r].score, method);
  return s;
}

}  // namespace detail

// ---- report ---------------------------------------------------------------------

/// Aggregates every per-chunk eval file in the run into metrics.tsv, one
/// side-by-side table per M and one series file per (metric, M).
inline MetricsReport run_report(const RunConfig& cfg) {
  const RunPaths p{cfg.output_dir};
  if (!fs::exists(p.eval())) throw MissingArtifact("no evaluation outputs in " + p.root.string() + "; run `micro backtest` first");
  std::vector<ChunkId> chunks;
  for (const auto& entry : fs::directory_iterator(p.eval())) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("chunk_", 0) != 0 || entry.path().extension() != ".tsv") continue;
    ChunkId t = 0;
    if (!io::parse_number(std::string_view(name).substr(6, name.size() - 10), t)) continue;
    chunks.push_back(t);
  }
  std::sort(chunks.begin(), chunks.end());
  if (chunks.empty()) throw MissingArtifact("no evaluated chunks in " + p.eval().string() + "; run `micro backtest` first");

  std::map<std::pair<std::string, std::size_t>, std::pair<std::vector<QueryMetrics>, QuerySet>> flat;
  for (ChunkId t : chunks) {
    const ChunkEval e = parse_chunk_eval(p.eval_chunk(t), t);
    for (const auto& [key, metrics] : e.rows) {
      auto& [m, qs] = flat[key];
      m.insert(m.end(), metrics.begin(), metrics.end());
      for (UserId u : e.users) qs.queries.push_back(Query{u, t, {}});
    }
  }
  MetricsReport report;
  std::set<std::string> present;
  for (const auto& [key, data] : flat) {
    report.summaries[key] = aggregate(data.first, data.second);
    present.insert(key.first);
  }
  for (const auto& m : cfg.methods)
    if (!present.count(m)) log_warn("report_method_missing", "method={} action=omit", m);

  io::atomic_write(p.metrics(), format_report(report));
  std::set<std::size_t> Ms;
  for (const auto& [key, s] : report.summaries) Ms.insert(key.second);
  for (std::size_t M : Ms) {
    std::string table = "method\trecall\tmrr\tndcg\tqueries\n";
    std::vector<std::string> methods;
    for (const auto& name : known_methods())
      if (report.summaries.count({name, M})) methods.push_back(name);
    for (const auto& name : methods) {
      const auto& o = report.summaries.at({name, M}).overall;
      table += fmt::format("{}\t{:.17g}\t{:.17g}\t{:.17g}\t{}\n", name, o.recall, o.mrr, o.ndcg, o.queries);
    }
    io::atomic_write(p.table(M), table);
    for (const char* metric : {"recall", "mrr", "ndcg"}) {
      std::string series = fmt::format("chunk\tqueries\t{}\n", fmt::join(methods, "\t"));
      for (ChunkId t : chunks) {
        const auto& first = report.summaries.at({methods.front(), M}).per_chunk;
        if (!first.count(t)) continue;
        series += fmt::format("{}\t{}", t, first.at(t).queries);
        for (const auto& name : methods) {
          const auto& c = report.summaries.at({name, M}).per_chunk.at(t);
          const double v = metric[0] == 'r' ? c.recall : metric[0] == 'm' ? c.mrr : c.ndcg;
          series += fmt::format("\t{:.17g}", v);
        }
        series += "\n";
      }
      io::atomic_write(p.series(metric, M), series);
    }
  }
  log_info("report_written", "methods={} chunks={} cutoffs={}", present.size(), chunks.size(), Ms.size());
  return report;
}

// ---- backtest -------------------------------------------------------------------

/// Rolling protocol: for each consecutive test pair (t, t+1), fit chunk t,
/// build every method's state from chunk t, retrieve for the queries of chunk
/// t+1 and score them. Chunk models and per-chunk evaluations are persisted
/// and reused, so an interrupted run resumes where it stopped.
inline MetricsReport run_backtest(const RunConfig& cfg) {
  cfg.validate();
  const RunPaths p{cfg.output_dir};
  const EngagementGraph g = require_graph(cfg);
  const TrainTestSplit s = split_for_run(g, cfg);
  const InitArtifact init = require_init(cfg);
  if (init.num_users != g.num_users || init.num_items != g.num_items)
    throw Inconsistency("init artifact does not match the ingested graph; rerun `micro init`");
  std::optional<EmbeddingTable> emb;
  if (cfg.runs("ann")) emb = require_embeddings(cfg);
  std::optional<MleMixture> mix;
  if (cfg.runs("mle")) mix = mle_mixture(init);

  detail::sync_fingerprint(p.chunks(), model_fingerprint(cfg), "chunk models");
  detail::sync_fingerprint(p.eval(), eval_fingerprint(cfg), "evaluations");
  if (cfg.dump_candidates) fs::create_directories(p.root / "candidates");

  SamplerConfig scfg = cfg.sampler;
  scfg.seed = cfg.sampler_seed();
  const RetrievalConfig rcfg = cfg.retrieval();
  const bool need_model = cfg.runs("micro") || cfg.sampler.user_count_mode == UserCountMode::kAccumulate;

  SeenItems seen = SeenItems::from_graph(s.train);
  std::shared_ptr<const CountTable> base;  // null means N_uk0
  for (std::size_t j = 0; j + 1 < s.test.size(); ++j) {
    const ChunkSlice& fit = s.test[j];
    const ChunkSlice& target = s.test[j + 1];
    seen.add(fit);

    std::optional<ChunkModel> model;
    if (cfg.runs("micro")) {
      const fs::path mp = p.chunk_model(fit.chunk);
      if (fs::exists(mp)) {
        model = load_chunk_model(mp, fit, init, base);
        log_info("chunk_resumed", "chunk={} engagements={}", fit.chunk, fit.size());
      } else {
        model = fit_chunk(fit, init, scfg, base);
        save_chunk_model(mp, *model);
        io::atomic_write(p.chunk_trace(fit.chunk), format_sweep_trace(*model));
      }
      if (cfg.sampler.user_count_mode == UserCountMode::kAccumulate)
        base = std::make_shared<const CountTable>(accumulate_user_counts(*model));
    } else if (need_model) {
      throw InvalidArgument("accumulate mode requires the micro method");
    }

    if (fs::exists(p.eval_chunk(target.chunk))) {
      log_info("chunk_eval_resumed", "chunk={}", target.chunk);
      continue;
    }

    const QuerySet qs = build_queries(std::span<const ChunkSlice>(&target, 1));
    const PopularityRanking popularity = build_popularity(fit);
    const QueryContext ctx{target.chunk, &seen, &popularity};
    const std::vector<ItemId> pool = fit.item_pool();

    ChunkEval eval;
    eval.chunk = target.chunk;
    for (const auto& q : qs.queries) eval.users.push_back(q.user);

    auto run_method = [&](const std::string& name, auto&& retrieve) {
      std::vector<CandidateList> lists(qs.queries.size());
      parallel_for(qs.queries.size(), cfg.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t q = b; q < e; ++q) lists[q] = retrieve(qs.queries[q].user);
      });
      for (std::size_t M : cfg.Ms) {
        auto& rows = eval.rows[{name, M}];
        rows.reserve(lists.size());
        for (std::size_t q = 0; q < lists.size(); ++q) rows.push_back(score_query(lists[q], qs.queries[q], M));
      }
      if (cfg.dump_candidates) io::atomic_write(p.candidates(target.chunk, name), detail::format_candidates(lists, g, name));
    };

    for (const auto& name : cfg.methods) {
      if (name == "micro") {
        const ScoredInterestIndex idx = build_index(*model, rcfg);
        run_method(name, [&](UserId u) { return retrieve_micro(u, *model, idx, init, rcfg, ctx); });
      } else if (name == "mle") {
        run_method(name, [&](UserId u) { return retrieve_mle(u, *mix, rcfg, ctx, pool); });
      } else if (name == "ann") {
        const ItemVectors vecs = ann_encode_items(fit, *emb);
        std::optional<IvfIndex> ivf;
        if (cfg.ann_index == AnnIndexKind::kIvf) {
          const std::size_t nlist = cfg.ivf_nlist ? cfg.ivf_nlist
                                                  : static_cast<std::size_t>(std::lround(std::sqrt(double(pool.size()))));
          ivf.emplace(vecs, nlist, cfg.ivf_seed());
        }
        run_method(name, [&](UserId u) {
          if (init.is_cold(u)) return cold_user_candidates(u, rcfg, ctx);
          return ivf ? ivf->search(u, *emb, rcfg, ctx, cfg.ivf_nprobe) : ann_retrieve(u, vecs, *emb, rcfg, ctx);
        });
      } else if (name == "popularity") {
        run_method(name, [&](UserId u) { return popularity_retrieve(popularity, u, rcfg, ctx); });
      }
    }
    io::atomic_write(p.eval_chunk(target.chunk), format_chunk_eval(eval));
    log_info("chunk_evaluated", "fit_chunk={} target_chunk={} queries={} methods={}", fit.chunk, target.chunk,
             qs.queries.size(), cfg.methods.size());
  }
  return run_report(cfg);
}

}  // namespace micro
