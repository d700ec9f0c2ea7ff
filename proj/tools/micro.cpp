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

// micro: command-line driver for the temporal interest-model retrieval pipeline.
//
//   micro ingest   --input edges.tsv --output run/
//   micro embed    --output run/
//   micro cluster  --output run/ --interests 500
//   micro init     --output run/
//   micro backtest --output run/ --methods micro,ann,popularity --M 50,100
//   micro report   --output run/
//   micro synth    --synth-out data/ --users 200 --items 500
//
// Every option can also come from an INI file passed with --config.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "micro/micro.hpp"

namespace {

using micro::RunConfig;

struct Options {
  RunConfig run;
  std::string delimiter = "tab";
  std::string score = "dot";
  std::string user_counts = "reset";
  std::string cold = "popularity";
  std::string ann_index = "exact";
  std::string log_level = "info";

  micro::SynthSpec synth;
  std::string synth_out = "synth";
  std::string drift = "fresh";
};

void add_run_options(CLI::App& app, Options& o) {
  RunConfig& r = o.run;
  app.add_option("--output,-o", r.output_dir, "run directory holding every artifact");
  app.add_option("--input,-i", r.input, "edge list: user item chunk per line");
  app.add_option("--delimiter", o.delimiter, "edge list field delimiter: tab, space, comma or a single character");
  app.add_option("--regroup", r.regroup, "coarsen chunks by this integer factor")->check(CLI::PositiveNumber);
  app.add_option("--subsample", r.subsample, "fraction of users to keep")->check(CLI::Range(0.0, 1.0));
  app.add_option("--test-chunks", r.test_chunks, "trailing chunks held out for the backtest");

  app.add_option("--dim", r.embedding.dim, "embedding dimension");
  app.add_option("--epochs", r.embedding.epochs, "embedding epochs");
  app.add_option("--negatives", r.embedding.negatives, "uniform negatives per positive edge");
  app.add_option("--lr", r.embedding.learning_rate, "embedding learning rate");
  app.add_option("--score", o.score, "embedding score function: dot or translation");

  app.add_option("--interests,-K", r.num_interests, "number of interests K");
  app.add_option("--kmeans-iters", r.kmeans_iters, "spherical k-means iterations");
  app.add_option("--alpha", r.alpha, "user-interest prior mass on the support");
  app.add_option("--beta", r.beta, "interest-item prior mass");
  app.add_option("--max-sweeps", r.sampler.max_sweeps, "Gibbs sweeps per chunk at most");
  app.add_option("--tol", r.sampler.convergence_tol, "relative log-joint change that stops sweeping");
  app.add_option("--user-counts", o.user_counts, "reset (N_uk0 each chunk) or accumulate");

  app.add_option("--M", r.Ms, "candidate cutoffs, comma separated")->delimiter(',');
  app.add_option("--L", r.L, "per-interest truncation (0 = 5 x max M)");
  app.add_option("--exclude-seen", r.exclude_seen, "drop items the user engaged before the query chunk");
  app.add_option("--cold", o.cold, "cold-user policy: popularity or empty");
  app.add_option("--methods", r.methods, "subset of micro,mle,ann,popularity")->delimiter(',');
  app.add_option("--ann-index", o.ann_index, "exact or ivf");
  app.add_option("--ivf-nlist", r.ivf_nlist, "IVF lists (0 = sqrt of pool size)");
  app.add_option("--ivf-nprobe", r.ivf_nprobe, "IVF lists probed per query");
  app.add_flag("--dump-candidates", r.dump_candidates, "write ranked candidates per chunk and method");
  app.add_flag("--prepare", r.prepare, "build missing upstream artifacts instead of failing");

  app.add_option("--seed", r.seed, "run seed");
  app.add_option("--threads,-j", r.threads, "worker threads (0 = all cores)");
  app.add_option("--log-level", o.log_level, "debug, info, warn, error or off");
}

void add_synth_options(CLI::App& app, Options& o) {
  micro::SynthSpec& s = o.synth;
  app.add_option("--synth-out", o.synth_out, "directory for edges.tsv and truth files");
  app.add_option("--users", s.num_users);
  app.add_option("--items", s.num_items);
  app.add_option("--synth-interests", s.num_interests);
  app.add_option("--chunks", s.num_chunks);
  app.add_option("--per-user", s.engagements_per_user, "engagements per user per chunk");
  app.add_flag("--poisson", s.poisson_engagements, "draw engagements per user per chunk from a Poisson");
  app.add_option("--support", s.support_size, "interests per user");
  app.add_option("--theta-concentration", s.theta_concentration);
  app.add_option("--beta-gen", s.beta_gen);
  app.add_option("--separated", s.separated, "give each interest its own item block");
  app.add_option("--drift", o.drift, "fresh or static");
  app.add_option("--synth-seed", s.seed);
}

char parse_delimiter(const std::string& d) {
  if (d == "tab" || d == "\\t") return '\t';
  if (d == "space") return ' ';
  if (d == "comma") return ',';
  if (d.size() == 1) return d[0];
  throw micro::InvalidArgument("unknown delimiter '" + d + "'");
}

micro::LogLevel parse_level(const std::string& s) {
  if (s == "debug") return micro::LogLevel::kDebug;
  if (s == "info") return micro::LogLevel::kInfo;
  if (s == "warn") return micro::LogLevel::kWarn;
  if (s == "error") return micro::LogLevel::kError;
  if (s == "off") return micro::LogLevel::kOff;
  throw micro::InvalidArgument("unknown log level '" + s + "'");
}

void finalize(Options& o) {
  RunConfig& r = o.run;
  r.delimiter = parse_delimiter(o.delimiter);
  if (o.score == "dot") r.embedding.score = micro::ScoreFunction::kDot;
  else if (o.score == "translation") r.embedding.score = micro::ScoreFunction::kTranslation;
  else throw micro::InvalidArgument("unknown score function '" + o.score + "'");
  if (o.user_counts == "reset") r.sampler.user_count_mode = micro::UserCountMode::kResetToTrain;
  else if (o.user_counts == "accumulate") r.sampler.user_count_mode = micro::UserCountMode::kAccumulate;
  else throw micro::InvalidArgument("unknown user-counts mode '" + o.user_counts + "'");
  if (o.cold == "popularity") r.cold_user_policy = micro::ColdUserPolicy::kPopularityFallback;
  else if (o.cold == "empty") r.cold_user_policy = micro::ColdUserPolicy::kEmpty;
  else throw micro::InvalidArgument("unknown cold-user policy '" + o.cold + "'");
  if (o.ann_index == "exact") r.ann_index = micro::AnnIndexKind::kExact;
  else if (o.ann_index == "ivf") r.ann_index = micro::AnnIndexKind::kIvf;
  else throw micro::InvalidArgument("unknown ANN index '" + o.ann_index + "'");
  if (o.drift == "fresh") o.synth.drift = micro::PhiDrift::kFresh;
  else if (o.drift == "static") o.synth.drift = micro::PhiDrift::kStatic;
  else throw micro::InvalidArgument("unknown drift '" + o.drift + "'");
  micro::set_log_level(parse_level(o.log_level));
}

void print_report(const micro::MetricsReport& report) {
  for (const auto& [key, summary] : report.summaries)
    fmt::print("{:<11} M={:<4} recall={:.4f} mrr={:.4f} ndcg={:.4f} queries={}\n", key.first, key.second,
               summary.overall.recall, summary.overall.mrr, summary.overall.ndcg, summary.overall.queries);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"micro: temporal interest-model candidate retrieval"};
  app.set_config("--config", "", "INI config file; flags override it");
  app.require_subcommand(1);
  Options o;
  add_run_options(app, o);
  add_synth_options(app, o);

  auto* ingest = app.add_subcommand("ingest", "load, re-chunk and subsample an edge list");
  auto* embed = app.add_subcommand("embed", "train user and item embeddings on the train chunks");
  auto* cluster = app.add_subcommand("cluster", "spherical k-means over item embeddings");
  auto* init = app.add_subcommand("init", "build t=0 counts from the item clusters");
  auto* backtest = app.add_subcommand("backtest", "fit on t, evaluate on t+1 for every test chunk");
  auto* report = app.add_subcommand("report", "rebuild metrics, tables and series from evaluations");
  auto* synth = app.add_subcommand("synth", "sample a synthetic engagement graph with known truth");
  for (auto* sub : {ingest, embed, cluster, init, backtest, report, synth}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);
  try {
    finalize(o);
    if (*ingest) {
      const auto g = micro::run_ingest(o.run);
      fmt::print("{}", g.stats().to_text());
    } else if (*embed) {
      micro::run_embed(o.run);
    } else if (*cluster) {
      micro::run_cluster(o.run);
    } else if (*init) {
      const auto a = micro::run_init(o.run);
      fmt::print("users {}\ninterests {}\ncold_users {}\n", a.num_users, a.num_interests, a.cold_users());
    } else if (*backtest) {
      print_report(micro::run_backtest(o.run));
    } else if (*report) {
      print_report(micro::run_report(o.run));
    } else if (*synth) {
      const auto data = micro::generate(o.synth);
      micro::save_synth(o.synth_out, data);
      fmt::print("edges {}\nusers {}\nitems {}\nchunks {}\n", data.graph.edges.size(), data.graph.num_users,
                 data.graph.num_items, data.graph.num_chunks);
    }
  } catch (const micro::MissingArtifact& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 3;
  } catch (const micro::ParseError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
