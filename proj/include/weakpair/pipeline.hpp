#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "weakpair/corpus.hpp"
#include "weakpair/encoder.hpp"
#include "weakpair/eval.hpp"
#include "weakpair/ingest.hpp"
#include "weakpair/io.hpp"
#include "weakpair/optim.hpp"
#include "weakpair/rng.hpp"
#include "weakpair/textproc.hpp"

namespace weakpair {

/// Records -> joined relation edges.
inline JoinResult relations_from_records(std::span<const TweetRecord> records) {
  RecordIndex index(records);
  return join_reply_targets(extract_relations(records), index);
}

/// In-memory archive lines -> joined relation edges.
inline JoinResult relations_from_lines(std::span<const std::string> lines, std::string_view lang_filter,
                                       ParseStats* stats = nullptr) {
  ParseStats local;
  std::vector<TweetRecord> records;
  for (const auto& line : lines)
    if (auto r = parse_line(line, lang_filter, stats ? *stats : local)) records.push_back(std::move(*r));
  return relations_from_records(records);
}

struct BuildRequest {
  std::vector<Dataset> datasets{Dataset::qt, Dataset::rp, Dataset::coqt, Dataset::corp};
  std::size_t pairs_per_dataset = 0;  // 0 keeps every available pair
  std::vector<BenchmarkName> benchmarks{BenchmarkName::dq, BenchmarkName::dr, BenchmarkName::cq,
                                        BenchmarkName::cr};
  std::size_t bench_queries = 5000;  // 0 builds no benchmark
  std::uint64_t seed = 42;
};

struct BuildOutput {
  std::vector<RankingBenchmark> benchmarks;
  std::map<Dataset, std::vector<PairExample>> corpora;  // per dataset, sampled
  std::vector<PairExample> training;                    // concatenation in request order
  IdSet banned;
};

/// Benchmarks first (each one's ids banned from the next and from every
/// training pool), then per-dataset pairs, exclusion and sampling.
inline BuildOutput build_corpora(std::span<const RelationEdge> edges, const BuildRequest& req) {
  BuildOutput out;
  if (req.bench_queries > 0) {
    for (auto name : req.benchmarks) {
      auto bench = build_benchmark(edges, name, req.bench_queries,
                                   derive_seed(req.seed, "bench/" + std::string(to_string(name))), out.banned);
      const auto ids = bench.involved_ids();
      out.banned.insert(ids.begin(), ids.end());
      out.benchmarks.push_back(std::move(bench));
    }
  }
  for (auto d : req.datasets) {
    const auto tag = std::string(to_string(d));
    auto pairs = exclude_ids(build_dataset(edges, d, derive_seed(req.seed, "pairs/" + tag), out.banned),
                             out.banned);
    const auto n = req.pairs_per_dataset == 0 ? pairs.size() : req.pairs_per_dataset;
    if (n > pairs.size())
      throw DataError(tag + ": requested " + std::to_string(n) + " pairs, only " +
                      std::to_string(pairs.size()) + " available");
    pairs = sample_corpus(std::move(pairs), n, derive_seed(req.seed, "sample/" + tag));
    out.training.insert(out.training.end(), pairs.begin(), pairs.end());
    out.corpora[d] = std::move(pairs);
  }
  return out;
}

/// Vocabulary from training texts only.
inline Vocabulary training_vocab(std::span<const PairExample> pairs, std::size_t max_size) {
  std::vector<std::string> texts;
  texts.reserve(2 * pairs.size());
  for (const auto& p : pairs) {
    texts.push_back(p.anchor_text);
    texts.push_back(p.positive_text);
  }
  return build_vocab(texts, max_size);
}

inline EncoderModel fresh_model(std::span<const PairExample> pairs, const TrainConfig& cfg) {
  return EncoderModel::init(training_vocab(pairs, cfg.vocab_size), cfg.encoder(),
                            derive_seed(cfg.seed, "init"));
}

struct TrainedModel {
  EncoderModel model;
  TrainLog log;
};

inline TrainedModel train_fresh(std::span<const PairExample> pairs, const TrainConfig& cfg,
                                std::size_t threads = 1) {
  auto model = fresh_model(pairs, cfg);
  auto log = train(model, pairs, cfg, threads);
  return {std::move(model), std::move(log)};
}

enum class SweepAxis { corpus_size, batch_size };

inline std::string_view to_string(SweepAxis a) {
  return a == SweepAxis::corpus_size ? "corpus_size" : "batch_size";
}

struct SweepPoint {
  std::size_t value = 0;
  std::size_t pairs = 0;
  std::size_t steps = 0;
  double final_loss = 0.0;
  EvalReport report;
};

inline void check_sweep_values(std::span<const std::size_t> values) {
  if (values.empty()) throw UsageError("sweep needs at least one value");
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] == values[i - 1]) throw UsageError("sweep values contain a duplicate: " + std::to_string(values[i]));
    if (values[i] < values[i - 1]) throw UsageError("sweep values must be sorted ascending");
  }
}

/// One fresh model per value, evaluated on one fixed benchmark. Corpus
/// sizes are nested prefixes of one seeded shuffle of `pool`; batch-size
/// points all train on `pool` (or its first `corpus_size` pairs when set).
inline std::vector<SweepPoint> run_sweep(SweepAxis axis, std::span<const std::size_t> values,
                                         std::span<const PairExample> pool, const RankingBenchmark& bench,
                                         const TrainConfig& base, std::size_t corpus_size = 0,
                                         std::size_t threads = 1) {
  check_sweep_values(values);
  const std::vector<PairExample> all(pool.begin(), pool.end());
  std::vector<SweepPoint> points;
  for (auto value : values) {
    TrainConfig cfg = base;
    std::vector<PairExample> pairs;
    if (axis == SweepAxis::corpus_size) {
      pairs = sample_corpus(all, value, derive_seed(base.seed, "sweep/sample"));
    } else {
      cfg.batch_size = value;
      pairs = corpus_size == 0 ? all : sample_corpus(all, corpus_size, derive_seed(base.seed, "sweep/sample"));
    }
    auto trained = train_fresh(pairs, cfg, threads);
    SweepPoint point{value, pairs.size(), trained.log.batches.size(),
                     trained.log.batches.empty() ? 0.0 : trained.log.batches.back().loss,
                     eval_ranking(trained.model, bench, 0, threads)};
    point.report.meta["axis"] = std::string(to_string(axis));
    point.report.meta["axis_value"] = value;
    points.push_back(std::move(point));
  }
  return points;
}

/// Consecutive sweep steps whose metric did not decrease.
inline std::size_t non_decreasing_steps(std::span<const SweepPoint> points) {
  std::size_t count = 0;
  for (std::size_t i = 1; i < points.size(); ++i)
    if (points[i].report.value >= points[i - 1].report.value) ++count;
  return count;
}

inline std::string sweep_csv(SweepAxis axis, std::span<const SweepPoint> points) {
  std::string csv = std::string(to_string(axis)) + ",pairs,steps,final_loss,ndcg\n";
  for (const auto& p : points) {
    csv += std::to_string(p.value) + "," + std::to_string(p.pairs) + "," + std::to_string(p.steps) + "," +
           nlohmann::json(p.final_loss).dump() + "," + nlohmann::json(p.report.value).dump() + "\n";
  }
  return csv;
}

/// Run manifest: everything needed to reproduce a subcommand's outputs.
struct RunManifest {
  std::string subcommand;
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;

  nlohmann::json to_json() const {
    nlohmann::json in = nlohmann::json::array(), out = nlohmann::json::array();
    for (const auto& p : inputs) {
      in.push_back({{"path", p.string()},
                    {"digest", std::filesystem::is_regular_file(p) ? io::file_digest(p) : ""}});
    }
    for (const auto& p : outputs) {
      out.push_back({{"path", p.string()},
                     {"digest", std::filesystem::is_regular_file(p) ? io::file_digest(p) : ""}});
    }
    return {{"subcommand", subcommand}, {"seed", seed}, {"config", config}, {"inputs", in}, {"outputs", out}};
  }

  void write(const std::filesystem::path& path) const { io::write_file(path, to_json().dump(2) + "\n"); }
};

}  // namespace weakpair
