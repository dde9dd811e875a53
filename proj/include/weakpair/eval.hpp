#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "weakpair/corpus.hpp"
#include "weakpair/encoder.hpp"
#include "weakpair/errors.hpp"
#include "weakpair/io.hpp"
#include "weakpair/parallel.hpp"
#include "weakpair/textproc.hpp"

namespace weakpair {

inline double cosine_similarity(const Vector& u, const Vector& v) {
  if (u.size() != v.size()) throw UsageError("cosine_similarity: dimension mismatch");
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) throw NumericError("cosine_similarity: zero vector");
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

/// DCG with log2(k + 1) discount, 1-based ranks; at_k = 0 means no cutoff.
inline double dcg(std::span<const double> relevances, std::size_t at_k = 0) {
  const std::size_t k = at_k == 0 ? relevances.size() : std::min(at_k, relevances.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += relevances[i] / std::log2(static_cast<double>(i) + 2.0);
  return sum;
}

/// DCG of the given ranking divided by DCG of the ideal (descending) one.
inline double ndcg(std::span<const double> relevances, std::size_t at_k = 0) {
  for (double r : relevances)
    if (!(r >= 0.0)) throw UsageError("ndcg: relevances must be non-negative");
  std::vector<double> ideal(relevances.begin(), relevances.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double best = dcg(ideal, at_k);
  if (best <= 0.0) throw NumericError("ndcg: ideal DCG is zero (no relevant candidate)");
  return dcg(relevances, at_k) / best;
}

/// Sample Pearson correlation.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw UsageError("pearson: need two equal-length series of size >= 2");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw NumericError("pearson: constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Candidate indices sorted by descending cosine to the query; equal
/// scores keep index order.
inline std::vector<std::size_t> rank_candidates(const Vector& query, std::span<const Vector> candidates) {
  std::vector<double> score(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) score[i] = cosine_similarity(query, candidates[i]);
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  return order;
}

struct EvalReport {
  std::string benchmark;
  std::string metric;  // "nDCG" or "Pearson"
  double value = 0.0;
  std::vector<double> per_query;
  nlohmann::json meta = nlohmann::json::object();

  nlohmann::json to_json() const {
    return {{"benchmark", benchmark}, {"metric", metric}, {"value", value},
            {"per_query", per_query}, {"meta", meta}};
  }
};

/// Mean nDCG over queries. `embed` maps a text to a vector; candidates are
/// the 5 positives (relevance 1) followed by the 25 negatives (relevance 0).
template <class Embed>
EvalReport eval_ranking(const Embed& embed, const RankingBenchmark& bench, std::size_t at_k = 0,
                        std::size_t threads = 1) {
  if (bench.queries.empty()) throw DataError("benchmark has no queries");
  EvalReport report{std::string(to_string(bench.name)), "nDCG", 0.0, {}, nlohmann::json::object()};
  report.per_query.resize(bench.queries.size());
  parallel_for(bench.queries.size(), threads, [&](std::size_t qi) {
    const auto& q = bench.queries[qi];
    check_shape(q, "query " + std::to_string(qi));
    try {
      const Vector query = embed(q.query);
      std::vector<Vector> candidates;
      std::vector<double> relevance;
      for (const auto& t : q.positives) {
        candidates.push_back(embed(t));
        relevance.push_back(1.0);
      }
      for (const auto& t : q.negatives) {
        candidates.push_back(embed(t));
        relevance.push_back(0.0);
      }
      std::vector<double> ranked;
      for (auto i : rank_candidates(query, candidates)) ranked.push_back(relevance[i]);
      report.per_query[qi] = ndcg(ranked, at_k);
    } catch (const std::exception& e) {
      throw NumericError("query " + std::to_string(qi) + " ('" + q.query + "'): " + e.what());
    }
  });
  report.value = std::accumulate(report.per_query.begin(), report.per_query.end(), 0.0) /
                 static_cast<double>(report.per_query.size());
  if (at_k != 0) report.meta["at_k"] = at_k;
  return report;
}

/// Embeds raw or cleaned text with an encoder (text is cleaned first).
inline auto text_embedder(const EncoderModel& model) {
  return [&model](std::string_view text) { return model.encode_text(clean(text)); };
}

inline EvalReport eval_ranking(const EncoderModel& model, const RankingBenchmark& bench,
                               std::size_t at_k = 0, std::size_t threads = 1) {
  return eval_ranking(text_embedder(model), bench, at_k, threads);
}

struct GradedPair {
  std::string text1;
  std::string text2;
  double score = 0.0;
};

struct GradedPairDataset {
  std::string name;
  std::vector<GradedPair> pairs;
};

/// TSV `text1\ttext2\tscore`; any numeric score range.
inline GradedPairDataset read_graded(const std::filesystem::path& path) {
  GradedPairDataset data{path.stem().string(), {}};
  io::LineReader reader(path);
  std::string line;
  std::size_t lineno = 0;
  while (reader.next(line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = io::split_tabs(line);
    const auto where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 3) throw DataError(where + ": expected text1<TAB>text2<TAB>score");
    double score = 0.0;
    try {
      std::size_t used = 0;
      score = std::stod(std::string(f[2]), &used);
      if (used != f[2].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw DataError(where + ": bad score '" + std::string(f[2]) + "'");
    }
    data.pairs.push_back({io::unescape_field(f[0]), io::unescape_field(f[1]), score});
  }
  if (data.pairs.size() < 2) throw DataError(path.string() + ": need at least 2 graded pairs");
  return data;
}

/// Pearson's r between cosine similarity of the two embeddings and gold scores.
template <class Embed>
EvalReport eval_graded(const Embed& embed, const GradedPairDataset& data) {
  std::vector<double> predicted, gold;
  for (const auto& p : data.pairs) {
    predicted.push_back(cosine_similarity(embed(p.text1), embed(p.text2)));
    gold.push_back(p.score);
  }
  EvalReport report{data.name, "Pearson", pearson(predicted, gold), {}, nlohmann::json::object()};
  report.meta["pairs"] = data.pairs.size();
  return report;
}

inline EvalReport eval_graded(const EncoderModel& model, const GradedPairDataset& data) {
  return eval_graded(text_embedder(model), data);
}

}  // namespace weakpair
