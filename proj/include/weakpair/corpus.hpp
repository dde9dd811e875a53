#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "weakpair/errors.hpp"
#include "weakpair/ingest.hpp"
#include "weakpair/io.hpp"
#include "weakpair/rng.hpp"
#include "weakpair/textproc.hpp"

namespace weakpair {

/// Minimum cleaned length (in code points) of any text used for training
/// or evaluation.
inline constexpr std::size_t min_text_chars = 20;

enum class Dataset { qt, rp, coqt, corp };

inline std::string_view to_string(Dataset d) {
  switch (d) {
    case Dataset::qt: return "Qt";
    case Dataset::rp: return "Rp";
    case Dataset::coqt: return "CoQt";
    case Dataset::corp: return "CoRp";
  }
  return "?";
}

inline Dataset dataset_from(std::string_view s) {
  for (auto d : {Dataset::qt, Dataset::rp, Dataset::coqt, Dataset::corp})
    if (to_string(d) == s) return d;
  throw DataError("unknown dataset: " + std::string(s));
}

/// Relation kind a corpus or benchmark is built from.
inline RelationKind source_kind(Dataset d) {
  return d == Dataset::qt || d == Dataset::coqt ? RelationKind::quote : RelationKind::reply;
}

struct PairExample {
  std::string anchor_text;
  std::string positive_text;
  Dataset dataset{};
  std::string anchor_id;
  std::string positive_id;

  bool operator==(const PairExample&) const = default;
};

using IdSet = std::unordered_set<std::string>;

namespace detail {

struct Response {
  std::string id;
  std::string text;  // cleaned
};

struct TargetGroup {
  std::string id;
  std::optional<std::string> text;  // cleaned; unset when too short or unknown
  std::vector<Response> responses;  // cleaned, long enough, sorted by id
};

inline bool long_enough(std::string_view cleaned) {
  return char_length(cleaned) >= min_text_chars;
}

// Groups edges of one kind by target id (sorted). Responses that are too
// short after cleaning, or touch a banned id, never enter a group.
inline std::vector<TargetGroup> group_by_target(std::span<const RelationEdge> edges,
                                                RelationKind kind, const IdSet& banned) {
  std::map<std::string, TargetGroup> groups;
  for (const auto& e : edges) {
    if (e.kind != kind || e.target_id == e.response_id) continue;
    if (banned.contains(e.target_id) || banned.contains(e.response_id)) continue;
    auto [it, inserted] = groups.try_emplace(e.target_id);
    auto& g = it->second;
    if (inserted) g.id = e.target_id;
    if (!g.text && e.target_text) {
      auto t = clean(*e.target_text);
      if (long_enough(t)) g.text = std::move(t);
    }
    auto r = clean(e.response_text);
    if (long_enough(r)) g.responses.push_back({e.response_id, std::move(r)});
  }
  std::vector<TargetGroup> out;
  out.reserve(groups.size());
  for (auto& [id, g] : groups) {
    std::sort(g.responses.begin(), g.responses.end(),
              [](const Response& a, const Response& b) { return a.id < b.id; });
    g.responses.erase(std::unique(g.responses.begin(), g.responses.end(),
                                  [](const Response& a, const Response& b) { return a.id == b.id; }),
                      g.responses.end());
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace detail

/// Qt / Rp pairs: one (target, response) pair per target, drawn uniformly
/// among that target's responses that survive cleaning and the length filter.
inline std::vector<PairExample> build_pairs(std::span<const RelationEdge> edges, Dataset dataset,
                                            std::uint64_t seed, const IdSet& banned = {}) {
  if (dataset != Dataset::qt && dataset != Dataset::rp)
    throw UsageError("build_pairs expects Qt or Rp");
  Rng rng(seed);
  std::vector<PairExample> pairs;
  for (auto& g : detail::group_by_target(edges, source_kind(dataset), banned)) {
    if (!g.text || g.responses.empty()) continue;
    auto& r = g.responses[uniform_index(rng, g.responses.size())];
    pairs.push_back({*g.text, std::move(r.text), dataset, g.id, std::move(r.id)});
  }
  return pairs;
}

/// CoQt / CoRp pairs: one unordered pair of distinct responses per target
/// having at least two of them.
inline std::vector<PairExample> build_co_pairs(std::span<const RelationEdge> edges,
                                               Dataset dataset, std::uint64_t seed,
                                               const IdSet& banned = {}) {
  if (dataset != Dataset::coqt && dataset != Dataset::corp)
    throw UsageError("build_co_pairs expects CoQt or CoRp");
  Rng rng(seed);
  std::vector<PairExample> pairs;
  for (auto& g : detail::group_by_target(edges, source_kind(dataset), banned)) {
    const auto k = g.responses.size();
    if (k < 2) continue;
    const auto first = uniform_index(rng, k);
    auto second = uniform_index(rng, k - 1);
    if (second >= first) ++second;
    auto& a = g.responses[first];
    auto& b = g.responses[second];
    pairs.push_back({std::move(a.text), std::move(b.text), dataset, std::move(a.id), std::move(b.id)});
  }
  return pairs;
}

/// Dispatches to build_pairs / build_co_pairs.
inline std::vector<PairExample> build_dataset(std::span<const RelationEdge> edges, Dataset dataset,
                                              std::uint64_t seed, const IdSet& banned = {}) {
  return dataset == Dataset::qt || dataset == Dataset::rp
             ? build_pairs(edges, dataset, seed, banned)
             : build_co_pairs(edges, dataset, seed, banned);
}

/// Uniform sample of n pairs without replacement, in shuffled order. The
/// sample is a prefix of one seeded shuffle, so samples of growing n under
/// the same seed are nested.
inline std::vector<PairExample> sample_corpus(std::vector<PairExample> pairs, std::size_t n,
                                              std::uint64_t seed) {
  if (n > pairs.size())
    throw DataError("cannot sample " + std::to_string(n) + " pairs from " +
                    std::to_string(pairs.size()));
  Rng rng(seed);
  shuffle_in_place(pairs, rng);
  pairs.resize(n);
  return pairs;
}

inline std::vector<PairExample> exclude_ids(std::span<const PairExample> pairs, const IdSet& banned) {
  std::vector<PairExample> kept;
  kept.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (!banned.contains(p.anchor_id) && !banned.contains(p.positive_id)) kept.push_back(p);
  }
  return kept;
}

// ---- ranking benchmarks ----

enum class BenchmarkName { dq, dr, cq, cr };

inline std::string_view to_string(BenchmarkName b) {
  switch (b) {
    case BenchmarkName::dq: return "DQ";
    case BenchmarkName::dr: return "DR";
    case BenchmarkName::cq: return "CQ";
    case BenchmarkName::cr: return "CR";
  }
  return "?";
}

inline BenchmarkName benchmark_from(std::string_view s) {
  for (auto b : {BenchmarkName::dq, BenchmarkName::dr, BenchmarkName::cq, BenchmarkName::cr})
    if (to_string(b) == s) return b;
  throw DataError("unknown benchmark: " + std::string(s));
}

inline RelationKind source_kind(BenchmarkName b) {
  return b == BenchmarkName::dq || b == BenchmarkName::cq ? RelationKind::quote
                                                           : RelationKind::reply;
}

inline constexpr std::size_t positives_per_query = 5;
inline constexpr std::size_t negatives_per_query = 25;

struct BenchmarkQuery {
  std::string query;
  std::vector<std::string> positives;
  std::vector<std::string> negatives;
  std::vector<std::string> ids;

  bool operator==(const BenchmarkQuery&) const = default;
};

struct RankingBenchmark {
  BenchmarkName name{};
  std::vector<BenchmarkQuery> queries;

  IdSet involved_ids() const {
    IdSet ids;
    for (const auto& q : queries) ids.insert(q.ids.begin(), q.ids.end());
    return ids;
  }
};

/// Throws DataError when a query does not have exactly 5 positives and 25
/// negatives.
inline void check_shape(const BenchmarkQuery& q, std::string_view where) {
  if (q.positives.size() != positives_per_query || q.negatives.size() != negatives_per_query)
    throw DataError(std::string(where) + ": query needs " + std::to_string(positives_per_query) +
                    " positives and " + std::to_string(negatives_per_query) + " negatives, got " +
                    std::to_string(q.positives.size()) + " and " +
                    std::to_string(q.negatives.size()));
}

namespace detail {

// Keeps the first response of every distinct text (and drops texts equal to
// `exclude`), preserving id order.
inline std::vector<Response> distinct_texts(const std::vector<Response>& rs,
                                            const std::optional<std::string>& exclude) {
  std::vector<Response> out;
  std::unordered_set<std::string> seen;
  if (exclude) seen.insert(*exclude);
  for (const auto& r : rs)
    if (seen.insert(r.text).second) out.push_back(r);
  return out;
}

// k distinct elements of `from`, uniformly, in draw order.
inline std::vector<Response> draw(std::vector<Response> from, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_index(rng, from.size() - i));
    std::swap(from[i], from[j]);
  }
  from.resize(k);
  return from;
}

}  // namespace detail

/// Builds a held-out ranking benchmark. DQ/DR queries are targets with at
/// least 5 responses; CQ/CR queries are one response of a target with at
/// least 6. Negatives are responses (same relation kind) of other targets.
/// Ids in `banned` are never used.
inline RankingBenchmark build_benchmark(std::span<const RelationEdge> edges, BenchmarkName name,
                                        std::size_t num_queries, std::uint64_t seed,
                                        const IdSet& banned = {}) {
  const bool direct = name == BenchmarkName::dq || name == BenchmarkName::dr;
  auto groups = detail::group_by_target(edges, source_kind(name), banned);

  struct Unit {
    std::size_t group;
    std::vector<detail::Response> responses;
  };
  std::vector<Unit> eligible;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (direct && !groups[g].text) continue;
    auto rs = detail::distinct_texts(groups[g].responses,
                                     direct ? groups[g].text : std::optional<std::string>{});
    if (rs.size() >= positives_per_query + (direct ? 0 : 1)) eligible.push_back({g, std::move(rs)});
  }
  if (eligible.size() < num_queries)
    throw DataError(std::string(to_string(name)) + ": need " + std::to_string(num_queries) +
                    " eligible queries, found " + std::to_string(eligible.size()));

  struct PoolEntry {
    std::size_t group;
    const detail::Response* response;
  };
  std::vector<PoolEntry> pool;
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (const auto& r : groups[g].responses) pool.push_back({g, &r});

  Rng rng(seed);
  shuffle_in_place(eligible, rng);
  eligible.resize(num_queries);

  RankingBenchmark bench{name, {}};
  bench.queries.reserve(num_queries);
  for (std::size_t qi = 0; qi < eligible.size(); ++qi) {
    const auto& unit = eligible[qi];
    BenchmarkQuery q;
    std::unordered_set<std::string> used;
    if (direct) {
      q.query = *groups[unit.group].text;
      q.ids.push_back(groups[unit.group].id);
      for (auto& r : detail::draw(unit.responses, positives_per_query, rng)) {
        q.positives.push_back(r.text);
        q.ids.push_back(r.id);
      }
    } else {
      auto picked = detail::draw(unit.responses, positives_per_query + 1, rng);
      q.query = picked[0].text;
      q.ids.push_back(picked[0].id);
      for (std::size_t i = 1; i < picked.size(); ++i) {
        q.positives.push_back(picked[i].text);
        q.ids.push_back(picked[i].id);
      }
    }
    used.insert(q.query);
    used.insert(q.positives.begin(), q.positives.end());

    auto accept = [&](const PoolEntry& e) {
      if (e.group == unit.group || !used.insert(e.response->text).second) return;
      q.negatives.push_back(e.response->text);
      q.ids.push_back(e.response->id);
    };
    for (std::size_t attempt = 0;
         attempt < 64 * negatives_per_query && q.negatives.size() < negatives_per_query && !pool.empty();
         ++attempt)
      accept(pool[uniform_index(rng, pool.size())]);
    if (q.negatives.size() < negatives_per_query) {
      // Rejection sampling stalled; fall back to a full shuffled scan.
      std::vector<std::size_t> order(pool.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      shuffle_in_place(order, rng);
      for (auto i : order) {
        if (q.negatives.size() == negatives_per_query) break;
        accept(pool[i]);
      }
    }
    if (q.negatives.size() < negatives_per_query)
      throw DataError(std::string(to_string(name)) + ": query " + std::to_string(qi) + " found only " +
                      std::to_string(q.negatives.size()) + " of " +
                      std::to_string(negatives_per_query) + " negatives");
    bench.queries.push_back(std::move(q));
  }
  return bench;
}

// ---- files ----

inline void write_pairs(const std::filesystem::path& path, std::span<const PairExample> pairs) {
  auto out = io::open_output(path);
  for (const auto& p : pairs) {
    out << p.anchor_id << '\t' << p.positive_id << '\t' << to_string(p.dataset) << '\t'
        << io::escape_field(p.anchor_text) << '\t' << io::escape_field(p.positive_text) << '\n';
  }
}

inline std::vector<PairExample> read_pairs(const std::filesystem::path& path) {
  std::vector<PairExample> pairs;
  io::LineReader reader(path);
  std::string line;
  std::size_t lineno = 0;
  while (reader.next(line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = io::split_tabs(line);
    if (f.size() != 5)
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 5 fields");
    pairs.push_back({io::unescape_field(f[3]), io::unescape_field(f[4]), dataset_from(f[2]),
                     std::string(f[0]), std::string(f[1])});
  }
  return pairs;
}

inline void write_benchmark(const std::filesystem::path& path, const RankingBenchmark& bench) {
  auto out = io::open_output(path);
  for (const auto& q : bench.queries) {
    out << nlohmann::json{{"query", q.query}, {"positives", q.positives},
                          {"negatives", q.negatives}, {"ids", q.ids}}
               .dump()
        << '\n';
  }
}

inline RankingBenchmark read_benchmark(const std::filesystem::path& path, BenchmarkName name) {
  RankingBenchmark bench{name, {}};
  io::LineReader reader(path);
  std::string line;
  std::size_t lineno = 0;
  while (reader.next(line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    BenchmarkQuery q;
    try {
      const auto j = nlohmann::json::parse(line);
      q.query = j.at("query").get<std::string>();
      q.positives = j.at("positives").get<std::vector<std::string>>();
      q.negatives = j.at("negatives").get<std::vector<std::string>>();
      q.ids = j.value("ids", std::vector<std::string>{});
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": bad benchmark line: " + e.what());
    }
    check_shape(q, where);
    bench.queries.push_back(std::move(q));
  }
  if (bench.queries.empty()) throw DataError(path.string() + ": benchmark has no queries");
  return bench;
}

}  // namespace weakpair
