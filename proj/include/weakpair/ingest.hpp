#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "weakpair/errors.hpp"
#include "weakpair/io.hpp"

namespace weakpair {

struct TweetRecord {
  std::string id;
  std::string text;
  std::string lang;
  std::optional<std::string> reply_to;
  std::optional<std::string> quoted_id;
  std::optional<std::string> quoted_text;

  bool operator==(const TweetRecord&) const = default;
};

enum class RelationKind { quote, reply };

inline std::string_view to_string(RelationKind k) {
  return k == RelationKind::quote ? "Quote" : "Reply";
}

inline RelationKind relation_kind_from(std::string_view s) {
  if (s == "Quote") return RelationKind::quote;
  if (s == "Reply") return RelationKind::reply;
  throw DataError("unknown relation kind: " + std::string(s));
}

/// A (target, response) link. Reply edges carry no target text until joined.
struct RelationEdge {
  RelationKind kind{};
  std::string target_id;
  std::string response_id;
  std::optional<std::string> target_text;
  std::string response_text;

  bool operator==(const RelationEdge&) const = default;
};

struct ParseStats {
  std::size_t lines = 0;
  std::size_t records = 0;
  std::size_t filtered = 0;
  std::size_t malformed = 0;
  std::size_t no_text = 0;
  std::size_t retweets = 0;
  std::size_t duplicates = 0;

  ParseStats& operator+=(const ParseStats& o) {
    lines += o.lines;
    records += o.records;
    filtered += o.filtered;
    malformed += o.malformed;
    no_text += o.no_text;
    retweets += o.retweets;
    duplicates += o.duplicates;
    return *this;
  }

  bool operator==(const ParseStats&) const = default;

  nlohmann::json to_json() const {
    return {{"lines", lines},         {"records", records},   {"filtered", filtered},
            {"malformed", malformed}, {"no_text", no_text},   {"retweets", retweets},
            {"duplicates", duplicates}};
  }
};

struct ParseResult {
  std::vector<TweetRecord> records;
  ParseStats stats;
};

namespace detail {

inline std::optional<std::string> id_field(const nlohmann::json& obj, const char* str_key,
                                           const char* num_key) {
  if (auto it = obj.find(str_key); it != obj.end() && it->is_string() &&
                                   !it->get_ref<const std::string&>().empty())
    return it->get<std::string>();
  if (auto it = obj.find(num_key); it != obj.end() && it->is_number_unsigned())
    return std::to_string(it->get<std::uint64_t>());
  return std::nullopt;
}

inline std::optional<std::string> text_field(const nlohmann::json& obj) {
  for (const char* key : {"text", "full_text"}) {
    if (auto it = obj.find(key); it != obj.end() && it->is_string()) return it->get<std::string>();
  }
  return std::nullopt;
}

inline bool lang_matches(std::string_view lang, std::string_view filter) {
  return filter.empty() || filter == "*" || lang == filter;
}

}  // namespace detail

/// Parses one archive line. Returns nothing (and bumps the matching counter)
/// for malformed JSON, deletion notices, retweets and other languages.
inline std::optional<TweetRecord> parse_line(std::string_view line, std::string_view lang_filter,
                                             ParseStats& stats) {
  ++stats.lines;
  auto obj = nlohmann::json::parse(line, nullptr, false);
  if (obj.is_discarded() || !obj.is_object()) {
    ++stats.malformed;
    return std::nullopt;
  }
  auto text = detail::text_field(obj);
  if (!text) {
    ++stats.no_text;
    return std::nullopt;
  }
  if (obj.contains("retweeted_status")) {
    ++stats.retweets;
    return std::nullopt;
  }
  std::string lang;
  if (auto it = obj.find("lang"); it != obj.end() && it->is_string()) lang = it->get<std::string>();
  if (!detail::lang_matches(lang, lang_filter)) {
    ++stats.filtered;
    return std::nullopt;
  }
  auto id = detail::id_field(obj, "id_str", "id");
  if (!id) {
    ++stats.malformed;
    return std::nullopt;
  }

  TweetRecord rec{std::move(*id), std::move(*text), std::move(lang), {}, {}, {}};
  rec.reply_to = detail::id_field(obj, "in_reply_to_status_id_str", "in_reply_to_status_id");
  if (auto it = obj.find("quoted_status"); it != obj.end() && it->is_object()) {
    rec.quoted_id = detail::id_field(*it, "id_str", "id");
    if (rec.quoted_id) rec.quoted_text = detail::text_field(*it);
  }
  if (!rec.quoted_id) rec.quoted_id = detail::id_field(obj, "quoted_status_id_str", "quoted_status_id");

  if (rec.reply_to == rec.id) rec.reply_to.reset();
  if (rec.quoted_id == rec.id) {
    rec.quoted_id.reset();
    rec.quoted_text.reset();
  }
  ++stats.records;
  return rec;
}

/// All records of one JSON-lines file whose lang equals `lang_filter`
/// ("" or "*" accepts every language). Line-level problems are tallied.
inline ParseResult parse_stream_file(const std::filesystem::path& path,
                                     std::string_view lang_filter) {
  ParseResult result;
  io::LineReader reader(path);
  std::string line;
  while (reader.next(line)) {
    if (line.empty()) continue;
    if (auto rec = parse_line(line, lang_filter, result.stats)) result.records.push_back(std::move(*rec));
  }
  return result;
}

/// Parses several files in sorted path order and drops repeated ids
/// (first occurrence wins).
inline ParseResult ingest_files(std::vector<std::filesystem::path> paths,
                                std::string_view lang_filter) {
  std::sort(paths.begin(), paths.end());
  ParseResult merged;
  std::unordered_set<std::string> seen;
  for (const auto& path : paths) {
    auto part = parse_stream_file(path, lang_filter);
    merged.stats += part.stats;
    for (auto& rec : part.records) {
      if (!seen.insert(rec.id).second) {
        ++merged.stats.duplicates;
        --merged.stats.records;
        continue;
      }
      merged.records.push_back(std::move(rec));
    }
  }
  return merged;
}

/// One Quote edge per record with quoted_id, one Reply edge per record with
/// reply_to. Quotes pair with their immediate target, not the chain root.
inline std::vector<RelationEdge> extract_relations(std::span<const TweetRecord> records) {
  std::vector<RelationEdge> edges;
  for (const auto& rec : records) {
    if (rec.quoted_id && *rec.quoted_id != rec.id)
      edges.push_back({RelationKind::quote, *rec.quoted_id, rec.id, rec.quoted_text, rec.text});
    if (rec.reply_to && *rec.reply_to != rec.id)
      edges.push_back({RelationKind::reply, *rec.reply_to, rec.id, std::nullopt, rec.text});
  }
  return edges;
}

class RecordIndex {
 public:
  explicit RecordIndex(std::span<const TweetRecord> records) : records_(records) {
    by_id_.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) by_id_.emplace(records[i].id, i);
  }

  const TweetRecord* find(const std::string& id) const {
    const auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &records_[it->second];
  }

 private:
  std::span<const TweetRecord> records_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

struct JoinResult {
  std::vector<RelationEdge> edges;
  std::size_t dropped = 0;
};

/// Fills missing target texts from the index. Edges whose target is not
/// indexed are dropped and counted. Quote edges normally embed their target
/// text and pass through untouched.
inline JoinResult join_reply_targets(std::vector<RelationEdge> edges, const RecordIndex& index) {
  JoinResult out;
  out.edges.reserve(edges.size());
  for (auto& e : edges) {
    if (!e.target_text) {
      if (const auto* target = index.find(e.target_id)) {
        e.target_text = target->text;
      } else {
        ++out.dropped;
        continue;
      }
    }
    out.edges.push_back(std::move(e));
  }
  return out;
}

// ---- record store (JSON lines) ----

inline nlohmann::json to_json(const TweetRecord& r) {
  auto opt = [](const std::optional<std::string>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"id", r.id},
          {"text", r.text},
          {"lang", r.lang},
          {"reply_to", opt(r.reply_to)},
          {"quoted_id", opt(r.quoted_id)},
          {"quoted_text", opt(r.quoted_text)}};
}

inline TweetRecord record_from_json(const nlohmann::json& j) {
  auto opt = [&](const char* key) -> std::optional<std::string> {
    const auto& v = j.at(key);
    if (v.is_null()) return std::nullopt;
    return v.get<std::string>();
  };
  return {j.at("id").get<std::string>(), j.at("text").get<std::string>(),
          j.at("lang").get<std::string>(), opt("reply_to"), opt("quoted_id"), opt("quoted_text")};
}

inline void write_records(const std::filesystem::path& path, std::span<const TweetRecord> records) {
  auto out = io::open_output(path);
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

inline std::vector<TweetRecord> read_records(const std::filesystem::path& path) {
  std::vector<TweetRecord> records;
  io::LineReader reader(path);
  std::string line;
  std::size_t lineno = 0;
  while (reader.next(line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      records.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad record: " + e.what());
    }
  }
  return records;
}

// ---- edge dump (TSV) ----

inline void write_edges(const std::filesystem::path& path, std::span<const RelationEdge> edges) {
  auto out = io::open_output(path);
  for (const auto& e : edges) {
    out << to_string(e.kind) << '\t' << e.target_id << '\t' << e.response_id << '\t'
        << io::escape_field(e.target_text.value_or("")) << '\t'
        << io::escape_field(e.response_text) << '\n';
  }
}

inline std::vector<RelationEdge> read_edges(const std::filesystem::path& path) {
  std::vector<RelationEdge> edges;
  io::LineReader reader(path);
  std::string line;
  std::size_t lineno = 0;
  while (reader.next(line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = io::split_tabs(line);
    if (f.size() != 5)
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 5 fields");
    RelationEdge e{relation_kind_from(f[0]), std::string(f[1]), std::string(f[2]), std::nullopt,
                   io::unescape_field(f[4])};
    if (!f[3].empty()) e.target_text = io::unescape_field(f[3]);
    edges.push_back(std::move(e));
  }
  return edges;
}

}  // namespace weakpair
