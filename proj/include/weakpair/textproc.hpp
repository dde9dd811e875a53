#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "weakpair/errors.hpp"

namespace weakpair {

using TokenId = std::int32_t;

namespace detail {

inline bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         (c >= '0' && c <= '9') || c == '_';
}

inline bool is_ascii_punct(unsigned char c) {
  return (c >= 0x21 && c <= 0x2f) || (c >= 0x3a && c <= 0x40) ||
         (c >= 0x5b && c <= 0x60) || (c >= 0x7b && c <= 0x7e);
}

/// Byte length of the whitespace code point starting at s[i], or 0.
inline std::size_t whitespace_len(std::string_view s, std::size_t i) {
  const auto b = [&](std::size_t k) -> unsigned char {
    return i + k < s.size() ? static_cast<unsigned char>(s[i + k]) : 0;
  };
  const unsigned char c = b(0);
  if (c == ' ' || (c >= '\t' && c <= '\r')) return 1;
  if (c == 0xc2 && (b(1) == 0x85 || b(1) == 0xa0)) return 2;
  if (c == 0xe1 && b(1) == 0x9a && b(2) == 0x80) return 3;  // U+1680
  if (c == 0xe2 && b(1) == 0x80 &&
      ((b(2) >= 0x80 && b(2) <= 0x8a) || b(2) == 0xa8 || b(2) == 0xa9 ||
       b(2) == 0xaf))
    return 3;  // U+2000..200A, U+2028, U+2029, U+202F
  if (c == 0xe2 && b(1) == 0x81 && b(2) == 0x9f) return 3;  // U+205F
  if (c == 0xe3 && b(1) == 0x80 && b(2) == 0x80) return 3;  // U+3000
  return 0;
}

// One left-to-right pass removing `https?://\S+` and `@\w+`.
inline std::string strip_urls_and_mentions(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto rest = s.substr(i);
    const std::size_t scheme = rest.starts_with("http://")    ? 7
                               : rest.starts_with("https://") ? 8
                                                              : 0;
    if (scheme != 0 && i + scheme < s.size() &&
        whitespace_len(s, i + scheme) == 0) {
      i += scheme;
      while (i < s.size() && whitespace_len(s, i) == 0) ++i;
      continue;
    }
    if (s[i] == '@' && i + 1 < s.size() &&
        is_word_byte(static_cast<unsigned char>(s[i + 1]))) {
      ++i;
      while (i < s.size() && is_word_byte(static_cast<unsigned char>(s[i])))
        ++i;
      continue;
    }
    out.push_back(s[i]);
    ++i;
  }
  return out;
}

}  // namespace detail

/// Number of UTF-8 code points in `s`.
inline std::size_t char_length(std::string_view s) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) {
    return (static_cast<unsigned char>(c) & 0xc0) != 0x80;
  }));
}

/// Normalizes raw tweet text: ASCII lowercasing, removal of URLs
/// (`https?://\S+`) and mentions (`@\w+`), collapsing every unicode
/// whitespace run to one space, trimming. Removal is repeated until nothing
/// matches, which makes the function idempotent.
inline std::string clean(std::string_view raw) {
  std::string text(raw);
  for (auto& c : text) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  for (;;) {
    auto next = detail::strip_urls_and_mentions(text);
    if (next.size() == text.size()) break;
    text = std::move(next);
  }
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  std::size_t i = 0;
  while (i < text.size()) {
    if (const auto ws = detail::whitespace_len(text, i); ws != 0) {
      pending_space = !out.empty();
      i += ws;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(text[i++]);
  }
  return out;
}

/// Splits cleaned text on spaces; each ASCII punctuation character becomes
/// its own token.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::exchange(current, {}));
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c == ' ') {
      flush();
    } else if (detail::is_ascii_punct(c)) {
      flush();
      tokens.emplace_back(1, ch);
    } else {
      current.push_back(ch);
    }
  }
  flush();
  return tokens;
}

class Vocabulary {
 public:
  static constexpr TokenId pad_id = 0;
  static constexpr TokenId unk_id = 1;
  static constexpr std::string_view pad_token = "[PAD]";
  static constexpr std::string_view unk_token = "[UNK]";

  Vocabulary() : Vocabulary(2) {}

  explicit Vocabulary(std::size_t max_size) : max_size_(max_size) {
    if (max_size < 2) throw UsageError("vocabulary max_size must be >= 2");
    add(std::string(pad_token));
    add(std::string(unk_token));
  }

  std::size_t size() const { return tokens_.size(); }
  std::size_t max_size() const { return max_size_; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  TokenId id(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    return it == index_.end() ? unk_id : it->second;
  }

  bool contains(std::string_view token) const {
    return index_.contains(std::string(token));
  }

  nlohmann::json to_json() const {
    return {{"tokens", tokens_}, {"max_size", max_size_}};
  }

  static Vocabulary from_json(const nlohmann::json& j) {
    const auto& list = j.at("tokens");
    Vocabulary vocab(j.at("max_size").get<std::size_t>());
    if (list.size() < 2 || list[0] != pad_token || list[1] != unk_token)
      throw DataError("vocabulary must start with [PAD], [UNK]");
    if (list.size() > vocab.max_size_)
      throw DataError("vocabulary has more tokens than max_size");
    for (std::size_t i = 2; i < list.size(); ++i) {
      if (!vocab.add(list[i].get<std::string>()))
        throw DataError("duplicate vocabulary token: " + list[i].get<std::string>());
    }
    return vocab;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.max_size_ == b.max_size_ && a.tokens_ == b.tokens_;
  }

 private:
  template <class Range>
  friend Vocabulary build_vocab(const Range& corpus, std::size_t max_size);

  bool add(std::string token) {
    const auto next = static_cast<TokenId>(tokens_.size());
    if (!index_.emplace(token, next).second) return false;
    tokens_.push_back(std::move(token));
    return true;
  }

  std::size_t max_size_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Keeps the max_size - 2 most frequent tokens of `corpus` (a range of
/// cleaned strings); ties go to the lexicographically smaller token.
template <class Range>
Vocabulary build_vocab(const Range& corpus, std::size_t max_size) {
  Vocabulary vocab(max_size);
  std::map<std::string, std::size_t> counts;
  for (const auto& text : corpus) {
    for (auto& tok : tokenize(text)) ++counts[std::move(tok)];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t keep = std::min(ranked.size(), max_size - 2);
  for (std::size_t i = 0; i < keep; ++i) vocab.add(std::move(ranked[i].first));
  return vocab;
}

/// Token ids for a cleaned sentence, truncated to max_len. Never empty:
/// a sentence without tokens becomes a single [UNK].
inline std::vector<TokenId> encode_ids(const Vocabulary& vocab, std::string_view text,
                                       std::size_t max_len) {
  if (max_len < 1) throw UsageError("max_len must be >= 1");
  std::vector<TokenId> ids;
  for (const auto& tok : tokenize(text)) {
    if (ids.size() == max_len) break;
    ids.push_back(vocab.id(tok));
  }
  if (ids.empty()) ids.push_back(Vocabulary::unk_id);
  return ids;
}

}  // namespace weakpair
