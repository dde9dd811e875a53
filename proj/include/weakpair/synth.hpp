#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "weakpair/errors.hpp"
#include "weakpair/rng.hpp"

namespace weakpair {

/// Desk-scale stand-in for an archived tweet stream. Tweets are bags of
/// topic words and shared noise words; quotes and replies always link two
/// tweets of the same topic.
struct SynthConfig {
  std::size_t topics = 50;
  std::size_t pairs_per_topic = 40;  // relation edges per topic
  std::size_t vocab_size = 2000;     // distinct words, topic + noise
  double noise = 0.3;                // probability a word is a noise word
  std::uint64_t seed = 7;            // fixes the lexicon
  std::uint64_t stream = 0;          // independent streams over one lexicon
  double quote_fraction = 0.5;
  std::size_t max_responses = 8;
  std::size_t min_words = 6;
  std::size_t max_words = 12;

  void validate() const {
    if (topics < 2) throw UsageError("synth: topics must be >= 2");
    if (!(noise >= 0.0 && noise <= 1.0)) throw UsageError("synth: noise must be in [0, 1]");
    if (!(quote_fraction >= 0.0 && quote_fraction <= 1.0))
      throw UsageError("synth: quote_fraction must be in [0, 1]");
    if (vocab_size < topics + noise_words())
      throw UsageError("synth: vocab_size " + std::to_string(vocab_size) + " too small for " +
                       std::to_string(topics) + " topics");
    if (max_responses < 1) throw UsageError("synth: max_responses must be >= 1");
    if (min_words < 1 || max_words < min_words) throw UsageError("synth: bad word-count range");
  }

  std::size_t noise_words() const { return std::max<std::size_t>(1, vocab_size / 5); }
};

struct SynthLexicon {
  std::vector<std::vector<std::string>> topic_words;
  std::vector<std::string> noise_words;
};

inline SynthLexicon make_lexicon(const SynthConfig& cfg) {
  cfg.validate();
  static constexpr std::string_view onsets[] = {"b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n",
                                                "p", "r", "s", "t", "v", "w", "z", "br", "ch",
                                                "dr", "gl", "kr", "pl", "sh", "st", "tr"};
  static constexpr std::string_view vowels[] = {"a", "e", "i", "o", "u", "ai", "ou", "ee"};
  Rng rng(derive_seed(cfg.seed, "synth/lexicon"));
  std::unordered_set<std::string> seen;
  std::vector<std::string> words;
  while (words.size() < cfg.vocab_size) {
    std::string w;
    const auto syllables = 2 + uniform_index(rng, 2);
    for (std::uint64_t s = 0; s < syllables; ++s) {
      w += onsets[uniform_index(rng, std::size(onsets))];
      w += vowels[uniform_index(rng, std::size(vowels))];
    }
    if (seen.insert(w).second) words.push_back(std::move(w));
  }
  SynthLexicon lex;
  const auto n_noise = cfg.noise_words();
  lex.noise_words.assign(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(n_noise));
  lex.topic_words.resize(cfg.topics);
  for (std::size_t i = n_noise; i < words.size(); ++i)
    lex.topic_words[(i - n_noise) % cfg.topics].push_back(words[i]);
  return lex;
}

struct SynthStream {
  std::vector<std::string> lines;  // archive-shaped JSON, shuffled
  std::size_t edges = 0;
  std::size_t tweets = 0;
};

/// Generates topics * pairs_per_topic quote/reply edges. Each target gets 1
/// response with probability 1/2, otherwise 2..max_responses. Targets are
/// emitted as plain tweets; quotes also embed the quoted text. A few
/// non-English tweets and deletion notices are mixed in.
inline SynthStream synthesize(const SynthConfig& cfg) {
  const auto lex = make_lexicon(cfg);
  Rng rng(derive_seed(cfg.seed, "synth/stream/" + std::to_string(cfg.stream)));
  std::unordered_set<std::string> ids;
  auto new_id = [&] {
    for (;;) {
      auto id = std::to_string((rng() >> 1) | (std::uint64_t{1} << 60));
      if (ids.insert(id).second) return id;
    }
  };
  auto tweet_text = [&](std::size_t topic) {
    const auto& topic_words = lex.topic_words[topic];
    const auto n = cfg.min_words + uniform_index(rng, cfg.max_words - cfg.min_words + 1);
    std::vector<std::string> words;
    bool has_topic = false;
    for (std::uint64_t i = 0; i < n; ++i) {
      if (uniform_unit(rng) < cfg.noise) {
        words.push_back(lex.noise_words[uniform_index(rng, lex.noise_words.size())]);
      } else {
        words.push_back(topic_words[uniform_index(rng, topic_words.size())]);
        has_topic = true;
      }
    }
    if (!has_topic) words[0] = topic_words[uniform_index(rng, topic_words.size())];
    std::string text;
    if (uniform_unit(rng) < 0.2) text += "@user" + std::to_string(uniform_index(rng, 10000)) + " ";
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i) text += ' ';
      text += words[i];
    }
    if (uniform_unit(rng) < 0.2) text += "!";
    if (uniform_unit(rng) < 0.3) text += " https://t.co/" + std::to_string(rng() % 100000000);
    if (uniform_unit(rng) < 0.3) text[text[0] == '@' ? text.find(' ') + 1 : 0] -= 'a' - 'A';
    return text;
  };

  SynthStream out;
  auto emit = [&](nlohmann::json j) {
    out.lines.push_back(j.dump());
    ++out.tweets;
    if (uniform_unit(rng) < 0.02) {
      out.lines.push_back(nlohmann::json{{"id_str", new_id()}, {"text", "hola que tal amigos del barrio"},
                                         {"lang", "es"}}
                              .dump());
    }
    if (uniform_unit(rng) < 0.01) {
      out.lines.push_back(nlohmann::json{{"delete", {{"status", {{"id_str", new_id()}}}}}}.dump());
    }
  };

  for (std::size_t topic = 0; topic < cfg.topics; ++topic) {
    std::size_t remaining = cfg.pairs_per_topic;
    while (remaining > 0) {
      std::size_t k = 1;
      if (cfg.max_responses > 1 && uniform_unit(rng) >= 0.5)
        k = 2 + static_cast<std::size_t>(uniform_index(rng, cfg.max_responses - 1));
      k = std::min(k, remaining);
      remaining -= k;
      const bool quote = uniform_unit(rng) < cfg.quote_fraction;
      const auto target_id = new_id();
      const auto target_text = tweet_text(topic);
      emit({{"id_str", target_id}, {"text", target_text}, {"lang", "en"}});
      for (std::size_t r = 0; r < k; ++r) {
        nlohmann::json j{{"id_str", new_id()}, {"text", tweet_text(topic)}, {"lang", "en"}};
        if (quote) {
          j["quoted_status"] = {{"id_str", target_id}, {"text", target_text}, {"lang", "en"}};
        } else {
          j["in_reply_to_status_id_str"] = target_id;
        }
        emit(std::move(j));
        ++out.edges;
      }
    }
  }
  shuffle_in_place(out.lines, rng);
  return out;
}

}  // namespace weakpair
