#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "weakpair/pipeline.hpp"
#include "weakpair/synth.hpp"

using namespace weakpair;

namespace {

std::vector<TweetRecord> parse_all(const SynthStream& s, ParseStats& stats) {
  std::vector<TweetRecord> out;
  for (const auto& line : s.lines)
    if (auto r = parse_line(line, "en", stats)) out.push_back(std::move(*r));
  return out;
}

}  // namespace

TEST(Synth, ProducesRequestedEdgeCount) {
  SynthConfig cfg;
  const auto s = synthesize(cfg);
  EXPECT_EQ(s.edges, 2000u);
  ParseStats stats;
  const auto records = parse_all(s, stats);
  const auto joined = relations_from_records(records);
  EXPECT_EQ(joined.edges.size(), 2000u);
  EXPECT_EQ(joined.dropped, 0u);
  EXPECT_GT(stats.filtered, 0u);
  EXPECT_GT(stats.no_text, 0u);
  EXPECT_EQ(stats.malformed, 0u);
}

TEST(Synth, DeterministicPerSeedAndStream) {
  SynthConfig cfg;
  cfg.topics = 5;
  cfg.pairs_per_topic = 20;
  cfg.vocab_size = 200;
  EXPECT_EQ(synthesize(cfg).lines, synthesize(cfg).lines);
  auto other = cfg;
  other.stream = 1;
  EXPECT_NE(synthesize(cfg).lines, synthesize(other).lines);
  // Streams share the lexicon.
  EXPECT_EQ(make_lexicon(cfg).topic_words, make_lexicon(other).topic_words);
}

TEST(Synth, NoiseFreePairsShareTheirTopic) {
  SynthConfig cfg;
  cfg.topics = 6;
  cfg.pairs_per_topic = 30;
  cfg.vocab_size = 300;
  cfg.noise = 0.0;
  const auto lex = make_lexicon(cfg);
  std::map<std::string, std::size_t> topic_of;
  for (std::size_t t = 0; t < lex.topic_words.size(); ++t)
    for (const auto& w : lex.topic_words[t]) topic_of[w] = t;
  auto topics_in = [&](const std::string& cleaned) {
    std::set<std::size_t> out;
    for (const auto& tok : tokenize(cleaned))
      if (auto it = topic_of.find(tok); it != topic_of.end()) out.insert(it->second);
    return out;
  };
  ParseStats stats;
  const auto joined = relations_from_records(parse_all(synthesize(cfg), stats));
  for (auto d : {Dataset::qt, Dataset::rp}) {
    const auto pairs = build_dataset(joined.edges, d, 2);
    ASSERT_FALSE(pairs.empty());
    for (const auto& p : pairs) {
      const auto a = topics_in(p.anchor_text);
      EXPECT_EQ(a.size(), 1u);
      EXPECT_EQ(a, topics_in(p.positive_text));
    }
  }
}

TEST(Synth, BadConfigRejected) {
  SynthConfig cfg;
  cfg.vocab_size = 10;
  EXPECT_THROW(synthesize(cfg), UsageError);
  cfg = {};
  cfg.noise = 1.5;
  EXPECT_THROW(synthesize(cfg), UsageError);
}
