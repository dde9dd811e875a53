#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "weakpair/encoder.hpp"

namespace fs = std::filesystem;
using namespace weakpair;

namespace {

Vocabulary small_vocab() {
  const std::vector<std::string> texts{"a b c d e f g h", "a b c d", "a b"};
  return build_vocab(texts, 100);
}

EncoderModel make_model(bool block, bool normalize = false, std::uint64_t seed = 3, std::size_t dim = 6) {
  return EncoderModel::init(small_vocab(), {dim, block, normalize, 16}, seed);
}

// Bring every parameter to order one so relative gradient errors are not
// dominated by tiny entries.
void rescale(EncoderModel& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  auto& p = m.mutable_params();
  for (auto& [name, t] : p.tensors())
    for (Eigen::Index i = 0; i < t->size(); ++i) t->data()[i] = u(rng);
  p.embedding.row(Vocabulary::pad_id).setZero();
}

}  // namespace

TEST(EncoderInit, SeededAndPadRowZero) {
  const auto a = make_model(true, false, 5);
  const auto b = make_model(true, false, 5);
  const auto c = make_model(true, false, 6);
  EXPECT_EQ(a.params(), b.params());
  EXPECT_FALSE(a.params() == c.params());
  EXPECT_TRUE(a.params().embedding.row(Vocabulary::pad_id).isZero(0));
  for (const auto& [name, t] : a.params().tensors()) EXPECT_LE(t->cwiseAbs().maxCoeff(), 0.05) << name;
}

TEST(EncoderInit, DimOneRejected) {
  EXPECT_THROW(EncoderModel::init(small_vocab(), {1, true, false, 16}, 1), UsageError);
}

TEST(EncoderForward, MeanPoolingWithoutBlock) {
  Vocabulary vocab = small_vocab();
  EncoderParameters p;
  p.embedding = Matrix::Zero(static_cast<Eigen::Index>(vocab.size()), 2);
  const auto a = vocab.id("a");
  const auto b = vocab.id("b");
  p.embedding.row(a) << 1, 2;
  p.embedding.row(b) << 3, 4;
  const auto m = EncoderModel::from_parameters(vocab, {2, false, false, 16}, p);
  const std::vector<TokenId> ids{a, b};
  const Vector e = m.encode(ids);
  EXPECT_DOUBLE_EQ(e[0], 2.0);
  EXPECT_DOUBLE_EQ(e[1], 3.0);
}

TEST(EncoderForward, UnknownTokensDoNotThrow) {
  const auto m = make_model(true);
  EXPECT_EQ(m.encode_text("zzz yyy").size(), 6);
  EXPECT_EQ(m.encode_text("").size(), 6);
}

TEST(EncoderForward, PermutationInvariant) {
  for (bool block : {false, true}) {
    auto m = make_model(block);
    rescale(m, 9);
    const Vector x = m.encode_text("a b c d e");
    const Vector y = m.encode_text("e c a d b");
    EXPECT_LT((x - y).cwiseAbs().maxCoeff(), 1e-12) << "block=" << block;
  }
}

TEST(EncoderForward, NormalizedOutputHasUnitNorm) {
  auto m = make_model(true, true);
  EXPECT_NEAR(m.encode_text("a b c").norm(), 1.0, 1e-12);
}

TEST(EncoderForward, TraceMatchesEncode) {
  const auto m = make_model(true);
  const auto ids = m.token_ids("a b c d");
  const auto trace = m.encode_with_trace(ids);
  EXPECT_EQ(trace.embedding, m.encode(ids));
  EXPECT_EQ(trace.ids, ids);
}

TEST(EncoderBackward, ZeroUpstreamGivesZeroGradient) {
  const auto m = make_model(true);
  const auto trace = m.encode_with_trace(m.token_ids("a b c"));
  const auto g = m.backprop(trace, Vector::Zero(6)).densify(m.params());
  for (const auto& [name, t] : g.tensors()) EXPECT_TRUE(t->isZero(0)) << name;
}

TEST(EncoderBackward, SingleTokenWithoutBlock) {
  const auto m = make_model(false);
  const auto ids = m.token_ids("c c c");
  const Vector g = Vector::LinSpaced(6, 1.0, 6.0);
  const auto grads = m.backprop(m.encode_with_trace(ids), g);
  ASSERT_EQ(grads.embedding_rows.size(), 1u);
  // Three copies of one token: the mean contributes g/3 per copy.
  EXPECT_LT((grads.embedding_rows.at(ids[0]).transpose() - g).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EncoderBackward, OnlyPresentRowsReceiveGradient) {
  const auto m = make_model(true);
  const auto ids = m.token_ids("a b");
  const auto grads = m.backprop(m.encode_with_trace(ids), Vector::Ones(6));
  EXPECT_EQ(grads.embedding_rows.size(), 2u);
}

TEST(EncoderBackward, MatchesFiniteDifferences) {
  for (bool block : {false, true}) {
    for (bool normalize : {false, true}) {
      auto m = make_model(block, normalize, 11);
      rescale(m, 12 + block + 2 * normalize);
      const auto ids = m.token_ids("a b c d a e");
      Vector w(6);
      w << 0.3, -1.1, 0.7, 0.2, -0.5, 0.9;
      const auto analytic = m.backprop(m.encode_with_trace(ids), w).densify(m.params());
      const auto numeric = oracle::numeric_gradient(m, [&] { return w.dot(m.encode(ids)); }, 1e-5);
      EXPECT_LT(oracle::max_relative_error(analytic, numeric, 1e-6), 1e-4)
          << "block=" << block << " normalize=" << normalize;
    }
  }
}

TEST(EncoderBackward, StaleTraceRejected) {
  auto m = make_model(true);
  const auto trace = m.encode_with_trace(m.token_ids("a b"));
  m.mutable_params().wq(0, 0) += 0.1;
  EXPECT_THROW(m.backprop(trace, Vector::Ones(6)), UsageError);
}

TEST(EncoderBackward, DegenerateNormalizedOutput) {
  auto m = make_model(false, true);
  m.mutable_params().embedding.setZero();
  const auto trace = m.encode_with_trace(m.token_ids("a b"));
  EXPECT_TRUE(trace.degenerate);
  EXPECT_TRUE(trace.embedding.isZero(0));
  const auto g = m.backprop(trace, Vector::Ones(6)).densify(m.params());
  EXPECT_TRUE(g.embedding.isZero(0));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto dir = fs::temp_directory_path() / "weakpair_ckpt";
  for (bool block : {false, true}) {
    auto m = make_model(block, block, 21, 8);
    rescale(m, 4);
    save_checkpoint(dir / "m.ckpt", m);
    const auto back = load_checkpoint(dir / "m.ckpt");
    EXPECT_EQ(back.params(), m.params());
    EXPECT_EQ(back.vocab(), m.vocab());
    EXPECT_EQ(back.config().normalize_output, m.config().normalize_output);
    EXPECT_EQ(back.encode_text("a b c"), m.encode_text("a b c"));
  }
}

TEST(Checkpoint, WrongVersionNamesFormatVersion) {
  const auto dir = fs::temp_directory_path() / "weakpair_ckpt_bad";
  fs::create_directories(dir);
  const auto m = make_model(true);
  save_checkpoint(dir / "m.ckpt", m);
  std::ifstream in(dir / "m.ckpt", std::ios::binary);
  std::string all((std::istreambuf_iterator<char>(in)), {});
  const auto pos = all.find("\"format_version\":1");
  ASSERT_NE(pos, std::string::npos);
  all.replace(pos, 18, "\"format_version\":9");
  std::ofstream(dir / "v9.ckpt", std::ios::binary) << all;
  try {
    load_checkpoint(dir / "v9.ckpt");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("format_version"), std::string::npos);
  }
  std::ofstream(dir / "junk.ckpt") << "not a checkpoint\n";
  EXPECT_THROW(load_checkpoint(dir / "junk.ckpt"), DataError);
  std::ofstream(dir / "short.ckpt", std::ios::binary) << all.substr(0, all.size() - 16);
  EXPECT_THROW(load_checkpoint(dir / "short.ckpt"), DataError);
}
