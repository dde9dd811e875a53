#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "weakpair/optim.hpp"
#include "weakpair/pipeline.hpp"
#include "weakpair/synth.hpp"

using namespace weakpair;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

std::vector<Vector> random_vectors(std::mt19937_64& rng, std::size_t n, Eigen::Index d) {
  std::normal_distribution<double> g;
  std::vector<Vector> out(n, Vector(d));
  for (auto& v : out)
    for (Eigen::Index k = 0; k < d; ++k) v[k] = g(rng);
  return out;
}

std::vector<PairExample> synthetic_pairs(std::size_t pairs_per_topic = 40) {
  SynthConfig sc;
  sc.topics = 20;
  sc.pairs_per_topic = pairs_per_topic;
  sc.vocab_size = 600;
  const auto stream = synthesize(sc);
  return build_dataset(relations_from_lines(stream.lines, "en").edges, Dataset::qt, 1);
}

}  // namespace

TEST(TripletLoss, Examples) {
  EXPECT_DOUBLE_EQ(triplet_loss(vec({0, 0}), vec({0, 0}), vec({3, 4}), 1.0).loss, 0.0);
  EXPECT_DOUBLE_EQ(triplet_loss(vec({0, 0}), vec({3, 4}), vec({0, 0}), 1.0).loss, 6.0);
  EXPECT_DOUBLE_EQ(triplet_loss(vec({1, 1}), vec({1, 1}), vec({1, 1}), 0.7).loss, 0.7);
  EXPECT_DOUBLE_EQ(triplet_loss(vec({0, 0}), vec({0, 1}), vec({0, 1}), 0.0).loss, 0.0);
  EXPECT_DOUBLE_EQ(triplet_loss(vec({0, 0}), vec({1, 0}), vec({0, 2}), 2.0).loss, 1.0);
}

TEST(TripletLoss, GradientZeroAtOrBelowHinge) {
  const auto at = triplet_loss(vec({0, 0}), vec({0, 1}), vec({0, 2}), 1.0);  // 1 - 2 + 1 = 0
  EXPECT_DOUBLE_EQ(at.loss, 0.0);
  EXPECT_TRUE(at.grad_anchor.isZero(0));
  EXPECT_TRUE(at.grad_negative.isZero(0));
}

TEST(TripletLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto v = random_vectors(rng, 3, 4);
    const auto r = triplet_loss(v[0], v[1], v[2], 2.0);
    if (r.loss <= 0.1) continue;
    for (int which = 0; which < 3; ++which) {
      const Vector& g = which == 0 ? r.grad_anchor : which == 1 ? r.grad_positive : r.grad_negative;
      for (Eigen::Index k = 0; k < 4; ++k) {
        auto w = v;
        w[which][k] += 1e-6;
        const double up = triplet_loss(w[0], w[1], w[2], 2.0).loss;
        w[which][k] -= 2e-6;
        const double down = triplet_loss(w[0], w[1], w[2], 2.0).loss;
        EXPECT_NEAR(g[k], (up - down) / 2e-6, 1e-6);
      }
    }
  }
}

TEST(MultipleNegativesLoss, SinglePairIsZero) {
  const std::vector<Vector> a{vec({1, 2})}, p{vec({-3, 1})};
  EXPECT_DOUBLE_EQ(mn_loss(a, p, 20.0).loss, 0.0);
}

TEST(MultipleNegativesLoss, OrthogonalPairsUnitScale) {
  const std::vector<Vector> a{vec({1, 0}), vec({0, 1})};
  const auto r = mn_loss(a, a, 1.0);
  EXPECT_NEAR(r.loss, std::log(1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(r.loss, 0.3133, 1e-4);
}

TEST(MultipleNegativesLoss, MatchesBruteForce) {
  std::mt19937_64 rng(8);
  for (std::size_t n : {2u, 3u, 7u, 16u}) {
    const auto a = random_vectors(rng, n, 5);
    const auto p = random_vectors(rng, n, 5);
    for (double scale : {1.0, 5.0, 20.0})
      EXPECT_NEAR(mn_loss(a, p, scale).loss, oracle::mn_loss(a, p, scale), 1e-10) << n << " " << scale;
  }
}

TEST(MultipleNegativesLoss, InvariantToPositiveRescaling) {
  std::mt19937_64 rng(10);
  const auto a = random_vectors(rng, 6, 4);
  auto p = random_vectors(rng, 6, 4);
  const double base = mn_loss(a, p, 20.0).loss;
  std::uniform_real_distribution<double> u(0.1, 10.0);
  for (auto& v : p) v *= u(rng);
  EXPECT_NEAR(mn_loss(a, p, 20.0).loss, base, 1e-10);
}

TEST(MultipleNegativesLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  for (auto sim : {Similarity::cosine, Similarity::dot}) {
    auto a = random_vectors(rng, 4, 3);
    auto p = random_vectors(rng, 4, 3);
    const double scale = sim == Similarity::cosine ? 5.0 : 0.5;
    const auto r = mn_loss(a, p, scale, sim);
    const double h = 1e-6;
    for (std::size_t i = 0; i < 4; ++i) {
      for (Eigen::Index k = 0; k < 3; ++k) {
        for (int side = 0; side < 2; ++side) {
          auto& x = side == 0 ? a[i][k] : p[i][k];
          const double saved = x;
          x = saved + h;
          const double up = mn_loss(a, p, scale, sim).loss;
          x = saved - h;
          const double down = mn_loss(a, p, scale, sim).loss;
          x = saved;
          const double g = side == 0 ? r.grad_anchors[i][k] : r.grad_positives[i][k];
          EXPECT_NEAR(g, (up - down) / (2 * h), 1e-7);
        }
      }
    }
  }
}

TEST(MultipleNegativesLoss, ZeroNormIsNumericError) {
  const std::vector<Vector> a{vec({0, 0}), vec({1, 0})}, p{vec({1, 0}), vec({0, 1})};
  EXPECT_THROW(mn_loss(a, p, 20.0), NumericError);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  Matrix p = Matrix::Constant(1, 1, 0.5);
  const Matrix g = Matrix::Constant(1, 1, 1.0);
  std::vector<Matrix*> ps{&p};
  std::vector<const Matrix*> gs{&g};
  OptimizerState state;
  adamw_step(ps, gs, state, 1e-3, 0.0);
  EXPECT_NEAR(p(0, 0), 0.5 - 1e-3, 1e-9);
}

TEST(AdamW, ZeroGradientOnlyDecays) {
  Matrix p = Matrix::Constant(2, 2, 2.0);
  const Matrix g = Matrix::Zero(2, 2);
  std::vector<Matrix*> ps{&p};
  std::vector<const Matrix*> gs{&g};
  OptimizerState state;
  adamw_step(ps, gs, state, 0.1, 0.01);
  EXPECT_NEAR(p(1, 0), 2.0 * (1 - 0.1 * 0.01), 1e-15);
}

TEST(AdamW, NonFiniteGradientIsNumericError) {
  Matrix p = Matrix::Zero(1, 2);
  Matrix g = Matrix::Zero(1, 2);
  g(0, 1) = std::nan("");
  std::vector<Matrix*> ps{&p};
  std::vector<const Matrix*> gs{&g};
  OptimizerState state;
  EXPECT_THROW(adamw_step(ps, gs, state, 0.1, 0.0), NumericError);
}

TEST(AdamW, EncoderPadRowStaysZero) {
  const std::vector<std::string> texts{"a b c"};
  auto m = EncoderModel::init(build_vocab(texts, 10), {4, true, false, 8}, 1);
  EncoderGradients g;
  g.embedding_rows[Vocabulary::pad_id] = RowVector::Ones(4);
  g.embedding_rows[2] = RowVector::Ones(4);
  OptimizerState state;
  const RowVector before = m.params().embedding.row(2);
  adamw_step(m, g, state, 0.1, 0.5);
  EXPECT_TRUE(m.params().embedding.row(Vocabulary::pad_id).isZero(0));
  EXPECT_FALSE(m.params().embedding.row(2).isApprox(before));
}

TEST(Schedule, Examples) {
  EXPECT_DOUBLE_EQ(lr_at(0, 100, 1.0, 0.1), 0.0);
  EXPECT_DOUBLE_EQ(lr_at(5, 100, 1.0, 0.1), 0.5);
  EXPECT_DOUBLE_EQ(lr_at(10, 100, 1.0, 0.1), 1.0);
  EXPECT_DOUBLE_EQ(lr_at(55, 100, 1.0, 0.1), 0.5);
  EXPECT_DOUBLE_EQ(lr_at(100, 100, 1.0, 0.1), 0.0);
  EXPECT_DOUBLE_EQ(lr_at(0, 100, 2.0, 0.0), 2.0);
  EXPECT_DOUBLE_EQ(lr_at(1, 1, 1.0, 1.0), 0.0);
  EXPECT_THROW(lr_at(0, 0, 1.0, 0.1), UsageError);
  EXPECT_THROW(lr_at(101, 100, 1.0, 0.1), UsageError);
}

TEST(Schedule, NeverExceedsBaseAndPeaksAfterWarmup) {
  for (std::size_t total : {1u, 3u, 7u, 40u, 333u}) {
    for (double wf : {0.0, 0.1, 0.5, 1.0}) {
      double peak = 0;
      for (std::size_t s = 0; s <= total; ++s) {
        const double lr = lr_at(s, total, 3e-3, wf);
        EXPECT_GE(lr, 0.0);
        EXPECT_LE(lr, 3e-3 + 1e-18);
        peak = std::max(peak, lr);
      }
      // A warm-up covering every step never reaches the base rate.
      if (std::ceil(wf * static_cast<double>(total) - 1e-9) < static_cast<double>(total))
        EXPECT_DOUBLE_EQ(peak, 3e-3) << total << " " << wf;
    }
  }
}

TEST(Config, ErrorsAreListedTogether) {
  TrainConfig cfg;
  try {
    apply_overrides(cfg, {{"batch_size", "0"}, {"warmup_fraction", "1.5"}, {"bogus", "1"}});
    FAIL();
  } catch (const UsageError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("batch_size"), std::string::npos);
    EXPECT_NE(msg.find("warmup_fraction"), std::string::npos);
    EXPECT_NE(msg.find("bogus"), std::string::npos);
  }
}

TEST(Config, UnknownLossListsValidValues) {
  TrainConfig cfg;
  try {
    apply_overrides(cfg, {{"loss", "Cosine"}});
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("Triplet, MultipleNegatives"), std::string::npos);
  }
}

TEST(Config, KeyValueFileAndAliases) {
  const auto kv = parse_key_values("# comment\nloss = TLoss\n\nbatch_size=8  # inline\nuse_block = off\n");
  TrainConfig cfg;
  apply_overrides(cfg, kv);
  EXPECT_EQ(cfg.loss, LossKind::triplet);
  EXPECT_EQ(cfg.batch_size, 8u);
  EXPECT_FALSE(cfg.use_block);
  EXPECT_THROW(parse_key_values("just words"), UsageError);
}

TEST(Train, TooFewPairsNamesBatchSize) {
  const auto pairs = synthetic_pairs();
  TrainConfig cfg;
  cfg.batch_size = pairs.size() + 1;
  auto m = fresh_model(pairs, cfg);
  try {
    train(m, pairs, cfg);
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("batch_size"), std::string::npos);
  }
}

TEST(Train, DropsPartialBatch) {
  auto pairs = synthetic_pairs();
  pairs.resize(130);
  TrainConfig cfg;
  cfg.batch_size = 50;
  cfg.dim = 8;
  auto m = fresh_model(pairs, cfg);
  EXPECT_EQ(train(m, pairs, cfg).batches.size(), 2u);
}

TEST(Train, DeterministicAcrossThreadCounts) {
  const auto pairs = synthetic_pairs();
  for (auto loss : {LossKind::multiple_negatives, LossKind::triplet}) {
    TrainConfig cfg;
    cfg.loss = loss;
    cfg.batch_size = 16;
    cfg.dim = 12;
    auto a = fresh_model(pairs, cfg);
    auto b = fresh_model(pairs, cfg);
    const auto la = train(a, pairs, cfg, 1);
    const auto lb = train(b, pairs, cfg, 4);
    EXPECT_EQ(a.params(), b.params());
    EXPECT_EQ(la.to_jsonl(), lb.to_jsonl());
  }
}

TEST(Train, LossDecreases) {
  const auto pairs = synthetic_pairs(60);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.dim = 16;
  cfg.epochs = 2;
  auto m = fresh_model(pairs, cfg);
  const auto log = train(m, pairs, cfg);
  EXPECT_LT(log.mean_loss(10, true), log.mean_loss(10));
  EXPECT_TRUE(m.params().all_finite());
}
