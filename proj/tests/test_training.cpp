#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "attnaudit/training.hpp"
#include "attnaudit/util.hpp"
#include "fixtures.hpp"

using namespace attnaudit;
using namespace attnaudit::testing;

TEST(BceLoss, Examples) {
  EXPECT_NEAR(bce_loss(std::vector<double>{0.5}, std::vector<int>{1}), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_loss(std::vector<double>{1.0}, std::vector<int>{1}), 0.0, 1e-11);
  EXPECT_NEAR(bce_loss(std::vector<double>{0.0}, std::vector<int>{0}), 0.0, 1e-11);
  EXPECT_NEAR(bce_loss(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}), std::log(2.0), 1e-15);
}

TEST(BceLoss, ClampKeepsLossFinite) {
  const double l = bce_loss(std::vector<double>{0.0}, std::vector<int>{1});
  EXPECT_TRUE(std::isfinite(l));
  EXPECT_NEAR(l, -std::log(1e-12), 1e-6);
}

TEST(Adam, ZeroGradientWithoutL2LeavesParametersUnchanged) {
  ParameterStore ps;
  ps.add("w", Tensor::row({1.5, -2.0}));
  TrainConfig c;
  c.l2 = 0.0;
  AdamState s;
  adam_step(ps, {{"w", Tensor({2})}}, s, c);
  EXPECT_EQ(ps.get("w").storage(), (std::vector<double>{1.5, -2.0}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterStore ps;
  ps.add("w", Tensor::row({0.0, 0.0}));
  TrainConfig c;
  c.l2 = 0.0;
  AdamState s;
  adam_step(ps, {{"w", Tensor::row({0.3, -7.0})}}, s, c);
  EXPECT_NEAR(ps.get("w")[0], -1e-3, 1e-10);
  EXPECT_NEAR(ps.get("w")[1], 1e-3, 1e-10);
}

TEST(Adam, ConvergesOnShiftedQuadratic) {
  // Independent scalar recurrence of the bias-corrected update.
  TrainConfig c;
  c.l2 = 0.0;
  c.learning_rate = 0.1;
  double w = 0.0, m = 0.0, v = 0.0;
  ParameterStore ps;
  ps.add("w", Tensor::scalar(0.0));
  AdamState s;
  for (int t = 1; t <= 100; ++t) {
    const double g = 2.0 * (w - 3.0);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    w -= c.learning_rate * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    adam_step(ps, {{"w", Tensor::scalar(2.0 * (ps.get("w").item() - 3.0))}}, s, c);
  }
  EXPECT_NEAR(w, 3.0, 0.1);
  EXPECT_NEAR(ps.get("w").item(), w, 1e-12);
}

TEST(Adam, L2ShrinksParametersWithZeroDataGradient) {
  ParameterStore ps;
  ps.add("w", Tensor::row({2.0, -3.0, 0.5}));
  TrainConfig c;
  c.l2 = 1e-2;
  AdamState s;
  for (int i = 0; i < 5; ++i) {
    const Tensor before = ps.get("w");
    adam_step(ps, {{"w", Tensor({3})}}, s, c);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_LT(std::abs(ps.get("w")[j]), std::abs(before[j]));
  }
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  ParameterStore ps;
  ps.add("decoder.theta", Tensor::scalar(1.0));
  AdamState s;
  try {
    adam_step(ps, {{"decoder.theta", Tensor::scalar(std::nan(""))}}, s, TrainConfig{});
    FAIL();
  } catch (const std::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("decoder.theta"), std::string::npos);
  }
}

TEST(Auc, Examples) {
  EXPECT_EQ(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}), 1.0);
  EXPECT_EQ(auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, std::vector<int>{0, 1, 0, 1}), 0.5);
  EXPECT_EQ(auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}), 0.75);
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), ValidationError);
}

TEST(Auc, MatchesPairEnumerationAndIsMonotoneInvariant) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> coarse(0, 5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(20);
    std::vector<int> y(20);
    for (std::size_t i = 0; i < 20; ++i) {
      s[i] = coarse(rng) / 5.0 - 0.3;  // many ties
      y[i] = static_cast<int>(i % 3 == 0);
    }
    double pairs = 0.0, wins = 0.0;
    for (std::size_t i = 0; i < 20; ++i)
      for (std::size_t j = 0; j < 20; ++j)
        if (y[i] == 1 && y[j] == 0) {
          pairs += 1.0;
          wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
    const double a = auc(s, y);
    EXPECT_NEAR(a, wins / pairs, 1e-12);
    std::vector<double> cubes;
    for (double x : s) cubes.push_back(x * x * x);
    EXPECT_EQ(auc(cubes, y), a);
  }
}

TEST(TrainingLog, CsvHeader) {
  TrainingLog log;
  log.epochs.push_back({1, 0.5, 0.75, 0.75});
  EXPECT_EQ(log.to_csv(), "epoch,train_loss,dev_macro_auc,best_so_far\n1,0.5,0.75,0.75\n");
}

namespace {

Dataset small_planted(std::uint64_t seed, std::size_t n = 300, std::size_t len = 20) {
  SyntheticCorpusParams p;
  p.n_docs = n;
  p.doc_len = len;
  p.vocab_size = 40;
  p.seed = seed;
  return generate_synthetic_corpus(p);
}

Model small_model(const Dataset& d, EncoderKind kind, std::uint64_t seed) {
  auto c = tiny_config(kind, 16, 16);
  return tiny_model(c, d.vocabulary, seed);
}

}  // namespace

TEST(Train, ZeroEpochsReturnsInitialModel) {
  const Dataset d = small_planted(1, 60, 6);
  const Model m = small_model(d, EncoderKind::projection, 2);
  TrainConfig c;
  c.max_epochs = 0;
  const auto r = train(m, d, c);
  EXPECT_TRUE(r.log.epochs.empty());
  EXPECT_EQ(r.model.params(), m.params());
}

TEST(Train, RejectsSingleClassLabel) {
  Dataset d = small_planted(1, 60, 6);
  for (auto& doc : d.documents) doc.labels[0] = 1;
  const Model m = small_model(d, EncoderKind::projection, 2);
  EXPECT_THROW(train(m, d, TrainConfig{}), ValidationError);
}

TEST(Train, DeterministicUnderSeed) {
  const Dataset d = small_planted(3, 120, 10);
  const Model m = small_model(d, EncoderKind::cnn, 4);
  TrainConfig c;
  c.max_epochs = 3;
  c.seed = 9;
  const auto a = train(m, d, c);
  const auto b = train(m, d, c);
  EXPECT_EQ(a.log.to_csv(), b.log.to_csv());
  EXPECT_EQ(a.model.to_checkpoint(), b.model.to_checkpoint());
}

TEST(Train, ProjectionLearnsPlantedSignal) {
  const Dataset d = small_planted(5);
  const Model m = small_model(d, EncoderKind::projection, 6);
  TrainConfig c;
  c.max_epochs = 10;
  c.learning_rate = 1e-2;
  c.seed = 7;
  const auto r = train(m, d, c);
  ASSERT_FALSE(r.log.epochs.empty());
  EXPECT_GE(r.log.epochs.back().best_so_far, 0.95);
  double prev = -1.0;
  for (const auto& e : r.log.epochs) {
    EXPECT_GE(e.train_loss, 0.0);
    EXPECT_GE(e.best_so_far, prev);
    prev = e.best_so_far;
  }
  EXPECT_NEAR(evaluate(r.model, d, Split::dev).macro_auc, r.log.epochs.back().best_so_far, 1e-15);
}

TEST(Evaluate, ReportsPositivesAndSplitHash) {
  const Dataset d = small_planted(5, 100, 8);
  const Model m = small_model(d, EncoderKind::projection, 6);
  const auto r = evaluate(m, d, Split::test);
  EXPECT_EQ(r.instances, d.split(Split::test).size());
  EXPECT_EQ(r.split_hash, d.split_hash(Split::test));
  ASSERT_EQ(r.auc.size(), 1u);
  EXPECT_GE(r.auc[0], 0.0);
  EXPECT_LE(r.auc[0], 1.0);
}
