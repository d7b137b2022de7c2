// SPDX-License-Identifier: Apache-2.0

#include "csn/training.hpp"
#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

namespace csn {
namespace {

// A set whose candidates only matter through the scorer.
CandidateSet blank_set(int positive) {
  CandidateSet s;
  s.context.resize(1);
  s.document.resize(1);
  s.candidates.resize(20);
  for (int i = 0; i < 20; ++i) s.candidates[static_cast<std::size_t>(i)].length = i;
  s.positive = positive;
  return s;
}

// Candidate i scores scores[i] (looked up through its length field).
Scorer table_scorer(const std::vector<std::vector<double>>& table, const std::vector<CandidateSet>& sets) {
  return [table, &sets](const CandidateSet& s) {
    for (std::size_t k = 0; k < sets.size(); ++k)
      if (&sets[k] == &s) return table[k];
    return std::vector<double>(20, 0.0);
  };
}

TEST(Rank, TiesArePessimistic) {
  std::vector<double> s(20, 0.0);
  s[4] = 1.0;
  EXPECT_EQ(rank_of_positive(s, 4), 1);
  EXPECT_EQ(rank_of_positive(s, 0), 20);
  s[7] = 1.0;
  EXPECT_EQ(rank_of_positive(s, 4), 2);
  std::vector<double> flat(20, 0.3);
  EXPECT_EQ(rank_of_positive(flat, 9), 20);
}

TEST(Evaluate, CraftedSets) {
  std::vector<CandidateSet> sets;
  std::vector<std::vector<double>> table;
  auto add = [&](int positive, std::vector<double> scores) {
    sets.push_back(blank_set(positive));
    table.push_back(std::move(scores));
  };
  std::vector<double> base(20);
  for (int i = 0; i < 20; ++i) base[static_cast<std::size_t>(i)] = 0.01 * i;
  add(19, base);  // rank 1
  add(18, base);  // rank 2
  add(16, base);  // rank 4
  add(14, base);  // rank 6
  auto tied = base;
  tied[13] = tied[19];
  add(13, tied);  // ties with the top score: rank 2
  const auto r = evaluate(sets, table_scorer(table, sets));
  EXPECT_EQ(r.ranks, (std::vector<int>{1, 2, 4, 6, 2}));
  EXPECT_DOUBLE_EQ(r.r1, 1.0 / 5);
  EXPECT_DOUBLE_EQ(r.r2, 3.0 / 5);
  EXPECT_DOUBLE_EQ(r.r5, 4.0 / 5);
  EXPECT_EQ(r.sets, 5u);
}

TEST(Evaluate, RejectsMalformedSets) {
  std::vector<CandidateSet> sets{blank_set(0)};
  sets[0].candidates.resize(19);
  EXPECT_THROW(evaluate(sets, [](const CandidateSet&) { return std::vector<double>(19, 0.0); }), DataError);
}

TEST(Evaluate, RandomScorerMatchesChance) {
  Rng rng = make_stream(1, "random-scorer");
  std::vector<CandidateSet> sets(10000, blank_set(0));
  for (auto& s : sets) s.positive = static_cast<int>(uniform_index(rng, 20));
  const auto r = evaluate(sets, [&rng](const CandidateSet&) {
    std::vector<double> s(20);
    for (auto& v : s) v = uniform01(rng);
    return s;
  });
  for (auto [k, got] : {std::pair{1, r.r1}, std::pair{2, r.r2}, std::pair{5, r.r5}}) {
    const double p = k / 20.0;
    EXPECT_NEAR(got, p, 3 * std::sqrt(p * (1 - p) / 10000)) << "R@" << k;
  }
  EXPECT_LE(r.r1, r.r2);
  EXPECT_LE(r.r2, r.r5);
}

TEST(Evaluate, ModelScoresAreOrderInvariant) {
  const auto d = testing::tiny_data(6, 11, 2, 2, 4);
  const auto model = testing::initialized<double>(testing::tiny_model(d.corpus), d.vocab.size());
  auto permuted = d.sets;
  std::vector<int> order(20);
  for (int i = 0; i < 20; ++i) order[static_cast<std::size_t>(i)] = 19 - i;
  for (auto& s : permuted) permute_candidates(s, order);
  const auto a = evaluate(model, d.sets), b = evaluate(model, permuted);
  EXPECT_EQ(a.ranks, b.ranks);
  EXPECT_LE(a.r1, a.r2);
  EXPECT_LE(a.r2, a.r5);
}

TEST(AdamW, FirstStepByHand) {
  std::vector<Parameter<double>> params{Parameter<double>("w", 1, 1), Parameter<double>("e", 1, 1, false)};
  params[0].value(0, 0) = 1.0;
  params[0].grad(0, 0) = 0.5;
  params[1].value(0, 0) = 1.0;
  params[1].grad(0, 0) = -2.0;
  TrainConfig c;
  c.weight_decay = 0.01;
  AdamW<double> opt(params, c);
  opt.step(params, 0.1);
  // Bias-corrected first step moves by lr * sign(g); decay shrinks by lr*wd.
  EXPECT_NEAR(params[0].value(0, 0), 1.0 * (1 - 0.001) - 0.1, 1e-7);
  EXPECT_NEAR(params[1].value(0, 0), 1.1, 1e-7);
  EXPECT_EQ(opt.steps(), 1);
}

TrainConfig quick_config(int epochs) {
  TrainConfig tc;
  tc.max_epochs = epochs;
  tc.batch_size = 40;
  tc.patience = 100;
  tc.precision = Precision::Float64;
  return tc;
}

TEST(Train, PlateauHalvesNextRate) {
  const auto d = testing::tiny_data(6, 12);
  auto model = testing::initialized<double>(testing::tiny_model(d.corpus), d.vocab.size());
  const auto h = train(model, d.sets, d.sets, quick_config(6));
  ASSERT_EQ(h.epochs.size(), 6u);
  EXPECT_EQ(h.epochs[0].learning_rate, 1e-3);
  for (std::size_t e = 1; e < h.epochs.size(); ++e) {
    const double expected = h.epochs[e - 1].improved ? h.epochs[e - 1].learning_rate : h.epochs[e - 1].learning_rate * 0.5;
    EXPECT_EQ(h.epochs[e].learning_rate, expected) << "epoch " << e + 1;
  }
}

TEST(Train, PatienceStopsAndBestIsRestored) {
  const auto d = testing::tiny_data(6, 13);
  auto model = testing::initialized<double>(testing::tiny_model(d.corpus), d.vocab.size());
  auto tc = quick_config(40);
  tc.patience = 1;
  const auto h = train(model, d.sets, d.sets, tc);
  int misses = 0;
  for (const auto& e : h.epochs) misses += e.improved ? 0 : 1;
  EXPECT_LE(misses, 1);
  EXPECT_DOUBLE_EQ(evaluate(model, d.sets).r1, h.best_valid_r1);
}

TEST(Train, BitReproducibleInDouble) {
  const auto d = testing::tiny_data(5, 14);
  const auto mc = testing::tiny_model(d.corpus);
  auto a = testing::initialized<double>(mc, d.vocab.size());
  auto b = testing::initialized<double>(mc, d.vocab.size());
  const auto ha = train(a, d.sets, d.sets, quick_config(3));
  const auto hb = train(b, d.sets, d.sets, quick_config(3));
  ASSERT_EQ(ha.epochs.size(), hb.epochs.size());
  for (std::size_t e = 0; e < ha.epochs.size(); ++e) EXPECT_EQ(ha.epochs[e].loss, hb.epochs[e].loss);
  for (std::size_t i = 0; i < a.parameters().size(); ++i) EXPECT_EQ(a.parameters()[i].value, b.parameters()[i].value);
}

TEST(Train, NonFiniteParameterIsNamed) {
  const auto d = testing::tiny_data(3, 15);
  auto model = testing::initialized<double>(testing::tiny_model(d.corpus), d.vocab.size());
  model.parameter("matching.H2").value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    train(model, d.sets, d.sets, quick_config(1));
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("matching.H2"), std::string::npos) << e.what();
  }
}

TEST(GradientCheck, OutputBiasWithZeroLastLayer) {
  const auto d = testing::tiny_data(2, 16);
  auto mc = testing::tiny_model(d.corpus);
  mc.dropout = 0.0;
  auto model = testing::initialized<double>(mc, d.vocab.size());
  model.parameter("mlp.out.weight").value.setZero();
  GradientCheckOptions o;
  o.max_entries = 20;
  const auto r = gradient_check(model, d.sets[0], o);
  bool found = false;
  for (const auto& g : r.groups)
    if (g.name == "mlp.out.bias") {
      found = true;
      EXPECT_LE(g.max_abs_error, 1e-6);
    }
  EXPECT_TRUE(found);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(GradientCheck, RelativeErrorFloor) {
  EXPECT_DOUBLE_EQ(relative_error(1.0, 1.0, 1e-6), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0, 1e-6), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(1e-9, 0.0, 1e-6), 1e-3);
}

}  // namespace
}  // namespace csn
