// SPDX-License-Identifier: Apache-2.0

#include "oracles.hpp"

#include <gtest/gtest.h>

namespace csn {
namespace {

using oracle::Mat;

TEST(Oracles, RandomInputsMatchLoopImplementations) {
  const auto d = oracle::run_oracles(150, 11);
  EXPECT_EQ(d.trials, 150);
  EXPECT_LE(d.sentence_match, 1e-6);
  EXPECT_LE(d.word_match_map, 1e-6);
  EXPECT_LE(d.word_scores, 1e-6);
  EXPECT_LE(d.attentive, 1e-6);
  EXPECT_LE(d.similarity_pair, 1e-6);
}

TEST(SentenceMatch, IdenticalSentenceScoresOne) {
  Rng rng = make_stream(2, "t");
  const Mat u = oracle::random_rep(rng, 4, 3, 3);
  ad::Tape<double> tape(false);
  std::vector<SequentialRep<double>> ctx{{tape.constant(u), 3}};
  const auto a = sentence_match_scores(ctx, SequentialRep<double>{tape.constant(u), 3});
  EXPECT_NEAR(a.value()(0, 0), 1.0, 1e-12);
}

TEST(SentenceMatch, OrthogonalMeansScoreZero) {
  Mat u = Mat::Zero(2, 2), s = Mat::Zero(2, 2);
  u(0, 0) = 1.0;
  s(0, 1) = 2.0;
  ad::Tape<double> tape(false);
  std::vector<SequentialRep<double>> ctx{{tape.constant(u), 1}, {tape.constant(u), 0}};
  const auto a = sentence_match_scores(ctx, SequentialRep<double>{tape.constant(s), 1});
  EXPECT_EQ(a.value()(0, 0), 0.0);
  EXPECT_EQ(a.value()(1, 0), 0.0);  // empty utterance
}

TEST(WordMatchMap, ZeroWeightsGiveZeroMap) {
  Rng rng = make_stream(3, "t");
  ad::Tape<double> tape(false);
  std::vector<SequentialRep<double>> ctx;
  for (int i = 0; i < 2; ++i) ctx.push_back({tape.constant(oracle::random_rep(rng, 3, 2, 3)), 3});
  const SequentialRep<double> s{tape.constant(oracle::random_rep(rng, 3, 2, 2)), 2};
  SelectionVars<double> p{tape.constant(Mat::Ones(1, 2)), tape.constant(Mat::Zero(2, 4)), tape.constant(Mat::Zero(1, 2)),
                          tape.constant(oracle::random_matrix(rng, 1, 2))};
  const auto maps = word_match_map(ctx, s, p);
  ASSERT_EQ(maps.size(), 2u);
  for (const auto& m : maps) {
    EXPECT_EQ(m.rows(), 3);
    EXPECT_EQ(m.cols(), 3);
    EXPECT_EQ(m.value().cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(WordScores, ConstantMapGivesWeightSumTimesConstant) {
  ad::Tape<double> tape(false);
  const double c = 0.7;
  std::vector<ad::Var<double>> maps{tape.constant(Mat::Constant(3, 3, c)), tape.constant(Mat::Constant(3, 3, c))};
  Mat w(1, 2);
  w << 0.5, -2.0;
  const auto s = word_scores(maps, {3, 3}, 3, tape.constant(w), FusionMode::DecayedLinear, 1.0);
  for (Index t = 0; t < 3; ++t) EXPECT_DOUBLE_EQ(s.value()(t, 0), (0.5 - 2.0) * c);
}

TEST(WordScores, SingleUtteranceIsWeightedRowMax) {
  Rng rng = make_stream(4, "t");
  const Mat b = oracle::random_matrix(rng, 3, 4);
  ad::Tape<double> tape(false);
  Mat w(1, 1);
  w << 1.5;
  const auto s = word_scores(std::vector<ad::Var<double>>{tape.constant(b)}, {4}, 3, tape.constant(w),
                             FusionMode::DecayedLinear, 0.3);
  for (Index t = 0; t < 3; ++t) EXPECT_DOUBLE_EQ(s.value()(t, 0), 1.5 * b.row(t).maxCoeff());
}

TEST(WordScores, MaskedContextPositionsAreSkipped) {
  Mat b = Mat::Constant(2, 3, -1.0);
  b(0, 2) = 50.0;  // beyond the utterance length
  ad::Tape<double> tape(false);
  const auto s = word_scores(std::vector<ad::Var<double>>{tape.constant(b)}, {2}, 2, tape.constant(Mat::Ones(1, 1)),
                             FusionMode::LearnedLinear, 1.0);
  EXPECT_DOUBLE_EQ(s.value()(0, 0), -1.0);
}

TEST(Attentive, EmptyKeysGiveZeroOutput) {
  Rng rng = make_stream(5, "t");
  const Mat q = oracle::random_rep(rng, 3, 2, 3), k = oracle::random_rep(rng, 3, 2, 0);
  ad::Tape<double> tape(false);
  const auto out = attentive(tape.constant(q), tape.constant(k), tape.constant(k), 3, 0);
  EXPECT_EQ(out.value().cwiseAbs().maxCoeff(), 0.0);
}

}  // namespace
}  // namespace csn
