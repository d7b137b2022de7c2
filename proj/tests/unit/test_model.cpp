// SPDX-License-Identifier: Apache-2.0

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

namespace csn {
namespace {

TEST(Model, ScoresAreProbabilitiesAndDeterministic) {
  const auto d = testing::tiny_data(3, 31);
  for (auto level : {SelectionLevel::Sentence, SelectionLevel::Word}) {
    const auto model = testing::initialized<double>(testing::tiny_model(d.corpus, level), d.vocab.size());
    const auto a = model.score(d.sets[0]);
    ASSERT_EQ(a.size(), 20u);
    for (double g : a) {
      EXPECT_GT(g, 0.0);
      EXPECT_LT(g, 1.0);
    }
    EXPECT_EQ(a, model.score(d.sets[0]));
    const auto samples = to_samples(d.sets[0]);
    EXPECT_NEAR(model.score(samples[3]), a[3], 1e-12);
  }
}

TEST(Model, InitialisationFollowsTheDocumentedRanges) {
  const auto d = testing::tiny_data(3, 32);
  const auto model = testing::initialized<double>(testing::tiny_model(d.corpus), d.vocab.size());
  const auto& e = model.parameter("embedding").value;
  EXPECT_EQ(e.row(0).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LE(e.cwiseAbs().maxCoeff(), 0.1);
  EXPECT_GT(e.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(model.parameter("selection.fusion").value.minCoeff(), 1.0);
  EXPECT_EQ(model.parameter("selection.fusion").value.maxCoeff(), 1.0);
  // The output bias starts at the 1:19 prior.
  EXPECT_NEAR(model.parameter("mlp.out.bias").value(0, 0), std::log(1.0 / 19.0), 1e-12);
}

TEST(Model, SameSeedSameParameters) {
  const auto d = testing::tiny_data(2, 33);
  const auto mc = testing::tiny_model(d.corpus);
  const auto a = testing::initialized<float>(mc, d.vocab.size(), 5);
  const auto b = testing::initialized<float>(mc, d.vocab.size(), 5);
  const auto c = testing::initialized<float>(mc, d.vocab.size(), 6);
  for (std::size_t i = 0; i < a.parameters().size(); ++i) EXPECT_EQ(a.parameters()[i].value, b.parameters()[i].value);
  EXPECT_NE(a.parameters()[1].value, c.parameters()[1].value);
}

TEST(Model, FloatAndDoubleAgree) {
  const auto d = testing::tiny_data(2, 34);
  const auto md = testing::initialized<double>(testing::tiny_model(d.corpus), d.vocab.size());
  const auto mf = md.cast<float>();
  const auto a = md.score(d.sets[0]), b = mf.score(d.sets[0]);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-5);
}

TEST(Model, ConfigValidation) {
  ModelConfig mc;
  mc.max_tokens = 3;
  EXPECT_THROW(mc.validate(), ConfigError);
  ModelConfig ok;
  EXPECT_NO_THROW(ok.validate());
  ModelConfig bad_gamma;
  bad_gamma.selection.gamma = -0.1;
  EXPECT_THROW(bad_gamma.validate(), ConfigError);
}

TEST(Model, BlockedSentenceGetsNoGradient) {
  auto d = testing::tiny_data(2, 35, 2, 2, 4);
  auto mc = testing::tiny_model(d.corpus, SelectionLevel::Sentence);
  mc.dropout = 0.0;
  auto model = testing::initialized<double>(mc, d.vocab.size());
  const auto& set = d.sets[0];
  const auto trace = model.inspect(set);
  const double cut = std::max(trace[0].score, trace[1].score) + 1.0;
  auto sel = mc.selection;
  sel.gamma = 1.0 / (1.0 + std::exp(-cut));
  model.set_selection(sel);
  model.zero_grad();
  ad::Tape<double> tape;
  auto fwd = model.forward(tape, set.context, set.document, set.candidates, false, nullptr);
  std::vector<ad::Var<double>> losses;
  for (std::size_t c = 0; c < fwd.logits.size(); ++c)
    losses.push_back(ad::bce_with_logit(fwd.logits[c], static_cast<int>(c) == set.positive ? 1.0 : 0.0));
  tape.backward(ad::sum(ad::concat_rows(losses)));
  for (const char* name : {"selection.fusion"}) EXPECT_EQ(model.parameter(name).grad.cwiseAbs().maxCoeff(), 0.0);
  // Embedding rows used only by the blocked document receive no gradient.
  std::set<std::int32_t> elsewhere;
  for (const auto* group : {&set.context, &set.candidates})
    for (const auto& s : *group) elsewhere.insert(s.ids.begin(), s.ids.end());
  const auto& g = model.parameter("embedding").grad;
  for (const auto& s : set.document)
    for (int t = 0; t < s.length; ++t) {
      const auto id = s.ids[static_cast<std::size_t>(t)];
      if (!elsewhere.count(id)) EXPECT_EQ(g.row(id).cwiseAbs().maxCoeff(), 0.0) << id;
    }
}

}  // namespace
}  // namespace csn
