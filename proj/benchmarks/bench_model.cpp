// SPDX-License-Identifier: Apache-2.0

#include "csn/model.hpp"
#include "csn/synthetic.hpp"
#include "csn/training.hpp"
#include "csn/vocabulary.hpp"

#include <benchmark/benchmark.h>

namespace {

struct Fixture {
  csn::CorpusConfig corpus;
  csn::Vocabulary vocab;
  std::vector<csn::CandidateSet> sets;
  explicit Fixture(int count) {
    const auto text = csn::generate_synthetic_corpus(1, count, corpus);
    vocab = csn::Vocabulary::build(text, 1, 50000);
    for (const auto& t : text) sets.push_back(vocab.encode_set(t, corpus));
  }
};

csn::CsnModel<float> make_model(const Fixture& f, csn::SelectionLevel level) {
  csn::ModelConfig mc;
  mc.selection.level = level;
  csn::CsnModel<float> m(mc, f.vocab.size());
  csn::Rng rng = csn::make_stream(1, "init");
  m.initialize(rng);
  return m;
}

void BM_ScoreSet(benchmark::State& state) {
  static const Fixture f(4);
  const auto model = make_model(f, static_cast<csn::SelectionLevel>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(model.score(f.sets[0]));
  state.SetItemsProcessed(state.iterations() * csn::kCandidatesPerSet);
}
BENCHMARK(BM_ScoreSet)->Arg(static_cast<int>(csn::SelectionLevel::Sentence))->Arg(static_cast<int>(csn::SelectionLevel::Word));

void BM_TrainEpoch(benchmark::State& state) {
  static const Fixture f(20);
  csn::TrainConfig tc;
  tc.max_epochs = 1;
  for (auto _ : state) {
    auto model = make_model(f, csn::SelectionLevel::Word);
    benchmark::DoNotOptimize(csn::train(model, f.sets, f.sets, tc).epochs.size());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(f.sets.size()));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
