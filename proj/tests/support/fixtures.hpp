// SPDX-License-Identifier: Apache-2.0

#ifndef CSN_TESTS_FIXTURES_HPP
#define CSN_TESTS_FIXTURES_HPP

#include "csn/model.hpp"
#include "csn/synthetic.hpp"
#include "csn/vocabulary.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace csn::testing {

#ifdef CSN_TEST_TMP
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::path(CSN_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}
#endif

struct TinyData {
  CorpusConfig corpus;
  Vocabulary vocab;
  std::vector<TextSet> text;
  std::vector<CandidateSet> sets;
};

inline TinyData tiny_data(int sets, std::uint64_t seed = 3, int n = 2, int m = 2, int L = 4) {
  TinyData d;
  d.corpus.max_turns = n;
  d.corpus.max_sentences = m;
  d.corpus.max_tokens = L;
  d.text = generate_synthetic_corpus(seed, sets, d.corpus);
  d.vocab = Vocabulary::build(d.text, 1, 10000);
  for (const auto& t : d.text) d.sets.push_back(d.vocab.encode_set(t, d.corpus));
  return d;
}

inline ModelConfig tiny_model(const CorpusConfig& c, SelectionLevel level = SelectionLevel::Word) {
  ModelConfig mc;
  mc.max_turns = c.max_turns;
  mc.max_sentences = c.max_sentences;
  mc.max_tokens = c.max_tokens;
  mc.embed_dim = 4;
  mc.hidden = 3;
  mc.aggregator = 3;
  mc.selection.attention_width = 2;
  mc.selection.level = level;
  mc.cnn.conv1_filters = 4;
  mc.cnn.conv2_filters = 4;
  return mc;
}

template <typename T>
CsnModel<T> initialized(const ModelConfig& mc, std::size_t vocab, std::uint64_t seed = 1) {
  CsnModel<T> m(mc, vocab);
  Rng rng = make_stream(seed, "init");
  m.initialize(rng);
  return m;
}

}  // namespace csn::testing

#endif  // CSN_TESTS_FIXTURES_HPP
