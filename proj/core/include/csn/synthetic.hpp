// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale synthetic document-grounded corpus.
//
// Every document sentence is built around two "topic" tokens and a few
// "fact" tokens. One sentence is planted: the recent context turns mention
// its topics and the true response repeats some of its facts, so the
// response can only be recognised by finding the sentence the context is
// about. Negatives are true responses of other sets, which frequently repeat
// facts that also occur in the distractor sentences of this document.

#ifndef CSN_SYNTHETIC_HPP
#define CSN_SYNTHETIC_HPP

#include "csn/corpus.hpp"

#include <cstdint>
#include <vector>

namespace csn {

struct SyntheticOptions {
  int topic_tokens = 200;  // size of the topic pool
  int fact_tokens = 200;   // size of the fact pool
  int filler_tokens = 100; // size of the filler pool
  int facts_per_sentence = 3;
  int facts_per_response = 2;
};

/// Deterministic in (seed, sets, config, options). Documents have m
/// sentences with pairwise distinct topics; `planted` records the grounding
/// sentence of each set. Negatives are sampled uniformly from other sets.
std::vector<TextSet> generate_synthetic_corpus(std::uint64_t seed, int sets, const CorpusConfig& config,
                                               const SyntheticOptions& options = {});

/// Distinct tokens shared between a candidate and (last utterance + whole
/// document); the word-overlap baseline ranks candidates by this count.
int overlap_score(const TextSet& set, const Tokens& candidate);

}  // namespace csn

#endif  // CSN_SYNTHETIC_HPP
