// SPDX-License-Identifier: Apache-2.0
//
// Corpus types and dataset ingestion.
//
// Text flows through two stages. Loaders produce TextSets: tokenized,
// lowercased and truncated, but still strings. A Vocabulary then encodes them
// into CandidateSets of fixed-shape id sequences that the model consumes.

#ifndef CSN_CORPUS_HPP
#define CSN_CORPUS_HPP

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace csn {

inline constexpr int kCandidatesPerSet = 20;

/// Malformed or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration error (bad dimensions, unknown options).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CorpusConfig {
  int max_turns = 4;       // n: most recent utterances kept
  int max_sentences = 4;   // m: leading document sentences kept
  int max_tokens = 16;     // L: leading tokens kept per text
  int min_count = 1;
  int max_vocab = 50000;

  void validate() const;
};

using Tokens = std::vector<std::string>;

/// One candidate set before vocabulary encoding.
struct TextSet {
  std::vector<Tokens> context;     // oldest first
  std::vector<Tokens> document;
  std::vector<Tokens> candidates;
  int positive = 0;
  int planted = -1;  // synthetic corpora only: index of the grounding sentence
};

/// Padded id sequence of exactly L ids. Positions >= length hold id 0.
struct TokenSequence {
  std::vector<std::int32_t> ids;
  int length = 0;
};
using Utterance = TokenSequence;
using DocumentSentence = TokenSequence;

/// Encoded candidate set. `context` always has n slots, right-aligned so the
/// most recent utterance sits in slot n-1 (missing turns are empty slots at
/// the front); `document` always has m slots with empty slots at the back.
struct CandidateSet {
  std::vector<Utterance> context;
  std::vector<DocumentSentence> document;
  std::vector<Utterance> candidates;
  int positive = 0;
  int planted = -1;
};

/// One (context, document, response, label) instance.
struct Sample {
  std::vector<Utterance> context;
  std::vector<DocumentSentence> document;
  Utterance response;
  int label = 0;
};

enum class DatasetFormat { Persona, CmuDog, Records };

DatasetFormat parse_format(std::string_view name);
std::string_view format_name(DatasetFormat f);

/// Lowercases, splits on whitespace and peels trailing punctuation
/// (. , ! ? ; :) into separate tokens.
Tokens tokenize(std::string_view text);

/// Applies the truncation policy: last n utterances, first m sentences, first
/// L tokens of every text.
void truncate(TextSet& set, const CorpusConfig& config);

/// Reads a dataset file. Persona is the ParlAI PersonaChat text format, CmuDog
/// a tab-separated export, Records the normalized JSON-lines format written by
/// write_records. Throws DataError naming the offending line.
std::vector<TextSet> load_dataset(const std::filesystem::path& path, DatasetFormat format,
                                  const CorpusConfig& config);

/// Writes the normalized JSON-lines record format: one line per candidate,
/// 20 consecutive lines per set.
void write_records(const std::filesystem::path& path, const std::vector<TextSet>& sets);

/// Throws DataError unless the set has 20 candidates and a valid positive.
void validate_set(const TextSet& set);
void validate_set(const CandidateSet& set);

/// Expands a candidate set into its 20 labelled samples.
std::vector<Sample> to_samples(const CandidateSet& set);

/// Moves candidate `from` to position `to`, keeping `positive` consistent.
void permute_candidates(CandidateSet& set, const std::vector<int>& order);

}  // namespace csn

#endif  // CSN_CORPUS_HPP
