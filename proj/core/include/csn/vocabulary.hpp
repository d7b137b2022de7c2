// SPDX-License-Identifier: Apache-2.0

#ifndef CSN_VOCABULARY_HPP
#define CSN_VOCABULARY_HPP

#include "csn/corpus.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace csn {

/// Token <-> id mapping. Id 0 is padding, id 1 the unknown token.
class Vocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  Vocabulary();

  /// Tokens seen at least `min_count` times, most frequent first (ties in
  /// lexicographic order), at most `max_size` of them.
  static Vocabulary build(const std::vector<TextSet>& sets, int min_count, int max_size);

  /// One token per line; line k (1-based) gets id k + 1.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Rebuilds a vocabulary from tokens() of another one.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);
  /// All tokens by id, reserved ones included.
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::int32_t id(const std::string& token) const;
  const std::string& token(std::int32_t id) const;
  std::size_t size() const { return tokens_.size(); }

  std::vector<std::int32_t> encode(const Tokens& tokens) const;
  Tokens decode(const std::vector<std::int32_t>& ids) const;

  /// Fixed-length padded sequence of `max_tokens` ids.
  TokenSequence encode_padded(const Tokens& tokens, int max_tokens) const;

  /// Encodes a (truncated) text set into fixed n/m/L slots.
  CandidateSet encode_set(const TextSet& set, const CorpusConfig& config) const;

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

}  // namespace csn

#endif  // CSN_VOCABULARY_HPP
