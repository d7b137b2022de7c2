// SPDX-License-Identifier: Apache-2.0

#include "csn/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <map>

namespace csn {

Vocabulary::Vocabulary() {
  add(kPadToken);
  add(kUnkToken);
}

void Vocabulary::add(const std::string& token) {
  if (index_.count(token)) return;
  index_.emplace(token, static_cast<std::int32_t>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<TextSet>& sets, int min_count, int max_size) {
  std::map<std::string, long> counts;
  auto count = [&](const Tokens& t) {
    for (const auto& w : t) ++counts[w];
  };
  for (const auto& s : sets) {
    for (const auto& u : s.context) count(u);
    for (const auto& d : s.document) count(d);
    for (const auto& c : s.candidates) count(c);
  }
  if (counts.empty()) throw DataError("cannot build a vocabulary from an empty corpus");

  std::vector<std::pair<std::string, long>> ranked;
  for (auto& [w, c] : counts)
    if (c >= min_count && w != kPadToken && w != kUnkToken) ranked.emplace_back(w, c);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (static_cast<long>(ranked.size()) > max_size) ranked.resize(static_cast<std::size_t>(max_size));

  Vocabulary v;
  for (const auto& [w, c] : ranked) v.add(w);
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file: " + path.string());
  Vocabulary v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.find_first_of(" \t") != std::string::npos)
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected one token per line");
    if (v.index_.count(line))
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": duplicate token '" + line + "'");
    v.add(line);
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < 2 || tokens[0] != kPadToken || tokens[1] != kUnkToken)
    throw DataError("vocabulary must start with the reserved tokens");
  Vocabulary v;
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    if (v.index_.count(tokens[i])) throw DataError("duplicate vocabulary token '" + tokens[i] + "'");
    v.add(tokens[i]);
  }
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t i = 2; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

std::int32_t Vocabulary::id(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) throw std::out_of_range("token id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::int32_t> Vocabulary::encode(const Tokens& tokens) const {
  std::vector<std::int32_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Tokens Vocabulary::decode(const std::vector<std::int32_t>& ids) const {
  Tokens out;
  out.reserve(ids.size());
  for (auto i : ids) out.push_back(token(i));
  return out;
}

TokenSequence Vocabulary::encode_padded(const Tokens& tokens, int max_tokens) const {
  TokenSequence seq;
  seq.ids.assign(static_cast<std::size_t>(max_tokens), kPad);
  const std::size_t n = std::min(tokens.size(), static_cast<std::size_t>(max_tokens));
  for (std::size_t i = 0; i < n; ++i) seq.ids[i] = id(tokens[i]);
  seq.length = static_cast<int>(n);
  return seq;
}

CandidateSet Vocabulary::encode_set(const TextSet& raw, const CorpusConfig& config) const {
  TextSet set = raw;
  truncate(set, config);
  const int L = config.max_tokens;
  CandidateSet out;
  const TokenSequence empty = encode_padded({}, L);
  out.context.assign(static_cast<std::size_t>(config.max_turns), empty);
  const std::size_t offset = static_cast<std::size_t>(config.max_turns) - set.context.size();
  for (std::size_t i = 0; i < set.context.size(); ++i) out.context[offset + i] = encode_padded(set.context[i], L);
  out.document.assign(static_cast<std::size_t>(config.max_sentences), empty);
  for (std::size_t j = 0; j < set.document.size(); ++j) out.document[j] = encode_padded(set.document[j], L);
  for (const auto& c : set.candidates) out.candidates.push_back(encode_padded(c, L));
  out.positive = set.positive;
  out.planted = set.planted;
  return out;
}

}  // namespace csn
