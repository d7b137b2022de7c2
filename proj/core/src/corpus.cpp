// SPDX-License-Identifier: Apache-2.0

#include "csn/corpus.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace csn {

namespace {

using json = nlohmann::json;

constexpr std::string_view kPersonaPrefix = "your persona:";
constexpr std::string_view kUtteranceSeparator = "__eou__";
constexpr std::string_view kSentenceSeparator = "__eos__";

bool is_terminal_punct(char c) {
  return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':';
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : text) {
    if (c == sep) {
      parts.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(std::move(cur));
  return parts;
}

std::vector<std::string> split_on(std::string_view text, std::string_view sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t at = text.find(sep, start);
    if (at == std::string_view::npos) {
      parts.emplace_back(text.substr(start));
      break;
    }
    parts.emplace_back(text.substr(start, at - start));
    start = at + sep.size();
  }
  return parts;
}

std::string join(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line) + ": ";
}

std::vector<Tokens> tokenize_all(const std::vector<std::string>& texts) {
  std::vector<Tokens> out;
  for (const auto& t : texts) {
    Tokens tok = tokenize(t);
    if (!tok.empty()) out.push_back(std::move(tok));
  }
  return out;
}

// Groups 20 consecutive single-candidate records into sets.
struct RecordAccumulator {
  std::vector<TextSet>* out;
  const std::filesystem::path* path;
  TextSet current;
  int labels = 0;
  std::size_t first_line = 0;

  void add(std::size_t line, int label, std::vector<Tokens> context, std::vector<Tokens> document,
           Tokens response, int planted) {
    if (label != 0 && label != 1) throw DataError(where(*path, line) + "label must be 0 or 1");
    if (context.empty()) throw DataError(where(*path, line) + "empty context");
    if (document.empty()) throw DataError(where(*path, line) + "empty document");
    if (current.candidates.empty()) {
      current.context = std::move(context);
      current.document = std::move(document);
      current.planted = planted;
      first_line = line;
    } else if (context != current.context || document != current.document) {
      throw DataError(where(*path, line) + "record does not share context/document with its candidate set (set starts at line " +
                      std::to_string(first_line) + ")");
    }
    if (label == 1) {
      current.positive = static_cast<int>(current.candidates.size());
      ++labels;
    }
    current.candidates.push_back(std::move(response));
    if (static_cast<int>(current.candidates.size()) == kCandidatesPerSet) {
      if (labels != 1)
        throw DataError(where(*path, line) + "candidate set starting at line " + std::to_string(first_line) +
                        " has " + std::to_string(labels) + " positives, expected 1");
      out->push_back(std::move(current));
      current = TextSet{};
      labels = 0;
    }
  }

  void finish(std::size_t line) const {
    if (!current.candidates.empty())
      throw DataError(where(*path, line) + "trailing candidate set has " + std::to_string(current.candidates.size()) +
                      " candidates, expected " + std::to_string(kCandidatesPerSet));
  }
};

std::vector<TextSet> load_records(const std::filesystem::path& path, std::istream& in) {
  std::vector<TextSet> sets;
  RecordAccumulator acc{&sets, &path, {}, 0, 0};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
      const int label = rec.at("label").get<int>();
      auto context = tokenize_all(rec.at("context").get<std::vector<std::string>>());
      auto document = tokenize_all(rec.at("document").get<std::vector<std::string>>());
      Tokens response = tokenize(rec.at("response").get<std::string>());
      const int planted = rec.value("planted", -1);
      acc.add(lineno, label, std::move(context), std::move(document), std::move(response), planted);
    } catch (const json::exception& e) {
      throw DataError(where(path, lineno) + "malformed record: " + e.what());
    }
  }
  acc.finish(lineno);
  return sets;
}

std::vector<TextSet> load_cmudog(const std::filesystem::path& path, std::istream& in) {
  std::vector<TextSet> sets;
  RecordAccumulator acc{&sets, &path, {}, 0, 0};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 4) throw DataError(where(path, lineno) + "expected 4 tab-separated fields, got " + std::to_string(fields.size()));
    int label = -1;
    if (fields[0] == "0") label = 0;
    if (fields[0] == "1") label = 1;
    if (label < 0) throw DataError(where(path, lineno) + "label must be 0 or 1");
    acc.add(lineno, label, tokenize_all(split_on(fields[1], kUtteranceSeparator)),
            tokenize_all(split_on(fields[2], kSentenceSeparator)), tokenize(fields[3]), -1);
  }
  acc.finish(lineno);
  return sets;
}

// ParlAI text format: "<turn> text" lines; turn 1 opens a dialogue; persona
// lines carry "your persona:"; dialogue lines are
// "<turn> partner\tresponse\t<reward>\tcand|cand|...".
std::vector<TextSet> load_persona(const std::filesystem::path& path, std::istream& in) {
  std::vector<TextSet> sets;
  std::vector<Tokens> persona;
  std::vector<Tokens> history;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t space = line.find(' ');
    if (space == std::string::npos || space == 0)
      throw DataError(where(path, lineno) + "expected '<turn> <text>'");
    int turn = 0;
    try {
      turn = std::stoi(line.substr(0, space));
    } catch (const std::exception&) {
      throw DataError(where(path, lineno) + "turn number is not an integer");
    }
    const std::string body = line.substr(space + 1);
    if (turn == 1) {
      persona.clear();
      history.clear();
    }
    if (body.rfind(kPersonaPrefix, 0) == 0) {
      persona.push_back(tokenize(body.substr(kPersonaPrefix.size())));
      continue;
    }
    if (body.rfind("partner's persona:", 0) == 0) continue;
    const auto fields = split(body, '\t');
    if (fields.size() < 4) throw DataError(where(path, lineno) + "dialogue line needs 4 tab-separated fields");
    const auto candidates = split(fields[3], '|');
    if (static_cast<int>(candidates.size()) != kCandidatesPerSet)
      throw DataError(where(path, lineno) + "expected " + std::to_string(kCandidatesPerSet) + " candidates, got " +
                      std::to_string(candidates.size()));
    if (persona.empty()) throw DataError(where(path, lineno) + "dialogue turn without persona lines");

    history.push_back(tokenize(fields[0]));
    TextSet set;
    set.context = history;
    set.document = persona;
    int positive = -1;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      if (positive < 0 && candidates[c] == fields[1]) positive = static_cast<int>(c);
      set.candidates.push_back(tokenize(candidates[c]));
    }
    if (positive < 0) throw DataError(where(path, lineno) + "true response is not among the candidates");
    set.positive = positive;
    sets.push_back(std::move(set));
    history.push_back(tokenize(fields[1]));
  }
  return sets;
}

}  // namespace

void CorpusConfig::validate() const {
  if (max_turns < 1 || max_sentences < 1 || max_tokens < 1)
    throw ConfigError("corpus bounds n, m and L must all be >= 1");
  if (min_count < 1 || max_vocab < 1) throw ConfigError("vocabulary limits must be >= 1");
}

DatasetFormat parse_format(std::string_view name) {
  if (name == "persona") return DatasetFormat::Persona;
  if (name == "cmudog") return DatasetFormat::CmuDog;
  if (name == "records") return DatasetFormat::Records;
  throw ConfigError("unknown dataset format '" + std::string(name) + "' (expected persona, cmudog or records)");
}

std::string_view format_name(DatasetFormat f) {
  switch (f) {
    case DatasetFormat::Persona: return "persona";
    case DatasetFormat::CmuDog: return "cmudog";
    case DatasetFormat::Records: return "records";
  }
  return "records";
}

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    std::size_t end = cur.size();
    while (end > 0 && is_terminal_punct(cur[end - 1])) --end;
    if (end > 0) out.push_back(cur.substr(0, end));
    for (std::size_t i = end; i < cur.size(); ++i) out.emplace_back(1, cur[i]);
    cur.clear();
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  return out;
}

void truncate(TextSet& set, const CorpusConfig& config) {
  const auto n = static_cast<std::size_t>(config.max_turns);
  const auto m = static_cast<std::size_t>(config.max_sentences);
  const auto L = static_cast<std::size_t>(config.max_tokens);
  if (set.context.size() > n) set.context.erase(set.context.begin(), set.context.end() - static_cast<std::ptrdiff_t>(n));
  if (set.document.size() > m) {
    set.document.resize(m);
    if (set.planted >= static_cast<int>(m)) set.planted = -1;
  }
  auto cut = [L](Tokens& t) {
    if (t.size() > L) t.resize(L);
  };
  for (auto& u : set.context) cut(u);
  for (auto& s : set.document) cut(s);
  for (auto& r : set.candidates) cut(r);
}

std::vector<TextSet> load_dataset(const std::filesystem::path& path, DatasetFormat format, const CorpusConfig& config) {
  config.validate();
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path.string());
  std::vector<TextSet> sets;
  switch (format) {
    case DatasetFormat::Persona: sets = load_persona(path, in); break;
    case DatasetFormat::CmuDog: sets = load_cmudog(path, in); break;
    case DatasetFormat::Records: sets = load_records(path, in); break;
  }
  for (auto& s : sets) truncate(s, config);
  return sets;
}

void write_records(const std::filesystem::path& path, const std::vector<TextSet>& sets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& set : sets) {
    validate_set(set);
    json context = json::array();
    for (const auto& u : set.context) context.push_back(join(u));
    json document = json::array();
    for (const auto& s : set.document) document.push_back(join(s));
    for (std::size_t c = 0; c < set.candidates.size(); ++c) {
      json rec;
      rec["label"] = static_cast<int>(c) == set.positive ? 1 : 0;
      rec["context"] = context;
      rec["document"] = document;
      rec["response"] = join(set.candidates[c]);
      if (set.planted >= 0) rec["planted"] = set.planted;
      out << rec.dump() << '\n';
    }
  }
}

void validate_set(const TextSet& set) {
  if (static_cast<int>(set.candidates.size()) != kCandidatesPerSet)
    throw DataError("candidate set has " + std::to_string(set.candidates.size()) + " candidates, expected 20");
  if (set.positive < 0 || set.positive >= kCandidatesPerSet) throw DataError("positive index out of range");
  if (set.context.empty()) throw DataError("candidate set has an empty context");
  if (set.document.empty()) throw DataError("candidate set has an empty document");
}

void validate_set(const CandidateSet& set) {
  if (static_cast<int>(set.candidates.size()) != kCandidatesPerSet)
    throw DataError("candidate set has " + std::to_string(set.candidates.size()) + " candidates, expected 20");
  if (set.positive < 0 || set.positive >= kCandidatesPerSet) throw DataError("positive index out of range");
}

std::vector<Sample> to_samples(const CandidateSet& set) {
  std::vector<Sample> out;
  out.reserve(set.candidates.size());
  for (std::size_t c = 0; c < set.candidates.size(); ++c)
    out.push_back(Sample{set.context, set.document, set.candidates[c], static_cast<int>(c) == set.positive ? 1 : 0});
  return out;
}

void permute_candidates(CandidateSet& set, const std::vector<int>& order) {
  if (order.size() != set.candidates.size()) throw std::invalid_argument("permutation size differs from candidate count");
  std::vector<Utterance> shuffled(set.candidates.size());
  int positive = -1;
  for (std::size_t to = 0; to < order.size(); ++to) {
    const int from = order[to];
    shuffled[to] = set.candidates[static_cast<std::size_t>(from)];
    if (from == set.positive) positive = static_cast<int>(to);
  }
  set.candidates = std::move(shuffled);
  set.positive = positive;
}

}  // namespace csn
