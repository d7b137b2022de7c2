// SPDX-License-Identifier: Apache-2.0

#include "csn/synthetic.hpp"

#include "csn/rng.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <string>

namespace csn {

namespace {

std::string topic(int i) { return "t" + std::to_string(i); }
std::string fact(int i) { return "f" + std::to_string(i); }
std::string filler(int i) { return "w" + std::to_string(i); }

void shuffle(Tokens& t, Rng& rng) {
  for (std::size_t i = t.size(); i > 1; --i) std::swap(t[i - 1], t[uniform_index(rng, i)]);
}

// k distinct values from [0, pool).
std::vector<int> draw_distinct(int k, int pool, Rng& rng) {
  std::vector<int> out;
  while (static_cast<int>(out.size()) < k) {
    const int v = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(pool)));
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  }
  return out;
}

struct Sentence {
  int topic_a = 0, topic_b = 0;
  std::vector<int> facts;
};

}  // namespace

std::vector<TextSet> generate_synthetic_corpus(std::uint64_t seed, int sets, const CorpusConfig& config,
                                               const SyntheticOptions& options) {
  config.validate();
  if (sets < 1) throw ConfigError("synthetic corpus needs at least one set");
  const int m = config.max_sentences;
  const int n = config.max_turns;
  if (options.topic_tokens < 2 * m) throw ConfigError("topic pool too small for m distinct topic pairs");
  if (options.facts_per_sentence < options.facts_per_response + 1 || options.fact_tokens < options.facts_per_sentence)
    throw ConfigError("synthetic fact settings are inconsistent");

  Rng rng = make_stream(seed, "synthetic");
  std::vector<TextSet> out(static_cast<std::size_t>(sets));
  std::vector<Tokens> positives(static_cast<std::size_t>(sets));

  for (int s = 0; s < sets; ++s) {
    TextSet& set = out[static_cast<std::size_t>(s)];
    const auto topics = draw_distinct(2 * m, options.topic_tokens, rng);
    std::vector<Sentence> sentences(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) {
      Sentence& sj = sentences[static_cast<std::size_t>(j)];
      sj.topic_a = topics[static_cast<std::size_t>(2 * j)];
      sj.topic_b = topics[static_cast<std::size_t>(2 * j + 1)];
      sj.facts = draw_distinct(options.facts_per_sentence, options.fact_tokens, rng);
      Tokens text{topic(sj.topic_a), topic(sj.topic_b)};
      for (int f : sj.facts) text.push_back(fact(f));
      text.push_back(filler(static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(options.filler_tokens)))));
      shuffle(text, rng);
      set.document.push_back(std::move(text));
    }
    const int planted = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(m)));
    set.planted = planted;
    const Sentence& p = sentences[static_cast<std::size_t>(planted)];

    // Distractors: q shares the most recent turn with the planted sentence,
    // r is what the conversation was about earlier.
    auto other = [&](int avoid1, int avoid2) {
      if (m == 1) return planted;
      int j;
      do {
        j = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(m)));
      } while (j == avoid1 || (j == avoid2 && m > 2));
      return j;
    };
    const int q = other(planted, planted);
    const int r = other(planted, q);
    const Sentence& sq = sentences[static_cast<std::size_t>(q)];
    const Sentence& sr = sentences[static_cast<std::size_t>(r)];
    auto fill = [&] { return filler(static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(options.filler_tokens)))); };

    std::vector<Tokens> turns;
    for (int t = 0; t < n; ++t) {
      Tokens u;
      if (t == n - 1) {
        // Two planted tokens (topic + the fact the response does not use)
        // and two tokens of distractor q.
        u = {topic(p.topic_a), fact(p.facts.back()), fill()};
        if (q != planted) {
          u.push_back(topic(sq.topic_a));
          u.push_back(fact(sq.facts.back()));
        }
      } else if (t == n - 2) {
        u = {topic(p.topic_b), fill(), fill()};
      } else {
        u = {topic(sr.topic_a), topic(sr.topic_b), fill()};
      }
      shuffle(u, rng);
      turns.push_back(std::move(u));
    }
    set.context = std::move(turns);

    Tokens response;
    for (int f = 0; f < options.facts_per_response; ++f) response.push_back(fact(p.facts[static_cast<std::size_t>(f)]));
    response.push_back(fill());
    response.push_back(fill());
    shuffle(response, rng);
    positives[static_cast<std::size_t>(s)] = std::move(response);
  }

  for (int s = 0; s < sets; ++s) {
    TextSet& set = out[static_cast<std::size_t>(s)];
    set.positive = static_cast<int>(uniform_index(rng, kCandidatesPerSet));
    for (int c = 0; c < kCandidatesPerSet; ++c) {
      if (c == set.positive) {
        set.candidates.push_back(positives[static_cast<std::size_t>(s)]);
        continue;
      }
      int other = s;
      if (sets > 1)
        while (other == s) other = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(sets)));
      set.candidates.push_back(positives[static_cast<std::size_t>(other)]);
    }
    truncate(set, config);
  }
  return out;
}

int overlap_score(const TextSet& set, const Tokens& candidate) {
  std::set<std::string> pool;
  if (!set.context.empty()) pool.insert(set.context.back().begin(), set.context.back().end());
  for (const auto& s : set.document) pool.insert(s.begin(), s.end());
  std::set<std::string> seen;
  int shared = 0;
  for (const auto& w : candidate)
    if (pool.count(w) && seen.insert(w).second) ++shared;
  return shared;
}

}  // namespace csn
