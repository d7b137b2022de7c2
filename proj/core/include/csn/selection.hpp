// SPDX-License-Identifier: Apache-2.0
//
// Context-conditioned content selection over document sentences or words.
//
// Every utterance of the context produces a matching signal against a
// document unit (a cosine for a whole sentence, a max-pooled alignment score
// per word). The signals are fused into one score with learned per-turn
// weights, optionally decayed by eta^(n-i) so recent turns dominate, and a
// hard gate zeroes every unit whose sigmoid score is below gamma. Kept units
// are scaled by their score.
//
// The keep indicator is a constant for backpropagation: gradient reaches the
// score only through kept units.

#ifndef CSN_SELECTION_HPP
#define CSN_SELECTION_HPP

#include "csn/autodiff.hpp"
#include "csn/encoder.hpp"
#include "csn/nn_ops.hpp"

#include <cmath>
#include <limits>
#include <string_view>
#include <vector>

namespace csn {

enum class SelectionLevel { Sentence, Word };
enum class FusionMode { LearnedLinear, DecayedLinear };

struct SelectionConfig {
  SelectionLevel level = SelectionLevel::Word;
  double gamma = 0.3;
  double eta = 0.9;
  FusionMode fusion = FusionMode::DecayedLinear;
  int attention_width = 8;  // h, word level only

  void validate() const;
};

SelectionLevel parse_level(std::string_view name);
std::string_view level_name(SelectionLevel level);
FusionMode parse_fusion(std::string_view name);
std::string_view fusion_name(FusionMode mode);

/// Score threshold equivalent to sigmoid(S) >= gamma, i.e. logit(gamma),
/// with -inf for gamma <= 0 and +inf for gamma >= 1 so both extremes are
/// exact for every finite score.
double gate_threshold(double gamma);

inline bool gate_keeps(double score, double gamma) { return score >= gate_threshold(gamma); }

/// Per-slot multipliers applied to the fusion weights. Slot n-1 is the most
/// recent utterance and always gets factor 1 (0^0 = 1).
std::vector<double> decay_factors(int n, FusionMode mode, double eta);

/// Selection outcome for one document sentence.
struct UnitTrace {
  double score = 0.0;               // fused S (sentence level)
  bool keep = false;
  std::vector<double> word_scores;  // fused S_t (word level)
  std::vector<bool> word_keep;
};

template <typename T>
struct SelectionResult {
  std::vector<ad::Var<T>> gated;     // s'_j, L x 2d each
  std::vector<ad::Var<T>> retained;  // S'_j: 1x1 (sentence) or L x 1 (word)
  std::vector<UnitTrace> trace;
};

/// Tape bindings of the selection parameters.
template <typename T>
struct SelectionVars {
  ad::Var<T> fusion;  // 1 x n
  ad::Var<T> w1;      // 2d x (2d*h)
  ad::Var<T> b1;      // 1 x h
  ad::Var<T> v;       // 1 x h
};

/// A_i = cos(mean(u_i), mean(s)) for every context slot, as an n x 1 column.
/// Means run over real tokens only; empty utterances give 0.
template <typename T>
ad::Var<T> sentence_match_scores(const std::vector<SequentialRep<T>>& context, const SequentialRep<T>& sentence) {
  std::vector<ad::Var<T>> means;
  means.reserve(context.size());
  for (const auto& u : context) means.push_back(ad::masked_mean_rows(u.hidden, u.length));
  auto ctx = ad::concat_rows(means);
  auto sbar = ad::masked_mean_rows(sentence.hidden, sentence.length);
  return ad::cosine_pairs(ctx, sbar);
}

/// Fuses per-utterance signals. `signals` is R x n (column i = utterance
/// slot i); the result is R x 1 = signals * (w .* decay)^T.
template <typename T>
ad::Var<T> fuse(const ad::Var<T>& signals, const ad::Var<T>& weights, FusionMode mode, double eta) {
  const Index n = weights.cols();
  if (signals.cols() != n) throw std::invalid_argument("fuse: signal count differs from fusion weight count");
  if (mode == FusionMode::LearnedLinear) return ad::matmul_nt(signals, weights);
  const auto f = decay_factors(static_cast<int>(n), mode, eta);
  Matrix<T> row(1, n);
  for (Index i = 0; i < n; ++i) row(0, i) = static_cast<T>(f[static_cast<std::size_t>(i)]);
  return ad::matmul_nt(signals, ad::mul_const(weights, row));
}

/// Hard gate on a sentence: S' = S * [sigmoid(S) >= gamma], s' = S' * s.
template <typename T>
ad::Var<T> gate_sentence(const ad::Var<T>& score, double gamma, const SequentialRep<T>& sentence, UnitTrace* trace,
                         ad::Var<T>* retained = nullptr) {
  const double s = static_cast<double>(score.scalar());
  const bool keep = sentence.length > 0 && gate_keeps(s, gamma);
  Matrix<T> k(1, 1);
  k(0, 0) = keep ? T(1) : T(0);
  auto kept = ad::mul_const(score, k);
  if (trace) {
    trace->score = s;
    trace->keep = keep;
  }
  if (retained) *retained = kept;
  return ad::scalar_mul(sentence.hidden, kept);
}

/// Word alignment maps between a sentence and every context slot:
/// B_i[a][b] = v^T tanh(s_a W1 u_b + b1). Returns n maps of Ls x Lc.
template <typename T>
std::vector<ad::Var<T>> word_match_map(const std::vector<SequentialRep<T>>& context, const SequentialRep<T>& sentence,
                                       const SelectionVars<T>& p) {
  std::vector<ad::Var<T>> maps;
  maps.reserve(context.size());
  for (const auto& u : context) maps.push_back(ad::bilinear_tanh_map(sentence.hidden, u.hidden, p.w1, p.b1, p.v));
  return maps;
}

/// Word scores S (Ls x 1): per slot, max over the real context words; then
/// fused across slots. Padding rows and empty utterances contribute 0.
template <typename T>
ad::Var<T> word_scores(const std::vector<ad::Var<T>>& maps, const std::vector<int>& context_lengths,
                       int sentence_length, const ad::Var<T>& weights, FusionMode mode, double eta) {
  std::vector<ad::Var<T>> pooled;
  pooled.reserve(maps.size());
  for (std::size_t i = 0; i < maps.size(); ++i)
    pooled.push_back(ad::masked_row_max(maps[i], sentence_length, context_lengths[i]));
  return fuse(ad::concat_cols(pooled), weights, mode, eta);
}

/// Hard gate per word: S'_t = S_t * [sigmoid(S_t) >= gamma], row t of s'
/// = S'_t * row t of s.
template <typename T>
ad::Var<T> gate_word(const ad::Var<T>& scores, double gamma, const SequentialRep<T>& sentence, UnitTrace* trace,
                     ad::Var<T>* retained = nullptr) {
  const Index L = scores.rows();
  Matrix<T> k = Matrix<T>::Zero(L, 1);
  std::vector<double> ws(static_cast<std::size_t>(L));
  std::vector<bool> wk(static_cast<std::size_t>(L));
  bool any = false;
  for (Index t = 0; t < L; ++t) {
    ws[static_cast<std::size_t>(t)] = static_cast<double>(scores.value()(t, 0));
    const bool keep = t < sentence.length && gate_keeps(ws[static_cast<std::size_t>(t)], gamma);
    wk[static_cast<std::size_t>(t)] = keep;
    k(t, 0) = keep ? T(1) : T(0);
    any = any || keep;
  }
  auto kept = ad::mul_const(scores, k);
  if (trace) {
    trace->word_scores = std::move(ws);
    trace->word_keep = std::move(wk);
    trace->keep = any;
  }
  if (retained) *retained = kept;
  return ad::row_scale(sentence.hidden, kept);
}

/// Runs sentence- or word-level selection over every document slot.
template <typename T>
SelectionResult<T> select_content(const std::vector<SequentialRep<T>>& context,
                                  const std::vector<SequentialRep<T>>& document, const SelectionVars<T>& p,
                                  const SelectionConfig& config) {
  SelectionResult<T> out;
  std::vector<int> lengths;
  for (const auto& u : context) lengths.push_back(u.length);
  for (const auto& s : document) {
    UnitTrace trace;
    ad::Var<T> retained;
    ad::Var<T> gated;
    if (config.level == SelectionLevel::Sentence) {
      auto a = sentence_match_scores(context, s);  // n x 1
      auto score = fuse(ad::reshape(a, 1, a.rows()), p.fusion, config.fusion, config.eta);
      gated = gate_sentence(score, config.gamma, s, &trace, &retained);
    } else {
      auto maps = word_match_map(context, s, p);
      auto scores = word_scores(maps, lengths, s.length, p.fusion, config.fusion, config.eta);
      gated = gate_word(scores, config.gamma, s, &trace, &retained);
    }
    out.gated.push_back(gated);
    out.retained.push_back(retained);
    out.trace.push_back(std::move(trace));
  }
  return out;
}

}  // namespace csn

#endif  // CSN_SELECTION_HPP
