// SPDX-License-Identifier: Apache-2.0
//
// Dual matching of a response against the context and the selected document.
//
// Each text unit (utterance or gated sentence) is compared with the response
// through three pairs of representations: the encoder states, their
// self-attended versions and the cross-attended pair. Each comparison yields
// a bilinear and a cosine L x L map; the six maps form a matching cube that a
// two-layer CNN turns into a feature vector. An LSTM per stream aggregates
// the feature vectors in unit order and an MLP on both final states gives the
// matching logit.

#ifndef CSN_MATCHING_HPP
#define CSN_MATCHING_HPP

#include "csn/autodiff.hpp"
#include "csn/encoder.hpp"
#include "csn/nn_ops.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace csn {

inline constexpr int kCubeChannels = 6;

/// Convolution/pooling geometry of the feature extractor.
struct CnnGeometry {
  int conv1_filters = 32;
  int conv1_kernel = 3;
  int pool1_window = 3;
  int pool1_stride = 3;
  int conv2_filters = 64;
  int conv2_kernel = 2;
  int pool2_window = 2;
  int pool2_stride = 2;

  /// Flattened feature width for an L x L cube.
  Index feature_width(int L) const {
    const Index h = ad::same_extent(ad::same_extent(L, pool1_stride), pool2_stride);
    return h * h * conv2_filters;
  }
};

template <typename T>
struct CnnVars {
  ad::Var<T> conv1_w, conv1_b, conv2_w, conv2_b;
};

template <typename T>
struct MlpVars {
  ad::Var<T> hidden_w, hidden_b, out_w, out_b;
};

/// Scaled dot-product attention: softmax(Q K^T / sqrt(width)) V over the
/// first `key_length` keys. Query rows >= query_length, and everything when
/// no key is real, come out zero.
template <typename T>
ad::Var<T> attentive(const ad::Var<T>& query, const ad::Var<T>& key, const ad::Var<T>& value, int query_length,
                     int key_length) {
  if (key.rows() != value.rows()) throw std::invalid_argument("attentive: key and value lengths differ");
  const T scale = T(1) / std::sqrt(static_cast<T>(query.cols()));
  auto logits = ad::scale(ad::matmul_nt(query, key), scale);
  auto weights = ad::masked_softmax_rows(logits, key_length);
  return ad::mask_rows(ad::matmul(weights, value), query_length);
}

/// Bilinear (x H y^T) and cosine maps between the rows of x and y.
template <typename T>
std::pair<ad::Var<T>, ad::Var<T>> similarity_pair(const ad::Var<T>& x, const ad::Var<T>& y, const ad::Var<T>& H) {
  auto bilinear = ad::matmul_nt(ad::matmul(x, H), y);
  auto cosine = ad::cosine_pairs(x, y);
  return {bilinear, cosine};
}

/// Representations of a unit for cube construction.
template <typename T>
struct UnitViews {
  ad::Var<T> sequential;
  ad::Var<T> self_attended;
  int length = 0;
};

/// Self-attends every unit once; reused for all candidates of a set.
template <typename T>
std::vector<UnitViews<T>> self_attend(const std::vector<ad::Var<T>>& reps, const std::vector<int>& lengths) {
  std::vector<UnitViews<T>> out;
  out.reserve(reps.size());
  for (std::size_t i = 0; i < reps.size(); ++i)
    out.push_back(UnitViews<T>{reps[i], attentive(reps[i], reps[i], reps[i], lengths[i], lengths[i]), lengths[i]});
  return out;
}

/// One matching cube as an (L*L) x 6 matrix: row a*L + b, channels
/// (M1 bilinear, M1 cosine, M2 bilinear, M2 cosine, M3 bilinear, M3 cosine).
template <typename T>
ad::Var<T> matching_cube(const UnitViews<T>& unit, const UnitViews<T>& response, const ad::Var<T>& H1,
                         const ad::Var<T>& H2, const ad::Var<T>& H3) {
  const Index L = unit.sequential.rows();
  if (response.sequential.rows() != L) throw std::invalid_argument("matching cube: unit and response lengths differ");
  auto cross_unit = attentive(unit.sequential, response.sequential, response.sequential, unit.length, response.length);
  auto cross_resp = attentive(response.sequential, unit.sequential, unit.sequential, response.length, unit.length);
  auto [m1b, m1c] = similarity_pair(unit.sequential, response.sequential, H1);
  auto [m2b, m2c] = similarity_pair(unit.self_attended, response.self_attended, H2);
  auto [m3b, m3c] = similarity_pair(cross_unit, cross_resp, H3);
  std::vector<ad::Var<T>> channels;
  for (const auto& c : {m1b, m1c, m2b, m2c, m3b, m3c}) channels.push_back(ad::reshape(c, L * L, 1));
  return ad::concat_cols(channels);
}

template <typename T>
struct MatchingCubes {
  std::vector<ad::Var<T>> context;   // n cubes
  std::vector<ad::Var<T>> document;  // m cubes
};

/// Cubes of a response against every context utterance and every gated
/// document sentence.
template <typename T>
MatchingCubes<T> build_cubes(const std::vector<UnitViews<T>>& context, const std::vector<UnitViews<T>>& document,
                             const UnitViews<T>& response, const ad::Var<T>& H1, const ad::Var<T>& H2,
                             const ad::Var<T>& H3) {
  MatchingCubes<T> out;
  for (const auto& u : context) out.context.push_back(matching_cube(u, response, H1, H2, H3));
  for (const auto& s : document) out.document.push_back(matching_cube(s, response, H1, H2, H3));
  return out;
}

/// Convenience overload that performs the self-attention itself.
template <typename T>
MatchingCubes<T> build_cubes(const std::vector<SequentialRep<T>>& context, const std::vector<ad::Var<T>>& gated_document,
                             const std::vector<int>& document_lengths, const SequentialRep<T>& response,
                             const ad::Var<T>& H1, const ad::Var<T>& H2, const ad::Var<T>& H3) {
  std::vector<ad::Var<T>> creps;
  std::vector<int> clens;
  for (const auto& u : context) {
    creps.push_back(u.hidden);
    clens.push_back(u.length);
  }
  auto r = self_attend<T>({response.hidden}, {response.length});
  return build_cubes(self_attend(creps, clens), self_attend(gated_document, document_lengths), r.front(), H1, H2, H3);
}

/// conv(3x3) -> relu -> maxpool -> conv(2x2) -> relu -> maxpool -> flatten,
/// for `batch` L x L cubes stacked along the rows. Returns batch x width.
template <typename T>
ad::Var<T> cnn_extract(const ad::Var<T>& cubes, int L, const CnnGeometry& g, const CnnVars<T>& p, Index batch = 1) {
  ad::MapShape shape{L, L};
  auto x = ad::relu(ad::conv2d_same(cubes, shape, p.conv1_w, p.conv1_b, g.conv1_kernel, batch));
  ad::MapShape pooled;
  x = ad::max_pool_same(x, shape, g.pool1_window, g.pool1_stride, &pooled, batch);
  x = ad::relu(ad::conv2d_same(x, pooled, p.conv2_w, p.conv2_b, g.conv2_kernel, batch));
  x = ad::max_pool_same(x, pooled, g.pool2_window, g.pool2_stride, &shape, batch);
  return ad::reshape(x, batch, x.value().size() / batch);
}

/// Final LSTM state over the rows of a feature sequence.
template <typename T>
ad::Var<T> aggregate(const ad::Var<T>& sequence, const ad::LstmWeights<T>& w) {
  auto states = ad::lstm_sequence(sequence, w, sequence.rows(), false);
  return ad::slice_rows(states, sequence.rows() - 1, 1);
}

template <typename T>
ad::Var<T> aggregate(const std::vector<ad::Var<T>>& features, const ad::LstmWeights<T>& w) {
  return aggregate(ad::concat_rows(features), w);
}

/// Matching logit: MLP(h1 ++ h2) with one tanh hidden layer. The matching
/// probability is sigmoid of this value. Feature sequences hold one row per
/// context utterance / document sentence.
template <typename T>
ad::Var<T> aggregate_and_score(const ad::Var<T>& context_features, const ad::Var<T>& document_features,
                               const ad::LstmWeights<T>& context_agg, const ad::LstmWeights<T>& document_agg,
                               const MlpVars<T>& mlp) {
  auto h1 = aggregate(context_features, context_agg);
  auto h2 = aggregate(document_features, document_agg);
  auto joined = ad::concat_cols(std::vector<ad::Var<T>>{h1, h2});
  auto hidden = ad::tanh(ad::add_row(ad::matmul(joined, mlp.hidden_w), mlp.hidden_b));
  return ad::add_row(ad::matmul(hidden, mlp.out_w), mlp.out_b);
}

template <typename T>
ad::Var<T> aggregate_and_score(const std::vector<ad::Var<T>>& context_features,
                               const std::vector<ad::Var<T>>& document_features, const ad::LstmWeights<T>& context_agg,
                               const ad::LstmWeights<T>& document_agg, const MlpVars<T>& mlp) {
  return aggregate_and_score(ad::concat_rows(context_features), ad::concat_rows(document_features), context_agg,
                             document_agg, mlp);
}

inline constexpr double kProbabilityEpsilon = 1e-7;

/// Cross-entropy of a matching probability, with g clamped to
/// [eps, 1 - eps].
inline double loss(double g, int label) {
  const double p = std::clamp(g, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
  return -(label * std::log(p) + (1 - label) * std::log(1.0 - p));
}

/// Summed cross-entropy over a batch.
inline double batch_loss(const std::vector<double>& g, const std::vector<int>& labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) total += loss(g[i], labels[i]);
  return total;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace csn

#endif  // CSN_MATCHING_HPP
