// SPDX-License-Identifier: Apache-2.0
//
// Token embedding and the shared bidirectional LSTM encoder. Utterances,
// document sentences and responses all go through the same weights.

#ifndef CSN_ENCODER_HPP
#define CSN_ENCODER_HPP

#include "csn/autodiff.hpp"
#include "csn/nn_ops.hpp"
#include "csn/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace csn {

class Vocabulary;

/// Encoder output for one text: L x 2d hidden states (forward half first)
/// and the number of real tokens. Rows >= length are zero.
template <typename T>
struct SequentialRep {
  ad::Var<T> hidden;
  int length = 0;
};

/// Tape bindings of the bidirectional encoder weights.
template <typename T>
struct BiLstmVars {
  ad::LstmWeights<T> forward;
  ad::LstmWeights<T> backward;
};

/// Looks up embeddings for a padded id sequence. In training mode with a
/// positive rate, inverted dropout is applied elementwise (kept entries are
/// scaled by 1/(1-rate)); otherwise the output is deterministic.
template <typename T>
ad::Var<T> embed(ad::Tape<T>& tape, Parameter<T>& table, const std::vector<std::int32_t>& ids, double dropout_rate,
                 bool training, Rng* rng) {
  if (!training || dropout_rate <= 0.0 || rng == nullptr) return ad::embedding_lookup(tape, table, ids);
  const Index rows = static_cast<Index>(ids.size());
  Matrix<T> mask(rows, table.value.cols());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - dropout_rate));
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < mask.cols(); ++c) mask(r, c) = uniform01(*rng) < dropout_rate ? T(0) : keep_scale;
  return ad::embedding_lookup(tape, table, ids, std::move(mask));
}

/// Bidirectional encoding of an embedded L x d_e sequence with `length`
/// real tokens. The backward direction starts at the last real token.
template <typename T>
SequentialRep<T> encode_sequence(const ad::Var<T>& embeddings, int length, const BiLstmVars<T>& w) {
  auto fwd = ad::lstm_sequence(embeddings, w.forward, length, false);
  auto bwd = ad::lstm_sequence(embeddings, w.backward, length, true);
  return SequentialRep<T>{ad::concat_cols(std::vector<ad::Var<T>>{fwd, bwd}), length};
}

/// Number of columns in a whitespace-separated pretrained vector file.
int pretrained_dimension(const std::filesystem::path& path);

/// Fills an embedding table (vocab x d_e, float or double, row-major
/// contiguous data) from pretrained vector files. Every non-padding row is
/// first drawn from uniform(-0.1, 0.1); files then overwrite consecutive
/// column blocks for the tokens they contain, so several files are
/// concatenated per token. The padding row is zero. Returns how many
/// vocabulary tokens were found in each file.
template <typename T>
std::vector<std::size_t> initialize_embeddings(Matrix<T>& table, const Vocabulary& vocab,
                                               const std::vector<std::filesystem::path>& files, Rng& rng);

extern template std::vector<std::size_t> initialize_embeddings<float>(Matrix<float>&, const Vocabulary&,
                                                                      const std::vector<std::filesystem::path>&, Rng&);
extern template std::vector<std::size_t> initialize_embeddings<double>(Matrix<double>&, const Vocabulary&,
                                                                       const std::vector<std::filesystem::path>&, Rng&);

}  // namespace csn

#endif  // CSN_ENCODER_HPP
