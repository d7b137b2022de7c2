// SPDX-License-Identifier: Apache-2.0
//
// The content selection network: shared encoder, context-conditioned
// document selection and dual matching, as one parameter container with a
// forward pass that scores every candidate of a set.

#ifndef CSN_MODEL_HPP
#define CSN_MODEL_HPP

#include "csn/autodiff.hpp"
#include "csn/corpus.hpp"
#include "csn/encoder.hpp"
#include "csn/matching.hpp"
#include "csn/rng.hpp"
#include "csn/selection.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace csn {

struct ModelConfig {
  int max_turns = 4;       // n
  int max_sentences = 4;   // m
  int max_tokens = 16;     // L
  int embed_dim = 16;      // d_e
  int hidden = 8;          // d, per direction
  int aggregator = 8;      // hidden width of the aggregation LSTMs
  double dropout = 0.2;    // embedding dropout in training mode
  bool share_cnn = false;  // one CNN for both matching streams
  CnnGeometry cnn;
  SelectionConfig selection;

  /// Throws ConfigError on dimensions the network cannot run with,
  /// including L < 4.
  void validate() const;
};

template <typename T>
class CsnModel {
 public:
  struct Forward {
    std::vector<ad::Var<T>> logits;  // one 1x1 logit per candidate
    std::vector<UnitTrace> selection;
  };

  CsnModel(const ModelConfig& config, std::size_t vocab_size);

  const ModelConfig& config() const { return config_; }
  /// Selection gamma/eta/fusion may change after training (inspection,
  /// ablations); the level must match the trained parameters' use.
  void set_selection(const SelectionConfig& s);

  std::size_t vocab_size() const { return static_cast<std::size_t>(params_[embedding_].value.rows()); }

  /// Uniform(+-1/sqrt(fan_in)) weights and biases; embeddings uniform(-0.1, 0.1)
  /// with a zero padding row; fusion weights start at 1; output bias starts at
  /// log(1/19).
  void initialize(Rng& rng);

  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  Parameter<T>& parameter(const std::string& name);
  const Parameter<T>& parameter(const std::string& name) const;
  Parameter<T>& embedding() { return params_[embedding_]; }
  std::size_t parameter_count() const;

  void zero_grad();

  /// Records the forward pass for one context/document pair and its
  /// candidates. `dropout_rng` is used only when training.
  Forward forward(ad::Tape<T>& tape, const std::vector<Utterance>& context,
                  const std::vector<DocumentSentence>& document, const std::vector<Utterance>& candidates,
                  bool training, Rng* dropout_rng) const;

  /// Eval-mode matching probabilities g for every candidate.
  std::vector<double> score(const CandidateSet& set) const;
  std::vector<double> score(const std::vector<Utterance>& context, const std::vector<DocumentSentence>& document,
                            const std::vector<Utterance>& candidates) const;
  double score(const Sample& sample) const;

  /// Eval-mode selection outcome per document sentence.
  std::vector<UnitTrace> inspect(const CandidateSet& set) const;

  /// Copy with parameters converted to another scalar type.
  template <typename U>
  CsnModel<U> cast() const {
    CsnModel<U> out(config_, vocab_size());
    for (std::size_t i = 0; i < params_.size(); ++i)
      out.parameters()[i].value = params_[i].value.template cast<U>();
    return out;
  }

 private:
  std::size_t add(const std::string& name, Index rows, Index cols, bool decay = true);

  struct Lstm {
    std::size_t input, recurrent, bias;
  };
  struct Cnn {
    std::size_t conv1_w, conv1_b, conv2_w, conv2_b;
  };

  ad::LstmWeights<T> bind(ad::Tape<T>& tape, const Lstm& l) const;
  CnnVars<T> bind(ad::Tape<T>& tape, const Cnn& c) const;
  ad::Var<T> bind(ad::Tape<T>& tape, std::size_t index) const;

  ModelConfig config_;
  // mutable: tapes hold non-const pointers so backward can write gradients.
  mutable std::vector<Parameter<T>> params_;
  std::size_t embedding_{};
  Lstm enc_fwd_{}, enc_bwd_{};
  std::size_t fusion_{}, w1_{}, b1_{}, v_{};
  std::size_t h1_{}, h2_{}, h3_{};
  Cnn cnn_cr_{}, cnn_dr_{};
  Lstm agg_cr_{}, agg_dr_{};
  std::size_t mlp_hw_{}, mlp_hb_{}, mlp_ow_{}, mlp_ob_{};
};

extern template class CsnModel<float>;
extern template class CsnModel<double>;

}  // namespace csn

#endif  // CSN_MODEL_HPP
