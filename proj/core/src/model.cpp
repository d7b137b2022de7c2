// SPDX-License-Identifier: Apache-2.0

#include "csn/model.hpp"

#include <cmath>
#include <stdexcept>

namespace csn {

void ModelConfig::validate() const {
  if (max_turns < 1 || max_sentences < 1) throw ConfigError("n and m must be >= 1");
  if (max_tokens < 4) throw ConfigError("L must be >= 4 for the two-stage CNN geometry, got " + std::to_string(max_tokens));
  if (embed_dim < 1 || hidden < 1 || aggregator < 1) throw ConfigError("model dimensions must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (cnn.conv1_filters < 1 || cnn.conv2_filters < 1 || cnn.conv1_kernel < 1 || cnn.conv2_kernel < 1 ||
      cnn.pool1_window < 1 || cnn.pool1_stride < 1 || cnn.pool2_window < 1 || cnn.pool2_stride < 1)
    throw ConfigError("CNN geometry entries must be >= 1");
  if (cnn.feature_width(max_tokens) < 1) throw ConfigError("CNN geometry leaves no features");
  selection.validate();
}

template <typename T>
std::size_t CsnModel<T>::add(const std::string& name, Index rows, Index cols, bool decay) {
  params_.emplace_back(name, rows, cols, decay);
  return params_.size() - 1;
}

template <typename T>
CsnModel<T>::CsnModel(const ModelConfig& config, std::size_t vocab_size) : config_(config) {
  config_.validate();
  if (vocab_size < 2) throw ConfigError("vocabulary must contain the two reserved tokens");
  const Index de = config_.embed_dim, d = config_.hidden, D = 2 * d, h = config_.selection.attention_width;
  const Index a = config_.aggregator, n = config_.max_turns;
  const auto& g = config_.cnn;
  const Index feat = g.feature_width(config_.max_tokens);

  params_.reserve(40);
  embedding_ = add("embedding", static_cast<Index>(vocab_size), de, false);
  auto lstm = [&](const std::string& prefix, Index in, Index hid) {
    return Lstm{add(prefix + ".input", in, 4 * hid), add(prefix + ".recurrent", hid, 4 * hid), add(prefix + ".bias", 1, 4 * hid)};
  };
  auto cnn = [&](const std::string& prefix) {
    return Cnn{add(prefix + ".conv1.weight", g.conv1_kernel * g.conv1_kernel * kCubeChannels, g.conv1_filters),
               add(prefix + ".conv1.bias", 1, g.conv1_filters),
               add(prefix + ".conv2.weight", g.conv2_kernel * g.conv2_kernel * g.conv1_filters, g.conv2_filters),
               add(prefix + ".conv2.bias", 1, g.conv2_filters)};
  };
  enc_fwd_ = lstm("encoder.forward", de, d);
  enc_bwd_ = lstm("encoder.backward", de, d);
  fusion_ = add("selection.fusion", 1, n);
  w1_ = add("selection.W1", D, D * h);
  b1_ = add("selection.b1", 1, h);
  v_ = add("selection.v", 1, h);
  h1_ = add("matching.H1", D, D);
  h2_ = add("matching.H2", D, D);
  h3_ = add("matching.H3", D, D);
  if (config_.share_cnn) {
    cnn_cr_ = cnn("matching.cnn");
    cnn_dr_ = cnn_cr_;
  } else {
    cnn_cr_ = cnn("matching.cnn_context");
    cnn_dr_ = cnn("matching.cnn_document");
  }
  agg_cr_ = lstm("aggregation.context", feat, a);
  agg_dr_ = lstm("aggregation.document", feat, a);
  mlp_hw_ = add("mlp.hidden.weight", 2 * a, 2 * a);
  mlp_hb_ = add("mlp.hidden.bias", 1, 2 * a);
  mlp_ow_ = add("mlp.out.weight", 2 * a, 1);
  mlp_ob_ = add("mlp.out.bias", 1, 1);
}

template <typename T>
void CsnModel<T>::set_selection(const SelectionConfig& s) {
  s.validate();
  if (s.attention_width != config_.selection.attention_width)
    throw ConfigError("selection attention width cannot change after construction");
  config_.selection = s;
}

template <typename T>
void CsnModel<T>::initialize(Rng& rng) {
  auto fill = [&](Parameter<T>& p, double bound) {
    for (Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<T>(uniform(rng, -bound, bound));
  };
  // bound = 1/sqrt(fan_in) for every weight and its bias.
  auto fan = [&](std::size_t idx, double fan_in) { fill(params_[idx], 1.0 / std::sqrt(fan_in)); };

  Parameter<T>& emb = params_[embedding_];
  fill(emb, 0.1);
  emb.value.row(0).setZero();

  for (const Lstm* l : {&enc_fwd_, &enc_bwd_, &agg_cr_, &agg_dr_}) {
    const double hid = static_cast<double>(params_[l->recurrent].value.rows());
    fan(l->input, static_cast<double>(params_[l->input].value.rows()));
    fan(l->recurrent, hid);
    fan(l->bias, hid);
  }
  params_[fusion_].value.setOnes();
  const double D = 2.0 * config_.hidden;
  fan(w1_, D);
  fan(b1_, D);
  fan(v_, static_cast<double>(config_.selection.attention_width));
  for (std::size_t hm : {h1_, h2_, h3_}) fan(hm, D);
  const auto& g = config_.cnn;
  for (const Cnn* c : {&cnn_cr_, &cnn_dr_}) {
    const double f1 = g.conv1_kernel * g.conv1_kernel * kCubeChannels;
    const double f2 = g.conv2_kernel * g.conv2_kernel * g.conv1_filters;
    fan(c->conv1_w, f1);
    fan(c->conv1_b, f1);
    fan(c->conv2_w, f2);
    fan(c->conv2_b, f2);
    if (config_.share_cnn) break;
  }
  const double a2 = 2.0 * config_.aggregator;
  fan(mlp_hw_, a2);
  fan(mlp_hb_, a2);
  fan(mlp_ow_, a2);
  fan(mlp_ob_, a2);
  // Start at the class prior of a candidate set.
  params_[mlp_ob_].value(0, 0) = static_cast<T>(std::log(1.0 / (kCandidatesPerSet - 1)));
}

template <typename T>
Parameter<T>& CsnModel<T>::parameter(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw std::out_of_range("no parameter named " + name);
}

template <typename T>
const Parameter<T>& CsnModel<T>::parameter(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw std::out_of_range("no parameter named " + name);
}

template <typename T>
std::size_t CsnModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

template <typename T>
void CsnModel<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
ad::Var<T> CsnModel<T>::bind(ad::Tape<T>& tape, std::size_t index) const {
  return tape.parameter(params_[index]);
}

template <typename T>
ad::LstmWeights<T> CsnModel<T>::bind(ad::Tape<T>& tape, const Lstm& l) const {
  return {bind(tape, l.input), bind(tape, l.recurrent), bind(tape, l.bias)};
}

template <typename T>
CnnVars<T> CsnModel<T>::bind(ad::Tape<T>& tape, const Cnn& c) const {
  return {bind(tape, c.conv1_w), bind(tape, c.conv1_b), bind(tape, c.conv2_w), bind(tape, c.conv2_b)};
}

template <typename T>
typename CsnModel<T>::Forward CsnModel<T>::forward(ad::Tape<T>& tape, const std::vector<Utterance>& context,
                                                   const std::vector<DocumentSentence>& document,
                                                   const std::vector<Utterance>& candidates, bool training,
                                                   Rng* dropout_rng) const {
  const int L = config_.max_tokens;
  if (static_cast<int>(context.size()) != config_.max_turns)
    throw std::invalid_argument("forward: context must have exactly n slots");
  if (static_cast<int>(document.size()) != config_.max_sentences)
    throw std::invalid_argument("forward: document must have exactly m slots");
  auto check = [L](const TokenSequence& s) {
    if (static_cast<int>(s.ids.size()) != L || s.length < 0 || s.length > L)
      throw std::invalid_argument("forward: token sequence does not have L padded ids");
  };

  const BiLstmVars<T> encoder{bind(tape, enc_fwd_), bind(tape, enc_bwd_)};
  Parameter<T>& table = params_[embedding_];
  auto encode = [&](const TokenSequence& s) {
    check(s);
    auto e = embed(tape, table, s.ids, config_.dropout, training, dropout_rng);
    return encode_sequence(e, s.length, encoder);
  };

  std::vector<SequentialRep<T>> ctx, doc;
  for (const auto& u : context) ctx.push_back(encode(u));
  for (const auto& s : document) doc.push_back(encode(s));

  SelectionVars<T> sel{bind(tape, fusion_), {}, {}, {}};
  if (config_.selection.level == SelectionLevel::Word) {
    sel.w1 = bind(tape, w1_);
    sel.b1 = bind(tape, b1_);
    sel.v = bind(tape, v_);
  }
  SelectionResult<T> selected = select_content(ctx, doc, sel, config_.selection);

  std::vector<ad::Var<T>> creps;
  std::vector<int> clens, dlens;
  for (const auto& u : ctx) {
    creps.push_back(u.hidden);
    clens.push_back(u.length);
  }
  for (const auto& s : doc) dlens.push_back(s.length);
  const auto ctx_views = self_attend(creps, clens);
  const auto doc_views = self_attend(selected.gated, dlens);

  const auto H1 = bind(tape, h1_), H2 = bind(tape, h2_), H3 = bind(tape, h3_);
  const CnnVars<T> cnn_cr = bind(tape, cnn_cr_);
  const CnnVars<T> cnn_dr = config_.share_cnn ? cnn_cr : bind(tape, cnn_dr_);
  const auto agg_cr = bind(tape, agg_cr_), agg_dr = bind(tape, agg_dr_);
  const MlpVars<T> mlp{bind(tape, mlp_hw_), bind(tape, mlp_hb_), bind(tape, mlp_ow_), bind(tape, mlp_ob_)};

  Forward out;
  out.selection = std::move(selected.trace);
  if (candidates.empty()) return out;

  // All cubes of all candidates go through each CNN as one batch.
  const Index n = static_cast<Index>(ctx.size()), m = static_cast<Index>(doc.size());
  const Index count = static_cast<Index>(candidates.size());
  std::vector<ad::Var<T>> ccubes, dcubes;
  for (const auto& cand : candidates) {
    const auto r = encode(cand);
    const auto rv = self_attend<T>({r.hidden}, {r.length}).front();
    auto cubes = build_cubes(ctx_views, doc_views, rv, H1, H2, H3);
    for (auto& c : cubes.context) ccubes.push_back(c);
    for (auto& c : cubes.document) dcubes.push_back(c);
  }
  const auto vcr = cnn_extract(ad::concat_rows(ccubes), L, config_.cnn, cnn_cr, count * n);
  const auto vdr = cnn_extract(ad::concat_rows(dcubes), L, config_.cnn, cnn_dr, count * m);
  for (Index c = 0; c < count; ++c)
    out.logits.push_back(
        aggregate_and_score(ad::slice_rows(vcr, c * n, n), ad::slice_rows(vdr, c * m, m), agg_cr, agg_dr, mlp));
  return out;
}

template <typename T>
std::vector<double> CsnModel<T>::score(const std::vector<Utterance>& context,
                                       const std::vector<DocumentSentence>& document,
                                       const std::vector<Utterance>& candidates) const {
  ad::Tape<T> tape(false);
  const auto fwd = forward(tape, context, document, candidates, false, nullptr);
  std::vector<double> g;
  g.reserve(fwd.logits.size());
  for (const auto& z : fwd.logits) g.push_back(sigmoid(static_cast<double>(z.scalar())));
  return g;
}

template <typename T>
std::vector<double> CsnModel<T>::score(const CandidateSet& set) const {
  return score(set.context, set.document, set.candidates);
}

template <typename T>
double CsnModel<T>::score(const Sample& sample) const {
  return score(sample.context, sample.document, std::vector<Utterance>{sample.response}).front();
}

template <typename T>
std::vector<UnitTrace> CsnModel<T>::inspect(const CandidateSet& set) const {
  ad::Tape<T> tape(false);
  return forward(tape, set.context, set.document, {}, false, nullptr).selection;
}

template class CsnModel<float>;
template class CsnModel<double>;

}  // namespace csn
