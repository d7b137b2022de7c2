// SPDX-License-Identifier: Apache-2.0

#include "csn/training.hpp"

#include "csn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace csn {

Precision parse_precision(std::string_view name) {
  if (name == "float32" || name == "float") return Precision::Float32;
  if (name == "float64" || name == "double") return Precision::Float64;
  throw ConfigError("unknown precision '" + std::string(name) + "' (expected float32 or float64)");
}

std::string_view precision_name(Precision p) { return p == Precision::Float32 ? "float32" : "float64"; }

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr decay must lie in (0, 1]");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (max_epochs < 1) throw ConfigError("max epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (negatives < 1 || negatives > kCandidatesPerSet - 1)
    throw ConfigError("negatives per set must lie in [1, " + std::to_string(kCandidatesPerSet - 1) + "]");
}

double EvalReport::recall(int k) const {
  if (ranks.empty()) return 0.0;
  const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](int r) { return r <= k; });
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

int rank_of_positive(const std::vector<double>& scores, int positive) {
  if (positive < 0 || positive >= static_cast<int>(scores.size())) throw DataError("positive index out of range");
  const double p = scores[static_cast<std::size_t>(positive)];
  int rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (static_cast<int>(i) != positive && !(scores[i] < p)) ++rank;
  return rank;
}

EvalReport evaluate(const std::vector<CandidateSet>& sets, const Scorer& scorer) {
  EvalReport report;
  report.sets = sets.size();
  report.ranks.reserve(sets.size());
  for (const auto& s : sets) {
    validate_set(s);
    const auto scores = scorer(s);
    if (scores.size() != s.candidates.size()) throw DataError("scorer returned the wrong number of scores");
    report.ranks.push_back(rank_of_positive(scores, s.positive));
  }
  report.r1 = report.recall(1);
  report.r2 = report.recall(2);
  report.r5 = report.recall(5);
  return report;
}

template <typename T>
AdamW<T>::AdamW(std::vector<Parameter<T>>& params, const TrainConfig& config)
    : beta1_(config.beta1), beta2_(config.beta2), eps_(config.epsilon), decay_(config.weight_decay) {
  for (const auto& p : params) {
    m_.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
  }
}

template <typename T>
void AdamW<T>::step(std::vector<Parameter<T>>& params, double learning_rate) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
  const T lr = static_cast<T>(learning_rate), eps = static_cast<T>(eps_);
  const T sc1 = static_cast<T>(1.0 / c1), sc2 = static_cast<T>(1.0 / c2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = params[i];
    if (p.weight_decay && decay_ > 0.0) p.value *= static_cast<T>(1.0 - learning_rate * decay_);
    m_[i] = b1 * m_[i] + (T(1) - b1) * p.grad;
    v_[i] = b2 * v_[i] + (T(1) - b2) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (m_[i].array() * sc1) / ((v_[i].array() * sc2).sqrt() + eps);
  }
}

namespace {

template <typename T>
std::string first_non_finite(const std::vector<Parameter<T>>& params) {
  for (const auto& p : params)
    if (!p.value.allFinite()) return p.name + " (value)";
  for (const auto& p : params)
    if (!p.grad.allFinite()) return p.name + " (gradient)";
  return "none";
}

template <typename T>
void check_finite(const std::vector<Parameter<T>>& params, double loss, int epoch, long step) {
  bool ok = std::isfinite(loss);
  for (const auto& p : params) ok = ok && p.value.allFinite();
  if (ok) return;
  std::ostringstream msg;
  msg << "non-finite training state at epoch " << epoch << ", update " << step << " (loss " << loss
      << "); first non-finite parameter: " << first_non_finite(params);
  throw NumericalError(msg.str());
}

// Positive plus `negatives` negatives drawn without replacement.
std::vector<int> sample_candidates(const CandidateSet& set, int negatives, Rng& rng) {
  std::vector<int> pool;
  for (int i = 0; i < static_cast<int>(set.candidates.size()); ++i)
    if (i != set.positive) pool.push_back(i);
  const int k = std::min<int>(negatives, static_cast<int>(pool.size()));
  for (int i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(i) + uniform_index(rng, pool.size() - static_cast<std::size_t>(i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
  }
  std::vector<int> out{set.positive};
  out.insert(out.end(), pool.begin(), pool.begin() + k);
  return out;
}

}  // namespace

template <typename T>
TrainHistory train(CsnModel<T>& model, const std::vector<CandidateSet>& train_sets,
                   const std::vector<CandidateSet>& valid_sets, const TrainConfig& config,
                   const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  if (train_sets.empty()) throw DataError("training split is empty");
  if (valid_sets.empty()) throw DataError("validation split is empty");
  for (const auto& s : train_sets) validate_set(s);

  Rng data_rng = make_stream(config.seed, "data");
  Rng dropout_rng = make_stream(config.seed, "dropout");
  auto& params = model.parameters();
  AdamW<T> optimizer(params, config);

  TrainHistory history;
  std::vector<Matrix<T>> best;
  double lr = config.learning_rate;
  int bad = 0;
  std::vector<std::size_t> order(train_sets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(data_rng, i)]);
    EpochRecord record;
    record.epoch = epoch;
    record.learning_rate = lr;
    model.zero_grad();
    int in_batch = 0;
    double batch_loss_sum = 0.0;
    auto flush = [&] {
      check_finite(params, batch_loss_sum, epoch, optimizer.steps() + 1);
      optimizer.step(params, lr);
      check_finite(params, batch_loss_sum, epoch, optimizer.steps());
      model.zero_grad();
      in_batch = 0;
      batch_loss_sum = 0.0;
    };
    for (std::size_t idx : order) {
      const CandidateSet& set = train_sets[idx];
      const auto chosen = sample_candidates(set, config.negatives, data_rng);
      std::vector<Utterance> cands;
      for (int c : chosen) cands.push_back(set.candidates[static_cast<std::size_t>(c)]);
      ad::Tape<T> tape;
      const auto fwd = model.forward(tape, set.context, set.document, cands, true, &dropout_rng);
      // Sampled negatives stand in for all of them: weight n_neg / sampled.
      const T neg_weight = static_cast<T>(set.candidates.size() - 1) / static_cast<T>(chosen.size() - 1);
      std::vector<ad::Var<T>> losses;
      for (std::size_t c = 0; c < chosen.size(); ++c) {
        const bool positive = chosen[c] == set.positive;
        auto l = ad::bce_with_logit(fwd.logits[c], positive ? T(1) : T(0));
        losses.push_back(positive || neg_weight == T(1) ? l : ad::scale(l, neg_weight));
      }
      const auto total = ad::sum(ad::concat_rows(losses));
      const double value = static_cast<double>(total.scalar());
      tape.backward(total);
      batch_loss_sum += value;
      record.loss += value;
      in_batch += static_cast<int>(chosen.size());
      if (!std::isfinite(value)) check_finite(params, value, epoch, optimizer.steps() + 1);
      if (in_batch >= config.batch_size) flush();
    }
    if (in_batch > 0) flush();

    record.valid_r1 = evaluate(model, valid_sets).r1;
    record.improved = record.valid_r1 > history.best_valid_r1;
    if (record.improved) {
      history.best_valid_r1 = record.valid_r1;
      history.best_epoch = epoch;
      best.clear();
      for (const auto& p : params) best.push_back(p.value);
      bad = 0;
    } else {
      lr *= config.lr_decay;
      ++bad;
    }
    history.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
    if (bad >= config.patience) break;
    if (config.stop_at_perfect && record.valid_r1 >= 1.0) break;
  }
  for (std::size_t i = 0; i < best.size(); ++i) params[i].value = best[i];
  return history;
}

SweepParameter parse_sweep_parameter(std::string_view name) {
  if (name == "gamma") return SweepParameter::Gamma;
  if (name == "eta") return SweepParameter::Eta;
  throw ConfigError("unknown sweep parameter '" + std::string(name) + "' (expected gamma or eta)");
}

std::string_view sweep_parameter_name(SweepParameter p) { return p == SweepParameter::Gamma ? "gamma" : "eta"; }

template <typename T>
std::vector<SweepPoint> sweep(const ModelFactory<T>& factory, const ModelConfig& base, SweepParameter parameter,
                              const std::vector<double>& grid, const std::vector<CandidateSet>& train_sets,
                              const std::vector<CandidateSet>& valid_sets, const std::vector<CandidateSet>& test_sets,
                              const TrainConfig& config) {
  if (grid.empty()) throw ConfigError("sweep grid is empty");
  std::vector<SweepPoint> out;
  for (double value : grid) {
    ModelConfig cfg = base;
    if (parameter == SweepParameter::Gamma)
      cfg.selection.gamma = value;
    else
      cfg.selection.eta = value;
    cfg.validate();
    CsnModel<T> model = factory(cfg);
    SweepPoint point;
    point.value = value;
    point.history = train(model, train_sets, valid_sets, config);
    point.report = evaluate(model, test_sets);
    out.push_back(std::move(point));
  }
  return out;
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

double set_loss(const CsnModel<double>& model, const CandidateSet& set) {
  ad::Tape<double> tape(false);
  const auto fwd = model.forward(tape, set.context, set.document, set.candidates, false, nullptr);
  double total = 0.0;
  for (std::size_t c = 0; c < fwd.logits.size(); ++c) {
    const double label = static_cast<int>(c) == set.positive ? 1.0 : 0.0;
    total += ad::bce_with_logit(fwd.logits[c], label).scalar();
  }
  return total;
}

namespace {

double gate_margin(const CsnModel<double>& model, const CandidateSet& set) {
  const double thr = gate_threshold(model.config().selection.gamma);
  double margin = std::numeric_limits<double>::infinity();
  if (!std::isfinite(thr)) return margin;
  const auto trace = model.inspect(set);
  const bool word = model.config().selection.level == SelectionLevel::Word;
  for (std::size_t j = 0; j < trace.size(); ++j) {
    const int len = set.document[j].length;
    if (len == 0) continue;
    if (word) {
      for (int t = 0; t < len && t < static_cast<int>(trace[j].word_scores.size()); ++t)
        margin = std::min(margin, std::abs(trace[j].word_scores[static_cast<std::size_t>(t)] - thr));
    } else {
      margin = std::min(margin, std::abs(trace[j].score - thr));
    }
  }
  return margin;
}

}  // namespace

GradientReport gradient_check(CsnModel<double>& model, const CandidateSet& set, const GradientCheckOptions& options) {
  GradientReport report;
  report.tolerance = options.tolerance;
  report.gate_margin = gate_margin(model, set);

  model.zero_grad();
  {
    ad::Tape<double> tape;
    const auto fwd = model.forward(tape, set.context, set.document, set.candidates, false, nullptr);
    std::vector<ad::Var<double>> losses;
    for (std::size_t c = 0; c < fwd.logits.size(); ++c)
      losses.push_back(ad::bce_with_logit(fwd.logits[c], static_cast<int>(c) == set.positive ? 1.0 : 0.0));
    tape.backward(ad::sum(ad::concat_rows(losses)));
  }

  // Embedding rows the input touches; others have exactly zero gradient.
  std::vector<int> used;
  auto collect = [&used](const std::vector<TokenSequence>& seqs) {
    for (const auto& s : seqs)
      for (int i = 0; i < s.length; ++i)
        if (s.ids[static_cast<std::size_t>(i)] != 0) used.push_back(s.ids[static_cast<std::size_t>(i)]);
  };
  collect(set.context);
  collect(set.document);
  collect(set.candidates);
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());

  Rng rng = make_stream(options.seed, "gradcheck");
  const double h = options.step;
  for (auto& p : model.parameters()) {
    std::vector<Index> entries;
    if (&p == &model.embedding()) {
      for (int row : used)
        for (Index c = 0; c < p.value.cols(); ++c) entries.push_back(static_cast<Index>(row) * p.value.cols() + c);
    } else {
      entries.resize(static_cast<std::size_t>(p.value.size()));
      std::iota(entries.begin(), entries.end(), Index{0});
    }
    if (options.max_entries > 0 && entries.size() > options.max_entries) {
      for (std::size_t i = 0; i < options.max_entries; ++i)
        std::swap(entries[i], entries[i + uniform_index(rng, entries.size() - i)]);
      entries.resize(options.max_entries);
    }
    GradientGroup group;
    group.name = p.name;
    for (Index e : entries) {
      double& x = p.value.data()[e];
      const double saved = x;
      x = saved + h;
      const double up = set_loss(model, set);
      x = saved - h;
      const double down = set_loss(model, set);
      x = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p.grad.data()[e];
      group.max_rel_error = std::max(group.max_rel_error, relative_error(analytic, numeric, options.floor));
      group.max_abs_error = std::max(group.max_abs_error, std::abs(analytic - numeric));
      group.max_abs_gradient = std::max(group.max_abs_gradient, std::abs(analytic));
      ++group.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, group.max_rel_error);
    if (group.max_rel_error > options.tolerance) report.offending.push_back(group.name);
    report.groups.push_back(std::move(group));
  }
  report.passed = report.offending.empty();
  return report;
}

template class AdamW<float>;
template class AdamW<double>;

template TrainHistory train<float>(CsnModel<float>&, const std::vector<CandidateSet>&,
                                   const std::vector<CandidateSet>&, const TrainConfig&,
                                   const std::function<void(const EpochRecord&)>&);
template TrainHistory train<double>(CsnModel<double>&, const std::vector<CandidateSet>&,
                                    const std::vector<CandidateSet>&, const TrainConfig&,
                                    const std::function<void(const EpochRecord&)>&);
template std::vector<SweepPoint> sweep<float>(const ModelFactory<float>&, const ModelConfig&, SweepParameter,
                                              const std::vector<double>&, const std::vector<CandidateSet>&,
                                              const std::vector<CandidateSet>&, const std::vector<CandidateSet>&,
                                              const TrainConfig&);
template std::vector<SweepPoint> sweep<double>(const ModelFactory<double>&, const ModelConfig&, SweepParameter,
                                               const std::vector<double>&, const std::vector<CandidateSet>&,
                                               const std::vector<CandidateSet>&, const std::vector<CandidateSet>&,
                                               const TrainConfig&);

}  // namespace csn
