// SPDX-License-Identifier: Apache-2.0
//
// Optimisation, recall@k evaluation, gamma/eta sweeps and the finite
// difference gradient check.

#ifndef CSN_TRAINING_HPP
#define CSN_TRAINING_HPP

#include "csn/corpus.hpp"
#include "csn/model.hpp"

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace csn {

/// Non-finite loss or parameters during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Precision { Float32, Float64 };

Precision parse_precision(std::string_view name);
std::string_view precision_name(Precision p);

struct TrainConfig {
  int batch_size = 100;        // samples per update
  double learning_rate = 1e-3;
  double lr_decay = 0.5;       // applied when validation R@1 does not improve
  double weight_decay = 0.01;  // decoupled; embeddings excluded
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int max_epochs = 10;
  int patience = 2;            // non-improving evaluations before stopping
  int negatives = 19;          // sampled negatives per set and epoch, loss-weighted to stand for all
  std::uint64_t seed = 1;
  Precision precision = Precision::Float32;
  bool stop_at_perfect = false;  // stop once validation R@1 reaches 1

  void validate() const;
};

struct EvalReport {
  double r1 = 0.0, r2 = 0.0, r5 = 0.0;
  std::vector<int> ranks;  // 1-based rank of the positive per set
  std::size_t sets = 0;

  double recall(int k) const;
};

using Scorer = std::function<std::vector<double>(const CandidateSet&)>;

/// 1-based rank of the positive; tied negatives rank ahead of it.
int rank_of_positive(const std::vector<double>& scores, int positive);

/// R@{1,2,5} over candidate sets. Throws DataError on malformed sets.
EvalReport evaluate(const std::vector<CandidateSet>& sets, const Scorer& scorer);

template <typename T>
EvalReport evaluate(const CsnModel<T>& model, const std::vector<CandidateSet>& sets) {
  return evaluate(sets, [&model](const CandidateSet& s) { return model.score(s); });
}

/// AdamW with decoupled weight decay for parameters flagged weight_decay.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Parameter<T>>& params, const TrainConfig& config);
  void step(std::vector<Parameter<T>>& params, double learning_rate);
  long steps() const { return t_; }

 private:
  std::vector<Matrix<T>> m_, v_;
  double beta1_, beta2_, eps_, decay_;
  long t_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;           // summed training loss
  double learning_rate = 0.0;  // rate used during the epoch
  double valid_r1 = 0.0;
  bool improved = false;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_valid_r1 = -1.0;
};

/// Mini-batch training on the summed cross-entropy. After every epoch the
/// validation R@1 is measured; a non-improving epoch halves (lr_decay) the
/// rate of the next one and counts against patience. The best-validation
/// parameters are restored at the end.
template <typename T>
TrainHistory train(CsnModel<T>& model, const std::vector<CandidateSet>& train_sets,
                   const std::vector<CandidateSet>& valid_sets, const TrainConfig& config,
                   const std::function<void(const EpochRecord&)>& on_epoch = {});

enum class SweepParameter { Gamma, Eta };
SweepParameter parse_sweep_parameter(std::string_view name);
std::string_view sweep_parameter_name(SweepParameter p);

struct SweepPoint {
  double value = 0.0;
  EvalReport report;
  TrainHistory history;
};

/// Builds a freshly initialised model for a configuration.
template <typename T>
using ModelFactory = std::function<CsnModel<T>(const ModelConfig&)>;

/// One independent training run per grid value (same seed for all),
/// evaluated on `test_sets`.
template <typename T>
std::vector<SweepPoint> sweep(const ModelFactory<T>& factory, const ModelConfig& base, SweepParameter parameter,
                              const std::vector<double>& grid, const std::vector<CandidateSet>& train_sets,
                              const std::vector<CandidateSet>& valid_sets, const std::vector<CandidateSet>& test_sets,
                              const TrainConfig& config);

struct GradientGroup {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  double max_abs_gradient = 0.0;
};

struct GradientReport {
  std::vector<GradientGroup> groups;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  double gate_margin = 0.0;  // smallest |S - logit(gamma)| over real units
  bool passed = false;
  std::vector<std::string> offending;
};

struct GradientCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  std::size_t max_entries = 0;  // per parameter group; 0 checks every entry
  double floor = 1e-6;          // denominator floor of the relative error
  std::uint64_t seed = 1;       // entry subsampling
};

/// Relative error |a - b| / max(|a|, |b|, floor).
double relative_error(double analytic, double numeric, double floor);

/// Summed eval-mode loss of the candidates of `set` (labels from its
/// positive index; -1 marks every candidate negative).
double set_loss(const CsnModel<double>& model, const CandidateSet& set);

/// Compares analytic gradients of set_loss with central differences for every
/// parameter group. Embedding entries are taken from rows the input uses.
GradientReport gradient_check(CsnModel<double>& model, const CandidateSet& set, const GradientCheckOptions& options);

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace csn

#endif  // CSN_TRAINING_HPP
