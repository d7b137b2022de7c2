// SPDX-License-Identifier: Apache-2.0
//
// Run orchestration shared by the command-line tool and the acceptance
// suite: loading the splits named by a RunConfig, training one run into its
// own output directory, and writing metrics and sweep artifacts.
//
// Run directory layout (under RunConfig::output_root()):
//
//   run-<config hash>/config.cfg          canonical configuration
//   run-<config hash>/model.ckpt          best-validation parameters
//   run-<config hash>/epochs.tsv          epoch, loss, learning rate, valid R@1
//   run-<config hash>/metrics_<split>.json

#ifndef CSN_PIPELINE_HPP
#define CSN_PIPELINE_HPP

#include "csn/checkpoint.hpp"
#include "csn/run_config.hpp"
#include "csn/training.hpp"
#include "csn/vocabulary.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace csn {

struct PreparedData {
  Vocabulary vocabulary;
  std::vector<CandidateSet> train, valid, test;
};

enum class Split { Train, Valid, Test };
Split parse_split(std::string_view name);
std::string_view split_name(Split s);

/// Throws ConfigError naming the first configured path that does not exist.
void check_paths(const RunConfig& config);

/// Loads all three splits. The vocabulary comes from corpus.vocab when set,
/// otherwise it is built from the training split.
PreparedData load_data(const RunConfig& config);

/// Encodes one split with an existing vocabulary.
std::vector<CandidateSet> load_split(const RunConfig& config, Split split, const Vocabulary& vocabulary);

struct RunResult {
  std::filesystem::path directory;
  TrainHistory history;
  EvalReport valid, test;
};

std::filesystem::path run_directory(const RunConfig& config);

/// Initializes (seed stream "init", pretrained vectors if configured), trains
/// in the configured precision and writes the run directory. `log` receives
/// one summary line per epoch.
RunResult run_training(const RunConfig& config, const PreparedData& data, std::ostream* log = nullptr);

/// Machine-readable report: {split, R@1, R@2, R@5, n_sets, config_hash, seed}.
std::string metrics_json(std::string_view split, const EvalReport& report, const RunConfig& config);
void write_metrics(const std::filesystem::path& path, std::string_view split, const EvalReport& report,
                   const RunConfig& config);

struct SweepRow {
  double value = 0.0;
  EvalReport test;
  std::filesystem::path run;
};

/// Table with one row per grid value and R@1/R@2/R@5 columns, plus one
/// two-column "value metric" plot file per metric. Returns the table path.
std::filesystem::path write_sweep(const std::filesystem::path& directory, SweepParameter parameter,
                                  const std::vector<SweepRow>& rows);

/// Parses "0,0.3,1" into numbers. Throws ConfigError.
std::vector<double> parse_grid(const std::string& text);

/// Human-readable selection dump for one set: per document sentence the
/// fused score, its sigmoid and the keep flag; at word level every token is
/// marked kept [+] or blocked [-] inline.
std::string describe_selection(const CandidateSet& set, const std::vector<UnitTrace>& trace,
                               const Vocabulary& vocabulary, SelectionLevel level);

/// Gradient check of a freshly initialised 64-bit model with n=2, m=2, L=4,
/// d=3, h=2, d_e=4 on one synthetic set cut to three candidates.
GradientReport tiny_gradient_check(SelectionLevel level, std::uint64_t seed, const GradientCheckOptions& options);

}  // namespace csn

#endif  // CSN_PIPELINE_HPP
