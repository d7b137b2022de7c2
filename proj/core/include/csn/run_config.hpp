// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: flat `section.key = value` text, one entry per line,
// `#` starts a comment. Relative paths resolve against the file's directory.

#ifndef CSN_RUN_CONFIG_HPP
#define CSN_RUN_CONFIG_HPP

#include "csn/corpus.hpp"
#include "csn/model.hpp"
#include "csn/training.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace csn {

/// Environment variable that overrides `run.output`.
inline constexpr const char* kOutputRootVariable = "CSN_OUTPUT_ROOT";

struct RunConfig {
  DatasetFormat format = DatasetFormat::Records;
  std::filesystem::path train_path, valid_path, test_path;
  std::filesystem::path vocab_path;                  // empty: built from the training split
  std::vector<std::filesystem::path> embedding_paths;  // pretrained vectors, concatenated
  CorpusConfig corpus;
  ModelConfig model;  // n, m and L mirror the corpus entries
  TrainConfig train;
  std::filesystem::path output = "runs";
  std::uint64_t seed = 1;

  static RunConfig parse(const std::string& text, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);

  /// Applies one `key = value` assignment. Throws ConfigError on unknown keys
  /// or malformed values.
  void set(const std::string& key, const std::string& value, const std::filesystem::path& base_dir = {});

  /// Canonical text; parse(serialize()) reproduces the configuration.
  std::string serialize() const;

  /// 16 hex digits of the FNV-1a hash of the canonical text.
  std::string hash() const;

  /// Model configuration with the corpus dimensions and seed applied.
  ModelConfig model_config() const;
  TrainConfig train_config() const;

  /// Dimension, geometry and range checks. Paths are checked separately.
  void validate() const;

  /// Output root after the environment override.
  std::filesystem::path output_root() const;
};

}  // namespace csn

#endif  // CSN_RUN_CONFIG_HPP
