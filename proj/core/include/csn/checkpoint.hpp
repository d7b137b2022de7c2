// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container:
//
//   bytes 0..7   magic "CSNCKPT1"
//   bytes 8..15  little-endian uint64 header length H
//   next H bytes JSON header {config, vocabulary, parameters[{name, rows,
//                cols, offset}]}
//   remainder    float32 little-endian payload, row-major per parameter

#ifndef CSN_CHECKPOINT_HPP
#define CSN_CHECKPOINT_HPP

#include "csn/model.hpp"
#include "csn/run_config.hpp"
#include "csn/vocabulary.hpp"

#include <filesystem>

namespace csn {

struct Checkpoint {
  RunConfig config;
  Vocabulary vocabulary;
  CsnModel<float> model;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const Vocabulary& vocabulary,
                     const CsnModel<T>& model);

/// Throws DataError for unreadable or corrupt files and for parameter shapes
/// that disagree with the stored configuration.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace csn

#endif  // CSN_CHECKPOINT_HPP
