// SPDX-License-Identifier: Apache-2.0

#include "csn/selection.hpp"

#include "csn/corpus.hpp"

#include <string>

namespace csn {

void SelectionConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("selection.gamma must lie in [0, 1]");
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("selection.eta must lie in [0, 1]");
  if (attention_width < 1) throw ConfigError("selection.h must be >= 1");
}

SelectionLevel parse_level(std::string_view name) {
  if (name == "sentence") return SelectionLevel::Sentence;
  if (name == "word") return SelectionLevel::Word;
  throw ConfigError("unknown selection level '" + std::string(name) + "' (expected sentence or word)");
}

std::string_view level_name(SelectionLevel level) {
  return level == SelectionLevel::Sentence ? "sentence" : "word";
}

FusionMode parse_fusion(std::string_view name) {
  if (name == "learned_linear") return FusionMode::LearnedLinear;
  if (name == "decayed_linear") return FusionMode::DecayedLinear;
  throw ConfigError("unknown fusion '" + std::string(name) + "' (expected learned_linear or decayed_linear)");
}

std::string_view fusion_name(FusionMode mode) {
  return mode == FusionMode::LearnedLinear ? "learned_linear" : "decayed_linear";
}

double gate_threshold(double gamma) {
  if (gamma <= 0.0) return -std::numeric_limits<double>::infinity();
  if (gamma >= 1.0) return std::numeric_limits<double>::infinity();
  return std::log(gamma / (1.0 - gamma));
}

std::vector<double> decay_factors(int n, FusionMode mode, double eta) {
  std::vector<double> f(static_cast<std::size_t>(n), 1.0);
  if (mode == FusionMode::LearnedLinear) return f;
  for (int i = 0; i < n; ++i) f[static_cast<std::size_t>(i)] = std::pow(eta, n - 1 - i);
  return f;
}

}  // namespace csn
