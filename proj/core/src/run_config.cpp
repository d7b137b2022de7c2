// SPDX-License-Identifier: Apache-2.0

#include "csn/run_config.hpp"

#include "csn/rng.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace csn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  return out;
}

long long to_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  const long long x = to_integer(key, v);
  if (x < -2147483647LL || x > 2147483647LL) throw ConfigError("'" + key + "' is out of range");
  return static_cast<int>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

std::filesystem::path resolve(const std::string& v, const std::filesystem::path& base) {
  std::filesystem::path p(v);
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

struct Entry {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::filesystem::path&)> set;
};

#define CSN_INT(KEY, FIELD)                                                                  \
  Entry{KEY, [](const RunConfig& c) { return std::to_string(c.FIELD); },                    \
        [](RunConfig& c, const std::string& v, const std::filesystem::path&) { c.FIELD = to_int(KEY, v); }}
#define CSN_DOUBLE(KEY, FIELD)                                                               \
  Entry{KEY, [](const RunConfig& c) { return fmt(c.FIELD); },                               \
        [](RunConfig& c, const std::string& v, const std::filesystem::path&) { c.FIELD = to_double(KEY, v); }}
#define CSN_BOOL(KEY, FIELD)                                                                 \
  Entry{KEY, [](const RunConfig& c) { return fmt(c.FIELD); },                               \
        [](RunConfig& c, const std::string& v, const std::filesystem::path&) { c.FIELD = to_bool(KEY, v); }}
#define CSN_PATH(KEY, FIELD)                                                                 \
  Entry{KEY, [](const RunConfig& c) { return c.FIELD.string(); },                           \
        [](RunConfig& c, const std::string& v, const std::filesystem::path& b) { c.FIELD = resolve(v, b); }}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      Entry{"corpus.format", [](const RunConfig& c) { return std::string(format_name(c.format)); },
            [](RunConfig& c, const std::string& v, const std::filesystem::path&) { c.format = parse_format(v); }},
      CSN_PATH("corpus.train", train_path),
      CSN_PATH("corpus.valid", valid_path),
      CSN_PATH("corpus.test", test_path),
      CSN_PATH("corpus.vocab", vocab_path),
      Entry{"corpus.embeddings",
            [](const RunConfig& c) {
              std::string out;
              for (const auto& p : c.embedding_paths) out += (out.empty() ? "" : ",") + p.string();
              return out;
            },
            [](RunConfig& c, const std::string& v, const std::filesystem::path& b) {
              c.embedding_paths.clear();
              std::stringstream ss(v);
              std::string item;
              while (std::getline(ss, item, ','))
                if (!trim(item).empty()) c.embedding_paths.push_back(resolve(trim(item), b));
            }},
      CSN_INT("corpus.max_turns", corpus.max_turns),
      CSN_INT("corpus.max_sentences", corpus.max_sentences),
      CSN_INT("corpus.max_tokens", corpus.max_tokens),
      CSN_INT("corpus.min_count", corpus.min_count),
      CSN_INT("corpus.max_vocab", corpus.max_vocab),
      CSN_INT("model.embed_dim", model.embed_dim),
      CSN_INT("model.hidden", model.hidden),
      CSN_INT("model.aggregator", model.aggregator),
      CSN_DOUBLE("model.dropout", model.dropout),
      CSN_BOOL("model.share_cnn", model.share_cnn),
      CSN_INT("model.cnn.conv1_filters", model.cnn.conv1_filters),
      CSN_INT("model.cnn.conv1_kernel", model.cnn.conv1_kernel),
      CSN_INT("model.cnn.pool1_window", model.cnn.pool1_window),
      CSN_INT("model.cnn.pool1_stride", model.cnn.pool1_stride),
      CSN_INT("model.cnn.conv2_filters", model.cnn.conv2_filters),
      CSN_INT("model.cnn.conv2_kernel", model.cnn.conv2_kernel),
      CSN_INT("model.cnn.pool2_window", model.cnn.pool2_window),
      CSN_INT("model.cnn.pool2_stride", model.cnn.pool2_stride),
      Entry{"selection.level", [](const RunConfig& c) { return std::string(level_name(c.model.selection.level)); },
            [](RunConfig& c, const std::string& v, const std::filesystem::path&) {
              c.model.selection.level = parse_level(v);
            }},
      CSN_DOUBLE("selection.gamma", model.selection.gamma),
      CSN_DOUBLE("selection.eta", model.selection.eta),
      Entry{"selection.fusion", [](const RunConfig& c) { return std::string(fusion_name(c.model.selection.fusion)); },
            [](RunConfig& c, const std::string& v, const std::filesystem::path&) {
              c.model.selection.fusion = parse_fusion(v);
            }},
      CSN_INT("selection.attention_width", model.selection.attention_width),
      CSN_INT("train.batch_size", train.batch_size),
      CSN_DOUBLE("train.learning_rate", train.learning_rate),
      CSN_DOUBLE("train.lr_decay", train.lr_decay),
      CSN_DOUBLE("train.weight_decay", train.weight_decay),
      CSN_DOUBLE("train.beta1", train.beta1),
      CSN_DOUBLE("train.beta2", train.beta2),
      CSN_DOUBLE("train.epsilon", train.epsilon),
      CSN_INT("train.max_epochs", train.max_epochs),
      CSN_INT("train.patience", train.patience),
      CSN_INT("train.negatives", train.negatives),
      Entry{"train.precision", [](const RunConfig& c) { return std::string(precision_name(c.train.precision)); },
            [](RunConfig& c, const std::string& v, const std::filesystem::path&) {
              c.train.precision = parse_precision(v);
            }},
      CSN_BOOL("train.stop_at_perfect", train.stop_at_perfect),
      Entry{"run.seed", [](const RunConfig& c) { return std::to_string(c.seed); },
            [](RunConfig& c, const std::string& v, const std::filesystem::path&) {
              const long long s = to_integer("run.seed", v);
              if (s < 0) throw ConfigError("'run.seed' must be non-negative");
              c.seed = static_cast<std::uint64_t>(s);
            }},
      CSN_PATH("run.output", output),
  };
  return table;
}

#undef CSN_INT
#undef CSN_DOUBLE
#undef CSN_BOOL
#undef CSN_PATH

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value, const std::filesystem::path& base_dir) {
  for (const auto& e : entries())
    if (key == e.key) {
      e.set(*this, value, base_dir);
      return;
    }
  throw ConfigError("unknown configuration key '" + key + "'");
}

RunConfig RunConfig::parse(const std::string& text, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.erase(hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(number) + ": expected 'key = value'");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), base_dir);
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.parent_path());
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& e : entries()) out += std::string(e.key) + " = " + e.get(*this) + "\n";
  return out;
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(serialize())));
  return buf;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m = model;
  m.max_turns = corpus.max_turns;
  m.max_sentences = corpus.max_sentences;
  m.max_tokens = corpus.max_tokens;
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

void RunConfig::validate() const {
  corpus.validate();
  model_config().validate();
  train_config().validate();
}

std::filesystem::path RunConfig::output_root() const {
  if (const char* env = std::getenv(kOutputRootVariable); env != nullptr && *env != '\0') return env;
  return output;
}

}  // namespace csn
