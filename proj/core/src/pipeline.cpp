// SPDX-License-Identifier: Apache-2.0

#include "csn/pipeline.hpp"

#include "csn/encoder.hpp"
#include "csn/synthetic.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace csn {

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

const std::filesystem::path& split_path(const RunConfig& config, Split split) {
  switch (split) {
    case Split::Train: return config.train_path;
    case Split::Valid: return config.valid_path;
    case Split::Test: break;
  }
  return config.test_path;
}

std::vector<CandidateSet> encode_all(const std::vector<TextSet>& sets, const Vocabulary& vocab,
                                     const CorpusConfig& corpus) {
  std::vector<CandidateSet> out;
  out.reserve(sets.size());
  for (const auto& s : sets) out.push_back(vocab.encode_set(s, corpus));
  return out;
}

template <typename T>
RunResult train_in(const RunConfig& config, const PreparedData& data, std::ostream* log) {
  const ModelConfig mc = config.model_config();
  CsnModel<T> model(mc, data.vocabulary.size());
  Rng init = make_stream(config.seed, "init");
  model.initialize(init);
  if (!config.embedding_paths.empty()) {
    int dim = 0;
    for (const auto& p : config.embedding_paths) dim += pretrained_dimension(p);
    if (dim != mc.embed_dim)
      throw ConfigError("pretrained vectors have " + std::to_string(dim) + " columns, model.embed_dim is " +
                        std::to_string(mc.embed_dim));
    Rng rng = make_stream(config.seed, "pretrained");
    initialize_embeddings(model.embedding().value, data.vocabulary, config.embedding_paths, rng);
  }

  RunResult result;
  result.directory = run_directory(config);
  std::filesystem::create_directories(result.directory);
  {
    auto out = open_output(result.directory / "config.cfg");
    out << config.serialize();
  }
  auto epochs = open_output(result.directory / "epochs.tsv");
  epochs << "epoch\tloss\tlearning_rate\tvalid_r1\n";
  result.history = train(model, data.train, data.valid, config.train_config(), [&](const EpochRecord& r) {
    epochs << r.epoch << '\t' << r.loss << '\t' << r.learning_rate << '\t' << r.valid_r1 << '\n';
    epochs.flush();
    if (log)
      *log << "epoch " << r.epoch << "  loss " << std::fixed << std::setprecision(4) << r.loss << "  lr "
           << std::defaultfloat << r.learning_rate << "  valid R@1 " << std::fixed << std::setprecision(4)
           << r.valid_r1 << (r.improved ? "  *" : "") << std::defaultfloat << '\n';
  });
  save_checkpoint(result.directory / "model.ckpt", config, data.vocabulary, model);
  result.valid = evaluate(model, data.valid);
  write_metrics(result.directory / "metrics_valid.json", "valid", result.valid, config);
  if (!data.test.empty()) {
    result.test = evaluate(model, data.test);
    write_metrics(result.directory / "metrics_test.json", "test", result.test, config);
  }
  return result;
}

std::string format_number(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

}  // namespace

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "valid" || name == "validation") return Split::Valid;
  if (name == "test") return Split::Test;
  throw ConfigError("unknown split '" + std::string(name) + "' (expected train, valid or test)");
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: break;
  }
  return "test";
}

void check_paths(const RunConfig& config) {
  auto need = [](const std::filesystem::path& p, const char* key) {
    if (p.empty()) throw ConfigError(std::string(key) + " is not set");
    if (!std::filesystem::exists(p)) throw ConfigError(std::string(key) + ": no such file " + p.string());
  };
  need(config.train_path, "corpus.train");
  need(config.valid_path, "corpus.valid");
  if (!config.test_path.empty()) need(config.test_path, "corpus.test");
  if (!config.vocab_path.empty()) need(config.vocab_path, "corpus.vocab");
  for (const auto& p : config.embedding_paths) need(p, "corpus.embeddings");
}

PreparedData load_data(const RunConfig& config) {
  check_paths(config);
  PreparedData data;
  const auto train_text = load_dataset(config.train_path, config.format, config.corpus);
  data.vocabulary = config.vocab_path.empty()
                        ? Vocabulary::build(train_text, config.corpus.min_count, config.corpus.max_vocab)
                        : Vocabulary::load(config.vocab_path);
  data.train = encode_all(train_text, data.vocabulary, config.corpus);
  data.valid = load_split(config, Split::Valid, data.vocabulary);
  if (!config.test_path.empty()) data.test = load_split(config, Split::Test, data.vocabulary);
  return data;
}

std::vector<CandidateSet> load_split(const RunConfig& config, Split split, const Vocabulary& vocabulary) {
  const auto& path = split_path(config, split);
  if (path.empty()) throw ConfigError("corpus." + std::string(split_name(split)) + " is not set");
  if (!std::filesystem::exists(path)) throw ConfigError("no such file " + path.string());
  return encode_all(load_dataset(path, config.format, config.corpus), vocabulary, config.corpus);
}

std::filesystem::path run_directory(const RunConfig& config) { return config.output_root() / ("run-" + config.hash()); }

RunResult run_training(const RunConfig& config, const PreparedData& data, std::ostream* log) {
  config.validate();
  if (config.train_config().precision == Precision::Float64) return train_in<double>(config, data, log);
  return train_in<float>(config, data, log);
}

std::string metrics_json(std::string_view split, const EvalReport& report, const RunConfig& config) {
  nlohmann::ordered_json j;
  j["split"] = split;
  j["R@1"] = report.r1;
  j["R@2"] = report.r2;
  j["R@5"] = report.r5;
  j["n_sets"] = report.sets;
  j["config_hash"] = config.hash();
  j["seed"] = config.seed;
  return j.dump(2) + "\n";
}

void write_metrics(const std::filesystem::path& path, std::string_view split, const EvalReport& report,
                   const RunConfig& config) {
  auto out = open_output(path);
  out << metrics_json(split, report, config);
}

std::filesystem::path write_sweep(const std::filesystem::path& directory, SweepParameter parameter,
                                  const std::vector<SweepRow>& rows) {
  const std::string name(sweep_parameter_name(parameter));
  const auto table = directory / ("sweep_" + name + ".tsv");
  auto out = open_output(table);
  out << name << "\tR@1\tR@2\tR@5\tn_sets\trun\n";
  for (const auto& r : rows)
    out << format_number(r.value) << '\t' << r.test.r1 << '\t' << r.test.r2 << '\t' << r.test.r5 << '\t' << r.test.sets
        << '\t' << r.run.filename().string() << '\n';
  const std::pair<const char*, double EvalReport::*> metrics[] = {
      {"R@1", &EvalReport::r1}, {"R@2", &EvalReport::r2}, {"R@5", &EvalReport::r5}};
  for (const auto& [metric, field] : metrics) {
    auto plot = open_output(directory / ("sweep_" + name + "_" + metric + ".dat"));
    for (const auto& r : rows) plot << format_number(r.value) << ' ' << r.test.*field << '\n';
  }
  return table;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (used == 0 || used != item.size() || !std::isfinite(v)) throw ConfigError("bad grid value '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty grid");
  return out;
}

std::string describe_selection(const CandidateSet& set, const std::vector<UnitTrace>& trace,
                               const Vocabulary& vocabulary, SelectionLevel level) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  for (std::size_t j = 0; j < set.document.size() && j < trace.size(); ++j) {
    const auto& s = set.document[j];
    const auto& t = trace[j];
    out << "sentence " << j;
    if (set.planted == static_cast<int>(j)) out << " (planted)";
    if (s.length == 0) {
      out << ": empty\n";
      continue;
    }
    if (level == SelectionLevel::Sentence) {
      const double sig = 1.0 / (1.0 + std::exp(-t.score));
      out << ": S=" << t.score << " sigmoid=" << sig << ' ' << (t.keep ? "KEPT" : "BLOCKED") << '\n' << "  ";
      for (int k = 0; k < s.length; ++k) out << (k ? " " : "") << vocabulary.token(s.ids[static_cast<std::size_t>(k)]);
      out << '\n';
      continue;
    }
    int kept = 0;
    for (int k = 0; k < s.length; ++k) kept += t.word_keep[static_cast<std::size_t>(k)] ? 1 : 0;
    out << ": " << kept << "/" << s.length << " words kept\n  ";
    for (int k = 0; k < s.length; ++k) {
      const auto idx = static_cast<std::size_t>(k);
      out << (k ? " " : "") << vocabulary.token(s.ids[idx]) << (t.word_keep[idx] ? "[+]" : "[-]");
    }
    out << "\n  S:";
    for (int k = 0; k < s.length; ++k) out << ' ' << t.word_scores[static_cast<std::size_t>(k)];
    out << '\n';
  }
  return out.str();
}

GradientReport tiny_gradient_check(SelectionLevel level, std::uint64_t seed, const GradientCheckOptions& options) {
  CorpusConfig cc;
  cc.max_turns = 2;
  cc.max_sentences = 2;
  cc.max_tokens = 4;
  const auto text = generate_synthetic_corpus(seed, 4, cc);
  const auto vocab = Vocabulary::build(text, 1, 1000);
  CandidateSet set = vocab.encode_set(text.front(), cc);
  set.candidates.resize(3);
  set.positive = std::min(set.positive, 2);

  ModelConfig mc;
  mc.max_turns = cc.max_turns;
  mc.max_sentences = cc.max_sentences;
  mc.max_tokens = cc.max_tokens;
  mc.hidden = 3;
  mc.aggregator = 3;
  mc.embed_dim = 4;
  mc.dropout = 0.0;
  mc.selection.attention_width = 2;
  mc.selection.level = level;
  CsnModel<double> model(mc, vocab.size());
  Rng rng = make_stream(seed, "init");
  model.initialize(rng);
  return gradient_check(model, set, options);
}

}  // namespace csn
