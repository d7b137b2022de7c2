// SPDX-License-Identifier: Apache-2.0
//
// csn: prepare corpora, train, evaluate, sweep and inspect content selection.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 data error,
// 4 numerical failure.

#include "csn/checkpoint.hpp"
#include "csn/pipeline.hpp"
#include "csn/synthetic.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace {

using namespace csn;
namespace fs = std::filesystem;

constexpr int kUsage = 2;
constexpr int kData = 3;
constexpr int kNumerical = 4;

struct CorpusFlags {
  int max_turns = CorpusConfig{}.max_turns;
  int max_sentences = CorpusConfig{}.max_sentences;
  int max_tokens = CorpusConfig{}.max_tokens;

  void add(CLI::App* cmd) {
    cmd->add_option("--max-turns", max_turns, "Context utterances kept (n)")->capture_default_str();
    cmd->add_option("--max-sentences", max_sentences, "Document sentences kept (m)")->capture_default_str();
    cmd->add_option("--max-tokens", max_tokens, "Tokens kept per text (L)")->capture_default_str();
  }
  CorpusConfig config() const {
    CorpusConfig c;
    c.max_turns = max_turns;
    c.max_sentences = max_sentences;
    c.max_tokens = max_tokens;
    c.validate();
    return c;
  }
};

void print_stats(const std::string& split, const std::vector<TextSet>& sets) {
  std::size_t turns = 0;
  for (const auto& s : sets) turns += s.context.size();
  std::cout << std::left << std::setw(6) << split << std::right << std::setw(9) << sets.size() << " sets "
            << std::setw(10) << sets.size() * static_cast<std::size_t>(kCandidatesPerSet) << " samples "
            << std::setw(9) << turns << " turns\n";
}

void write_prepared(const fs::path& out, const CorpusConfig& corpus, const std::vector<TextSet>& train,
                    const std::vector<TextSet>& valid, const std::vector<TextSet>& test) {
  fs::create_directories(out);
  write_records(out / "train.jsonl", train);
  write_records(out / "valid.jsonl", valid);
  write_records(out / "test.jsonl", test);
  const auto vocab = Vocabulary::build(train, corpus.min_count, corpus.max_vocab);
  vocab.save(out / "vocab.txt");

  std::ofstream f(out / "csn.cfg", std::ios::trunc);
  f << "# generated by csn prepare\n"
    << "corpus.format = records\n"
    << "corpus.train = train.jsonl\n"
    << "corpus.valid = valid.jsonl\n"
    << "corpus.test = test.jsonl\n"
    << "corpus.vocab = vocab.txt\n"
    << "corpus.max_turns = " << corpus.max_turns << "\n"
    << "corpus.max_sentences = " << corpus.max_sentences << "\n"
    << "corpus.max_tokens = " << corpus.max_tokens << "\n";
  if (!f) throw DataError("cannot write " + (out / "csn.cfg").string());
  std::cout << "vocabulary " << vocab.size() << " tokens\n"
            << "wrote " << out.string() << "/{train,valid,test}.jsonl, vocab.txt, csn.cfg\n";
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides, long long seed) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
  RunConfig cfg = RunConfig::load(path);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
    cfg.set(o.substr(0, eq), o.substr(eq + 1), fs::current_path());
  }
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.validate();
  return cfg;
}

void print_report(const std::string& split, const EvalReport& r) {
  std::cout << std::fixed << std::setprecision(4) << split << "  R@1 " << r.r1 << "  R@2 " << r.r2 << "  R@5 " << r.r5
            << "  (" << r.sets << " sets)\n"
            << std::defaultfloat;
}

int run(int argc, char** argv) {
  CLI::App app{"Content selection network for document-grounded response selection"};
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Normalize a dataset or generate a synthetic corpus");
  bool synthetic = false;
  int sets = 500;
  std::uint64_t prep_seed = 1;
  std::string format, in_dir, out_dir, variant = "original";
  CorpusFlags corpus_flags;
  prepare->add_flag("--synthetic", synthetic, "Generate the planted-topic synthetic corpus");
  prepare->add_option("--sets", sets, "Synthetic candidate sets (split 80/10/10)")->capture_default_str();
  prepare->add_option("--seed", prep_seed, "Synthetic generator seed")->capture_default_str();
  prepare->add_option("--format", format, "Raw dataset format: persona or cmudog");
  prepare->add_option("--in", in_dir, "Directory holding the raw split files");
  prepare->add_option("--variant", variant, "PersonaChat variant (original, revised)")->capture_default_str();
  prepare->add_option("--out", out_dir, "Output directory for records, vocabulary and config");
  corpus_flags.add(prepare);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one run");
  std::string config_path;
  std::vector<std::string> overrides;
  long long seed = -1;
  train_cmd->add_option("--config", config_path, "Run configuration file")->required();
  train_cmd->add_option("--seed", seed, "Override run.seed");
  train_cmd->add_option("--set", overrides, "Override a configuration entry (key=value)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string checkpoint_path, split = "test";
  eval_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  eval_cmd->add_option("--split", split, "train, valid or test")->capture_default_str();

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Train one run per grid value of gamma or eta");
  std::string param, grid_text;
  sweep_cmd->add_option("--config", config_path, "Run configuration file")->required();
  sweep_cmd->add_option("--param", param, "gamma or eta")->required();
  sweep_cmd->add_option("--grid", grid_text, "Comma-separated values, e.g. 0,0.3,1")->required();
  sweep_cmd->add_option("--seed", seed, "Override run.seed");
  sweep_cmd->add_option("--set", overrides, "Override a configuration entry (key=value)");

  // inspect-selection
  auto* inspect_cmd = app.add_subcommand("inspect-selection", "Show which document content a checkpoint selects");
  int sample = 0;
  std::string level;
  inspect_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  inspect_cmd->add_option("--sample", sample, "Candidate set index within the split")->capture_default_str();
  inspect_cmd->add_option("--split", split, "train, valid or test")->capture_default_str();
  inspect_cmd->add_option("--level", level, "Expected selection level (sentence or word)");

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient check on a tiny model");
  std::string grad_level = "word";
  double tolerance = 1e-4;
  std::uint64_t grad_seed = 1;
  grad_cmd->add_option("--level", grad_level, "sentence or word")->capture_default_str();
  grad_cmd->add_option("--tolerance", tolerance, "Maximum relative error")->capture_default_str();
  grad_cmd->add_option("--seed", grad_seed, "Seed for parameters and data")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  if (prepare->parsed()) {
    if (out_dir.empty()) throw ConfigError("prepare needs --out");
    const CorpusConfig corpus = corpus_flags.config();
    if (synthetic) {
      if (!format.empty() || !in_dir.empty()) throw ConfigError("--synthetic cannot be combined with --format/--in");
      if (sets < 3) throw ConfigError("--sets must be at least 3");
      auto all = generate_synthetic_corpus(prep_seed, sets, corpus);
      const auto n_train = static_cast<std::size_t>(sets) * 8 / 10;
      const auto n_valid = (static_cast<std::size_t>(sets) - n_train) / 2;
      std::vector<TextSet> train(all.begin(), all.begin() + static_cast<long>(n_train));
      std::vector<TextSet> valid(all.begin() + static_cast<long>(n_train),
                                 all.begin() + static_cast<long>(n_train + n_valid));
      std::vector<TextSet> test(all.begin() + static_cast<long>(n_train + n_valid), all.end());
      print_stats("train", train);
      print_stats("valid", valid);
      print_stats("test", test);
      write_prepared(out_dir, corpus, train, valid, test);
      return 0;
    }
    if (format.empty()) throw ConfigError("prepare needs --synthetic or --format");
    const DatasetFormat fmt = parse_format(format);
    if (fmt == DatasetFormat::Records) throw ConfigError("--format must be persona or cmudog");
    if (in_dir.empty()) throw ConfigError("prepare --format needs --in");
    if (!fs::is_directory(in_dir)) throw ConfigError("input directory not found: " + in_dir);
    std::vector<std::vector<TextSet>> splits;
    for (const char* name : {"train", "valid", "test"}) {
      const fs::path file = fmt == DatasetFormat::Persona
                                ? fs::path(in_dir) / (std::string(name) + "_self_" + variant + ".txt")
                                : fs::path(in_dir) / (std::string(name) + ".tsv");
      if (!fs::exists(file)) throw ConfigError("input file not found: " + file.string());
      splits.push_back(load_dataset(file, fmt, corpus));
      print_stats(name, splits.back());
    }
    write_prepared(out_dir, corpus, splits[0], splits[1], splits[2]);
    return 0;
  }

  if (train_cmd->parsed()) {
    const RunConfig cfg = load_config(config_path, overrides, seed);
    const PreparedData data = load_data(cfg);
    std::cout << "run " << cfg.hash() << ": " << data.train.size() << " train / " << data.valid.size() << " valid / "
              << data.test.size() << " test sets, vocabulary " << data.vocabulary.size() << "\n";
    const auto result = run_training(cfg, data, &std::cout);
    std::cout << "best epoch " << result.history.best_epoch << "\n";
    print_report("valid", result.valid);
    if (!data.test.empty()) print_report("test", result.test);
    std::cout << "wrote " << result.directory.string() << "\n";
    return 0;
  }

  if (eval_cmd->parsed()) {
    if (!fs::exists(checkpoint_path)) throw ConfigError("checkpoint not found: " + checkpoint_path);
    const Split s = parse_split(split);
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    const auto sets_ = load_split(ck.config, s, ck.vocabulary);
    const auto report = evaluate(ck.model, sets_);
    print_report(std::string(split_name(s)), report);
    const auto out = fs::path(checkpoint_path).parent_path() / ("metrics_" + std::string(split_name(s)) + ".json");
    write_metrics(out, split_name(s), report, ck.config);
    std::cout << "wrote " << out.string() << "\n";
    return 0;
  }

  if (sweep_cmd->parsed()) {
    const RunConfig base = load_config(config_path, overrides, seed);
    const SweepParameter p = parse_sweep_parameter(param);
    const auto grid = parse_grid(grid_text);
    const PreparedData data = load_data(base);
    std::vector<SweepRow> rows;
    for (double v : grid) {
      RunConfig cfg = base;
      (p == SweepParameter::Gamma ? cfg.model.selection.gamma : cfg.model.selection.eta) = v;
      cfg.validate();
      std::cout << "== " << sweep_parameter_name(p) << " = " << v << " (run " << cfg.hash() << ")\n";
      const auto result = run_training(cfg, data, &std::cout);
      print_report("test", result.test);
      rows.push_back({v, result.test, result.directory});
    }
    const auto dir = base.output_root() / ("sweep-" + std::string(sweep_parameter_name(p)) + "-" + base.hash());
    const auto table = write_sweep(dir, p, rows);
    std::cout << "wrote " << table.string() << "\n";
    return 0;
  }

  if (inspect_cmd->parsed()) {
    if (!fs::exists(checkpoint_path)) throw ConfigError("checkpoint not found: " + checkpoint_path);
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    const SelectionLevel trained = ck.model.config().selection.level;
    if (!level.empty() && parse_level(level) != trained)
      throw ConfigError("checkpoint was trained with " + std::string(level_name(trained)) + "-level selection");
    const auto sets_ = load_split(ck.config, parse_split(split), ck.vocabulary);
    if (sample < 0 || static_cast<std::size_t>(sample) >= sets_.size())
      throw DataError("sample " + std::to_string(sample) + " out of range (split has " + std::to_string(sets_.size()) +
                      " sets)");
    const auto& set = sets_[static_cast<std::size_t>(sample)];
    const auto& sel = ck.model.config().selection;
    std::cout << split << " set " << sample << "  level " << level_name(trained) << "  gamma " << sel.gamma
              << "  eta " << sel.eta << "\n";
    std::cout << describe_selection(set, ck.model.inspect(set), ck.vocabulary, trained);
    return 0;
  }

  if (grad_cmd->parsed()) {
    GradientCheckOptions opts;
    opts.tolerance = tolerance;
    opts.seed = grad_seed;
    const auto t0 = std::chrono::steady_clock::now();
    const auto report = tiny_gradient_check(parse_level(grad_level), grad_seed, opts);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& g : report.groups)
      std::cout << std::left << std::setw(28) << g.name << std::right << std::setw(6) << g.checked
                << " entries  max rel " << std::scientific << std::setprecision(3) << g.max_rel_error << "  max abs "
                << g.max_abs_error << std::defaultfloat << "\n";
    std::cout << "max relative error " << report.max_rel_error << " (tolerance " << report.tolerance
              << "), gate margin " << report.gate_margin << ", " << std::fixed << std::setprecision(1) << secs
              << " s\n"
              << std::defaultfloat;
    if (!report.passed) {
      std::cerr << "gradient check failed:";
      for (const auto& name : report.offending) std::cerr << ' ' << name;
      std::cerr << '\n';
      return kNumerical;
    }
    std::cout << "gradient check passed\n";
    return 0;
  }
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const csn::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const csn::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const csn::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
