// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion, then a summary.
// Exit status is 0 only when no criterion fails.
//
//   csn_acceptance [criterion numbers...]
//
// CSN_PERSONACHAT_DIR points criterion 8 at the original PersonaChat text
// files; without it that criterion is reported as SKIP.

#include "csn/pipeline.hpp"
#include "csn/synthetic.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

namespace {

using namespace csn;
using oracle::Mat;
using Clock = std::chrono::steady_clock;

enum class Verdict { Pass, Fail, Skip };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  GradientCheckOptions o;
  o.tolerance = 1e-4;
  const auto sent = tiny_gradient_check(SelectionLevel::Sentence, 1, o);
  const auto word = tiny_gradient_check(SelectionLevel::Word, 1, o);
  const double elapsed = seconds_since(t0);
  const bool ok = sent.passed && word.passed && elapsed <= 120.0;
  return {ok ? Verdict::Pass : Verdict::Fail, "max rel error sentence " + fmt(sent.max_rel_error, 3) + ", word " +
                                                  fmt(word.max_rel_error, 3) + " (tol 1e-4), " + fmt(elapsed, 3) +
                                                  " s (limit 120 s)"};
}

Outcome oracle_equivalence() {
  const auto d = oracle::run_oracles(200, 2024);
  const bool ok = d.trials >= 100 && d.worst() <= 1e-6;
  return {ok ? Verdict::Pass : Verdict::Fail,
          std::to_string(d.trials) + " inputs; max |delta| sentence_match_scores " + fmt(d.sentence_match, 2) +
              ", word_match_map " + fmt(d.word_match_map, 2) + ", word_scores " + fmt(d.word_scores, 2) +
              ", attentive " + fmt(d.attentive, 2) + ", similarity_pair " + fmt(d.similarity_pair, 2) + " (tol 1e-6)"};
}

struct TinyCorpus {
  CorpusConfig corpus;
  Vocabulary vocab;
  std::vector<CandidateSet> sets;
};

TinyCorpus tiny_corpus(int sets, std::uint64_t seed) {
  TinyCorpus t;
  t.corpus.max_turns = 3;
  t.corpus.max_sentences = 3;
  t.corpus.max_tokens = 6;
  const auto text = generate_synthetic_corpus(seed, sets, t.corpus);
  t.vocab = Vocabulary::build(text, 1, 10000);
  for (const auto& s : text) t.sets.push_back(t.vocab.encode_set(s, t.corpus));
  return t;
}

ModelConfig tiny_model(const CorpusConfig& c, SelectionLevel level) {
  ModelConfig mc;
  mc.max_turns = c.max_turns;
  mc.max_sentences = c.max_sentences;
  mc.max_tokens = c.max_tokens;
  mc.embed_dim = 6;
  mc.hidden = 4;
  mc.aggregator = 4;
  mc.selection.attention_width = 3;
  mc.selection.level = level;
  mc.cnn.conv1_filters = 4;
  mc.cnn.conv2_filters = 4;
  return mc;
}

CsnModel<double> init_model(const ModelConfig& mc, std::size_t vocab, std::uint64_t seed) {
  CsnModel<double> m(mc, vocab);
  Rng rng = make_stream(seed, "init");
  m.initialize(rng);
  return m;
}

Outcome gate_semantics() {
  const auto t = tiny_corpus(20, 3);
  int blind_checks = 0, blind_failures = 0, keep_failures = 0, keep_checks = 0;
  for (auto level : {SelectionLevel::Sentence, SelectionLevel::Word}) {
    // (a) gamma = 1: swapping in another set's document changes nothing.
    auto mc = tiny_model(t.corpus, level);
    mc.selection.gamma = 1.0;
    const auto blind = init_model(mc, t.vocab.size(), 7);
    for (std::size_t i = 0; i < t.sets.size(); ++i) {
      CandidateSet other = t.sets[i];
      other.document = t.sets[(i + 1) % t.sets.size()].document;
      ++blind_checks;
      if (blind.score(t.sets[i]) != blind.score(other)) ++blind_failures;
    }
    // (b) gamma = 0: every real unit kept.
    mc.selection.gamma = 0.0;
    const auto open = init_model(mc, t.vocab.size(), 7);
    for (const auto& s : t.sets) {
      const auto trace = open.inspect(s);
      for (std::size_t j = 0; j < trace.size(); ++j) {
        if (s.document[j].length == 0) continue;
        ++keep_checks;
        bool all = trace[j].keep;
        if (level == SelectionLevel::Word)
          for (int w = 0; w < s.document[j].length; ++w) all = all && trace[j].word_keep[static_cast<std::size_t>(w)];
        if (!all) ++keep_failures;
      }
    }
  }
  // (b) S' = S exactly and zero-out, on the gate ops directly; (c) nesting.
  Rng rng = make_stream(11, "gate");
  int identity_failures = 0, nesting_failures = 0;
  const std::vector<double> gammas{0.0, 0.05, 0.2, 0.3, 0.5, 0.7, 0.9, 0.999, 1.0};
  for (int trial = 0; trial < 100; ++trial) {
    const Index L = 2 + static_cast<Index>(uniform_index(rng, 6));
    const int len = 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(L)));
    const Mat scores = oracle::random_matrix(rng, L, 1, 5.0);
    const Mat rep = oracle::random_rep(rng, L, 3, len);
    std::vector<bool> previous(static_cast<std::size_t>(L), true);
    for (double g : gammas) {
      ad::Tape<double> tape(false);
      UnitTrace trace;
      ad::Var<double> kept;
      const auto out = gate_word(tape.constant(scores), g, SequentialRep<double>{tape.constant(rep), len}, &trace, &kept);
      for (Index r = 0; r < L; ++r) {
        const bool keep = trace.word_keep[static_cast<std::size_t>(r)];
        if (keep && !previous[static_cast<std::size_t>(r)]) ++nesting_failures;
        previous[static_cast<std::size_t>(r)] = keep;
        const double expected_retained = keep ? scores(r, 0) : 0.0;
        if (kept.value()(r, 0) != expected_retained) ++identity_failures;
        if (Mat(out.value().row(r)) != Mat(expected_retained * rep.row(r))) ++identity_failures;
        if (g == 0.0 && r < len && !keep) ++identity_failures;
      }
    }
  }
  const bool ok = blind_failures == 0 && keep_failures == 0 && identity_failures == 0 && nesting_failures == 0;
  return {ok ? Verdict::Pass : Verdict::Fail,
          "(a) document blindness " + std::to_string(blind_checks - blind_failures) + "/" + std::to_string(blind_checks) +
              " exact; (b) all kept " + std::to_string(keep_checks - keep_failures) + "/" + std::to_string(keep_checks) +
              ", S'=S mismatches " + std::to_string(identity_failures) + "; (c) nesting violations " +
              std::to_string(nesting_failures) + " over 100 inputs x " + std::to_string(gammas.size()) + " gammas"};
}

Outcome decay_semantics() {
  Rng rng = make_stream(13, "decay");
  int eta1_failures = 0, eta0_failures = 0, trials = 0;
  for (int trial = 0; trial < 100; ++trial, ++trials) {
    const Index n = 1 + static_cast<Index>(uniform_index(rng, 5)), L = 1 + static_cast<Index>(uniform_index(rng, 6));
    ad::Tape<double> tape(false);
    const Mat sig = oracle::random_matrix(rng, L, n, 3.0);
    const auto w = tape.constant(oracle::random_matrix(rng, 1, n, 2.0));
    if (fuse(tape.constant(sig), w, FusionMode::DecayedLinear, 1.0).value() !=
        fuse(tape.constant(sig), w, FusionMode::LearnedLinear, 0.0).value())
      ++eta1_failures;
    Mat perturbed = sig;
    if (n > 1) perturbed.leftCols(n - 1) = oracle::random_matrix(rng, L, n - 1, 50.0);
    if (fuse(tape.constant(sig), w, FusionMode::DecayedLinear, 0.0).value() !=
        fuse(tape.constant(perturbed), w, FusionMode::DecayedLinear, 0.0).value())
      ++eta0_failures;
  }
  // The same equivalences through the full model at both levels.
  const auto t = tiny_corpus(8, 5);
  int model_failures = 0;
  for (auto level : {SelectionLevel::Sentence, SelectionLevel::Word}) {
    auto mc = tiny_model(t.corpus, level);
    mc.selection.gamma = 0.0;
    mc.selection.eta = 1.0;
    auto decayed = init_model(mc, t.vocab.size(), 9);
    mc.selection.fusion = FusionMode::LearnedLinear;
    auto learned = init_model(mc, t.vocab.size(), 9);
    for (const auto& s : t.sets)
      if (decayed.score(s) != learned.score(s)) ++model_failures;
    mc.selection.fusion = FusionMode::DecayedLinear;
    mc.selection.eta = 0.0;
    auto last_only = init_model(mc, t.vocab.size(), 9);
    for (const auto& s : t.sets) {
      // Earlier turns still feed the context matching stream, so compare
      // the selection scores, which are the decayed fusion's output.
      CandidateSet changed = s;
      for (std::size_t i = 0; i + 1 < changed.context.size(); ++i) changed.context[i] = t.sets[0].candidates[i + 3];
      const auto a = last_only.inspect(s), b = last_only.inspect(changed);
      for (std::size_t j = 0; j < a.size(); ++j)
        if (a[j].score != b[j].score || a[j].word_scores != b[j].word_scores) ++model_failures;
    }
  }
  const bool ok = eta1_failures == 0 && eta0_failures == 0 && model_failures == 0;
  return {ok ? Verdict::Pass : Verdict::Fail,
          "eta=1 vs learned linear mismatches " + std::to_string(eta1_failures) + "/" + std::to_string(trials) +
              ", eta=0 earlier-signal leaks " + std::to_string(eta0_failures) + "/" + std::to_string(trials) +
              ", full-model mismatches " + std::to_string(model_failures)};
}

Outcome overfit_sanity() {
  const auto t0 = Clock::now();
  CorpusConfig cc;
  const auto text = generate_synthetic_corpus(1, 20, cc);
  const auto vocab = Vocabulary::build(text, 1, 10000);
  std::vector<CandidateSet> sets;
  for (const auto& s : text) sets.push_back(vocab.encode_set(s, cc));
  ModelConfig mc;
  CsnModel<float> model(mc, vocab.size());
  Rng rng = make_stream(1, "init");
  model.initialize(rng);
  TrainConfig tc;
  tc.max_epochs = 200;
  tc.patience = 200;
  tc.lr_decay = 1.0;
  tc.stop_at_perfect = true;
  const auto h = train(model, sets, sets, tc);
  const double r1 = evaluate(model, sets).r1;
  const double elapsed = seconds_since(t0);
  const bool ok = r1 == 1.0 && elapsed <= 300.0;
  return {ok ? Verdict::Pass : Verdict::Fail, "training R@1 " + fmt(r1) + " after " + std::to_string(h.epochs.size()) +
                                                  " epochs (limit 200), " + fmt(elapsed, 3) + " s (limit 300 s)"};
}

// Desk-scale sweep configuration shared by the gamma and eta grids.
struct TrendSetup {
  CorpusConfig corpus;
  ModelConfig model;
  TrainConfig train;
  int sets = 500, train_sets = 400, valid_sets = 50;
};

TrendSetup trend_setup() {
  TrendSetup s;
  s.corpus.max_tokens = 8;
  s.model.max_tokens = 8;
  s.model.cnn.conv1_filters = 8;
  s.model.cnn.conv2_filters = 16;
  s.train.max_epochs = 15;
  s.train.patience = 15;
  s.train.lr_decay = 1.0;
  return s;
}

Outcome trend(std::string& notes) {
  const auto setup = trend_setup();
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  std::map<double, double> gamma_r1, eta_r1;
  std::map<double, std::vector<double>> planted_keep, distractor_keep;
  std::ostringstream log;
  for (auto seed : seeds) {
    const auto text = generate_synthetic_corpus(seed, setup.sets, setup.corpus);
    const auto vocab = Vocabulary::build(std::vector<TextSet>(text.begin(), text.begin() + setup.train_sets), 1, 50000);
    std::vector<CandidateSet> tr, va, te;
    for (int i = 0; i < setup.sets; ++i) {
      auto e = vocab.encode_set(text[static_cast<std::size_t>(i)], setup.corpus);
      (i < setup.train_sets ? tr : i < setup.train_sets + setup.valid_sets ? va : te).push_back(std::move(e));
    }
    TrainConfig tc = setup.train;
    tc.seed = seed;
    std::map<std::pair<int, double>, double> cache;
    auto run = [&](double gamma, double eta) {
      ModelConfig mc = setup.model;
      mc.selection.gamma = gamma;
      mc.selection.eta = eta;
      CsnModel<float> model(mc, vocab.size());
      Rng rng = make_stream(seed, "init");
      model.initialize(rng);
      const auto t0 = Clock::now();
      train(model, tr, va, tc);
      const auto rep = evaluate(model, te);
      double pk = 0, pn = 0, dk = 0, dn = 0;
      for (const auto& s : te) {
        const auto trace = model.inspect(s);
        for (std::size_t j = 0; j < trace.size(); ++j)
          for (int w = 0; w < s.document[j].length; ++w) {
            const bool k = trace[j].word_keep[static_cast<std::size_t>(w)];
            if (static_cast<int>(j) == s.planted) {
              pk += k;
              ++pn;
            } else {
              dk += k;
              ++dn;
            }
          }
      }
      log << "    seed " << seed << " gamma " << gamma << " eta " << eta << ": test R@1 " << fmt(rep.r1) << " R@2 "
          << fmt(rep.r2) << " R@5 " << fmt(rep.r5) << ", word keep rate planted " << fmt(pk / pn, 3) << " distractor "
          << fmt(dk / dn, 3) << " (" << fmt(seconds_since(t0), 3) << " s)\n";
      return rep.r1;
    };
    const double base = run(0.3, 0.9);
    for (double g : {0.0, 0.3, 1.0}) gamma_r1[g] += (g == 0.3 ? base : run(g, 0.9)) / seeds.size();
    for (double e : {0.0, 0.9, 1.0}) eta_r1[e] += (e == 0.9 ? base : run(0.3, e)) / seeds.size();
    std::fputs(log.str().c_str(), stdout);
    std::fflush(stdout);
    log.str("");
  }
  const bool gamma_ok = gamma_r1[0.3] > gamma_r1[0.0] && gamma_r1[0.3] > gamma_r1[1.0];
  const bool eta_ok = eta_r1[0.9] >= eta_r1[0.0] && eta_r1[0.9] >= eta_r1[1.0];
  std::ostringstream d;
  d << "mean test R@1 over 3 seeds: gamma 0 " << fmt(gamma_r1[0.0]) << ", 0.3 " << fmt(gamma_r1[0.3]) << ", 1 "
    << fmt(gamma_r1[1.0]) << " (margins " << fmt(gamma_r1[0.3] - gamma_r1[0.0]) << ", "
    << fmt(gamma_r1[0.3] - gamma_r1[1.0]) << ", need > 0) " << (gamma_ok ? "ok" : "violated") << "; eta 0 "
    << fmt(eta_r1[0.0]) << ", 0.9 " << fmt(eta_r1[0.9]) << ", 1 " << fmt(eta_r1[1.0]) << " (margins "
    << fmt(eta_r1[0.9] - eta_r1[0.0]) << ", " << fmt(eta_r1[0.9] - eta_r1[1.0]) << ", need >= 0) "
    << (eta_ok ? "ok" : "violated");
  notes = d.str();
  return {gamma_ok && eta_ok ? Verdict::Pass : Verdict::Fail, notes};
}

CandidateSet bare_set(int positive) {
  CandidateSet s;
  s.context.resize(1);
  s.document.resize(1);
  s.candidates.resize(kCandidatesPerSet);
  s.positive = positive;
  return s;
}

Outcome metric_correctness() {
  // Five crafted sets: candidate i scores base[i], positives chosen for
  // ranks 1, 3, 5, 6 and a tie at the top.
  std::vector<CandidateSet> sets;
  std::vector<std::vector<double>> scores;
  std::vector<double> base(kCandidatesPerSet);
  for (int i = 0; i < kCandidatesPerSet; ++i) base[static_cast<std::size_t>(i)] = i / 20.0;
  for (int p : {19, 17, 15, 14}) {
    sets.push_back(bare_set(p));
    scores.push_back(base);
  }
  auto tied = base;
  tied[0] = tied[19];
  sets.push_back(bare_set(0));
  scores.push_back(tied);
  std::size_t next = 0;
  const auto r = evaluate(sets, [&](const CandidateSet&) { return scores[next++]; });
  const bool crafted = r.r1 == 1.0 / 5 && r.r2 == 2.0 / 5 && r.r5 == 4.0 / 5 && r.ranks == std::vector<int>{1, 3, 5, 6, 2};

  Rng rng = make_stream(17, "random-scorer");
  std::vector<CandidateSet> many(10000, bare_set(0));
  for (auto& s : many) s.positive = static_cast<int>(uniform_index(rng, kCandidatesPerSet));
  const auto rr = evaluate(many, [&rng](const CandidateSet&) {
    std::vector<double> v(kCandidatesPerSet);
    for (auto& x : v) x = uniform01(rng);
    return v;
  });
  bool chance = true;
  std::ostringstream d;
  d << "crafted (R@1, R@2, R@5) = (" << r.r1 << ", " << r.r2 << ", " << r.r5 << ") expected (0.2, 0.4, 0.8); random "
    << "scorer over 10000 sets:";
  for (auto [k, got] : {std::pair{1, rr.r1}, std::pair{2, rr.r2}, std::pair{5, rr.r5}}) {
    const double p = k / 20.0, se = std::sqrt(p * (1 - p) / 10000.0);
    chance = chance && std::abs(got - p) <= 3 * se;
    d << " R@" << k << " " << got << " (|z| " << fmt(std::abs(got - p) / se, 2) << ")";
  }
  d << ", limit |z| <= 3";
  return {crafted && chance ? Verdict::Pass : Verdict::Fail, d.str()};
}

Outcome data_pipeline() {
  const char* dir = std::getenv("CSN_PERSONACHAT_DIR");
  if (dir == nullptr || *dir == '\0')
    return {Verdict::Skip, "CSN_PERSONACHAT_DIR not set; original PersonaChat files not supplied"};
  const std::pair<const char*, std::size_t> expected[] = {{"train", 65719}, {"valid", 7801}, {"test", 7512}};
  bool ok = true;
  std::ostringstream d;
  CorpusConfig cc;
  for (const auto& [split, count] : expected) {
    const auto path = std::filesystem::path(dir) / (std::string(split) + "_self_original.txt");
    try {
      const auto sets = load_dataset(path, DatasetFormat::Persona, cc);
      ok = ok && sets.size() == count;
      d << split << " " << sets.size() << " sets / " << sets.size() * kCandidatesPerSet << " samples (expected "
        << count << "); ";
    } catch (const std::exception& e) {
      ok = false;
      d << split << ": " << e.what() << "; ";
    }
  }
  return {ok ? Verdict::Pass : Verdict::Fail, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  std::string trend_notes;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient fidelity", gradient_fidelity},
      {"oracle equivalence", oracle_equivalence},
      {"gate semantics", gate_semantics},
      {"decay semantics", decay_semantics},
      {"overfit sanity", overfit_sanity},
      {"desk-scale gamma/eta trend", [&] { return trend(trend_notes); }},
      {"metric correctness", metric_correctness},
      {"data pipeline", data_pipeline},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0, passed = 0, skipped = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(number)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {Verdict::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Fail ? "FAIL" : "SKIP";
    (o.verdict == Verdict::Pass ? passed : o.verdict == Verdict::Fail ? failed : skipped)++;
    std::printf("%s criterion %d (%s): %s\n", tag, number, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("acceptance: %d passed, %d failed, %d skipped\n", passed, failed, skipped);
  return failed == 0 ? 0 : 1;
}
