// Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "seqx/alignment.hpp"
#include "seqx/backend.hpp"
#include "seqx/benchbuilder.hpp"
#include "seqx/cli.hpp"
#include "seqx/detector.hpp"
#include "seqx/encoder.hpp"
#include "seqx/evalkit.hpp"
#include "seqx/mock_backend.hpp"
#include "seqx/pipeline.hpp"
#include "seqx/random.hpp"
#include "seqx/runtime.hpp"
#include "seqx/trainer.hpp"

namespace {

using namespace seqx;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome alignment_suite() {
  const auto t0 = Clock::now();
  Rng rng(1000);
  std::size_t failures = 0;
  const std::vector<std::string> alphabet{"a", "e", "k", "t", "s", "\xc3\xa9", "\xe2\x82\xac", ",", "."};
  for (int iter = 0; iter < 1000; ++iter) {
    std::string text;
    const auto nwords = 1 + rng.below(30);
    for (std::size_t w = 0; w < nwords; ++w) {
      if (w > 0) text += std::string(1 + rng.below(2), rng.below(5) == 0 ? '\n' : ' ');
      const auto len = 1 + rng.below(8);
      for (std::size_t c = 0; c < len; ++c) text += alphabet[rng.below(alphabet.size())];
    }
    MockOptions opt;
    opt.mode = MockOptions::Mode::kSynthetic;
    opt.piece = rng.below(5);
    opt.attach_space = rng.below(2) == 1;
    MockBackend mock("fuzz" + std::to_string(iter % 7), opt);
    const auto resp = mock.logprobs(text);
    const auto words = whitespace_words(text);
    const auto got = align(resp.tokens, words, text.size());

    // Every token counted exactly once, and each word's value is the mean of
    // the tokens inside it (mock tokens never cross word boundaries).
    std::size_t counted = 0;
    for (auto c : got.token_counts) counted += c;
    bool ok = counted == resp.tokens.size() && !got.truncated;
    std::vector<double> sum(words.size(), 0.0);
    std::vector<std::size_t> cnt(words.size(), 0);
    for (const auto& t : resp.tokens) {
      for (std::size_t w = 0; w < words.size(); ++w) {
        if (t.end > words[w].start && t.end <= words[w].end) {
          sum[w] += t.logprob;
          ++cnt[w];
        }
      }
    }
    for (std::size_t w = 0; ok && w < words.size(); ++w) {
      ok = cnt[w] == got.token_counts[w] &&
           std::abs(got.logprobs[w] - sum[w] / static_cast<double>(cnt[w])) <= 1e-12;
    }

    // One token per word reproduces the token values exactly.
    std::vector<TokenLogProb> per_word;
    for (const auto& w : words) per_word.push_back({w.text, w.start, w.end, -rng.uniform(0.0, 12.0)});
    const auto exact = align(per_word, words, text.size());
    for (std::size_t w = 0; ok && w < words.size(); ++w) ok = exact.logprobs[w] == per_word[w].logprob;
    if (!ok) ++failures;
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && secs < 10.0,
          "1000 cases, " + std::to_string(failures) + " failures, " + fmt("%.2f s", secs) + " (limit 10 s)"};
}

// ---------------------------------------------------------------------------

Outcome gradient_check() {
  const auto t0 = Clock::now();
  EncoderConfig cfg;  // default architecture
  cfg.dropout = 0.0;  // finite differences need a deterministic objective
  auto enc = BasicEncoder<double>::init(cfg, 77);
  Rng rng(78);
  SequenceBatch<double> batch;
  batch.batch = 1;
  batch.length = 12;
  batch.channels = 4;
  for (std::size_t i = 0; i < 12 * 4; ++i) batch.feats.push_back(-rng.uniform(0.0, 10.0));
  batch.mask.assign(12, 1);
  Tensor<double> w({12, cfg.labels});
  for (auto& v : w.values()) v = rng.uniform(-1.0, 1.0);
  auto objective = [&] {
    const auto out = enc.forward(batch);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += w[i] * out[i];
    return s;
  };
  ForwardCache<double> cache;
  enc.forward(batch, cache, 0);
  const auto grads = enc.backward(cache, w);

  double worst = 0.0;
  std::string worst_name;
  std::size_t tensors = 0;
  std::size_t checks = 0;
  for (const auto& name : enc.parameters().names()) {
    auto& p = enc.parameters()[name];
    const auto& g = grads[name];
    // The largest-gradient entry plus a few seeded random ones.
    std::vector<std::size_t> idx;
    std::size_t arg = 0;
    for (std::size_t i = 1; i < g.size(); ++i) {
      if (std::abs(g[i]) > std::abs(g[arg])) arg = i;
    }
    idx.push_back(arg);
    for (int k = 0; k < 5; ++k) idx.push_back(rng.below(p.size()));
    for (auto i : idx) {
      const double orig = p[i];
      const double h = 1e-4 * std::max(1.0, std::abs(orig));
      p[i] = orig + h;
      const double up = objective();
      p[i] = orig - h;
      const double down = objective();
      p[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double rel = std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-6});
      if (rel > worst) {
        worst = rel;
        worst_name = name;
      }
      ++checks;
    }
    ++tensors;
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-3 && secs < 60.0,
          std::to_string(tensors) + " tensors, " + std::to_string(checks) + " entries, max rel err " +
              fmt("%.2e", worst) + " (" + worst_name + "), " + fmt("%.1f s", secs) + " (limits 1e-3, 60 s)"};
}

// ---------------------------------------------------------------------------

Outcome shape_padding_suite() {
  auto cfg = EncoderConfig{};
  const auto enc = Encoder::init(cfg, 5);
  Rng rng(6);
  double worst = 0.0;
  bool shapes_ok = true;
  for (std::size_t t : {1u, 2u, 7u, 64u, 1024u}) {
    SequenceBatch<float> one;
    one.batch = 1;
    one.length = t;
    one.channels = 4;
    for (std::size_t i = 0; i < t * 4; ++i) one.feats.push_back(static_cast<float>(-rng.uniform(0.0, 10.0)));
    one.mask.assign(t, 1);
    const auto ref = enc.forward(one);
    shapes_ok = shapes_ok && ref.shape() == std::vector<std::size_t>{t, cfg.labels};

    // Same sequence as the second row of a padded batch whose first row is longer.
    const std::size_t len = t + 9;
    SequenceBatch<float> padded;
    padded.batch = 2;
    padded.length = len;
    padded.channels = 4;
    padded.feats.assign(2 * len * 4, 0.0f);
    padded.mask.assign(2 * len, 0);
    for (std::size_t i = 0; i < len; ++i) {
      padded.mask[i] = 1;
      for (std::size_t c = 0; c < 4; ++c) padded.feats[i * 4 + c] = static_cast<float>(-rng.uniform(0.0, 10.0));
    }
    for (std::size_t i = 0; i < t; ++i) {
      padded.mask[len + i] = 1;
      for (std::size_t c = 0; c < 4; ++c) padded.feats[(len + i) * 4 + c] = one.feats[i * 4 + c];
    }
    for (std::size_t i = t; i < len; ++i) {
      for (std::size_t c = 0; c < 4; ++c) padded.feats[(len + i) * 4 + c] = 55.0f;  // ignored
    }
    const auto out = enc.forward(padded);
    shapes_ok = shapes_ok && out.shape() == std::vector<std::size_t>{2 * len, cfg.labels};
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t l = 0; l < cfg.labels; ++l) {
        worst = std::max(worst, static_cast<double>(std::abs(out.at(len + i, l) - ref.at(i, l))));
      }
    }
  }
  return {shapes_ok && worst <= 1e-6,
          std::string("t in {1,2,7,64,1024}, shapes ") + (shapes_ok ? "ok" : "WRONG") +
              ", max padding deviation " + fmt("%.2e", worst) + " (limit 1e-6)"};
}

// ---------------------------------------------------------------------------

// Counting oracle: the most frequent category; ties to the earliest word.
std::string oracle_decode(const std::vector<int>& seq) {
  int counts[3] = {0, 0, 0};
  int first[3] = {-1, -1, -1};
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i] == 0) continue;
    const int c = (seq[i] - 1) / 2;
    ++counts[c];
    if (first[c] < 0) first[c] = static_cast<int>(i);
  }
  int best = -1;
  for (int c = 0; c < 3; ++c) {
    if (counts[c] == 0) continue;
    if (best < 0 || counts[c] > counts[best] || (counts[c] == counts[best] && first[c] < first[best])) best = c;
  }
  static const char* names[3] = {"GPT2", "LLAMA", "HUMAN"};
  return best < 0 ? std::string() : names[best];
}

Outcome decode_oracle() {
  const LabelSet labels(CategorySet({"GPT2", "LLAMA", "HUMAN"}));
  std::vector<WordLabel> alphabet;
  for (std::size_t i = 0; i < labels.size(); ++i) alphabet.push_back(labels.label(i));
  std::size_t cases = 0;
  std::size_t mismatches = 0;
  for (std::size_t len = 1; len <= 8; ++len) {
    std::vector<int> seq(len, 0);
    std::vector<WordLabel> words(len, alphabet[0]);
    while (true) {
      const std::string expect = oracle_decode(seq);
      for (int which = 0; which < 2; ++which) {
        std::string got;
        try {
          got = which == 0 ? decode_sentence(words) : decode_document(words);
        } catch (const InputError&) {
          got.clear();
        }
        if (got != expect) ++mismatches;
      }
      ++cases;
      std::size_t pos = 0;
      while (pos < len && seq[pos] == 6) {
        seq[pos] = 0;
        words[pos] = alphabet[0];
        ++pos;
      }
      if (pos == len) break;
      ++seq[pos];
      words[pos] = alphabet[seq[pos]];
    }
  }
  return {mismatches == 0, std::to_string(cases) + " label sequences (t <= 8, 3 categories), " +
                               std::to_string(mismatches) + " mismatches"};
}

// ---------------------------------------------------------------------------

struct HandTable {
  std::vector<std::string> cats;
  std::vector<std::vector<std::size_t>> counts;
  std::vector<double> p, r, f1;
  double macro;
};

Outcome metrics_oracle() {
  const std::vector<HandTable> tables{
      {{"A", "B", "C"}, {{5, 0, 0}, {0, 3, 0}, {0, 0, 2}}, {1, 1, 1}, {1, 1, 1}, {1, 1, 1}, 1.0},
      {{"A", "B"}, {{1, 1}, {1, 1}}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, 0.5},
      {{"AI", "HUMAN"}, {{3, 0}, {2, 0}}, {0.6, 0.0}, {1.0, 0.0}, {0.75, 0.0}, 0.375},
      {{"A", "B"}, {{0, 0}, {0, 0}}, {0, 0}, {0, 0}, {0, 0}, 0.0},
      {{"A", "B"}, {{0, 4}, {0, 0}}, {0, 0}, {0, 0}, {0, 0}, 0.0},
      {{"A", "B", "C"},
       {{2, 1, 0}, {0, 3, 1}, {1, 0, 4}},
       {2.0 / 3, 0.75, 0.8},
       {2.0 / 3, 0.75, 0.8},
       {2.0 / 3, 0.75, 0.8},
       (2.0 / 3 + 0.75 + 0.8) / 3},
      {{"A", "B"}, {{1, 3}, {0, 6}}, {1.0, 2.0 / 3}, {0.25, 1.0}, {0.4, 0.8}, 0.6},
      {{"A", "B", "C"}, {{2, 0, 1}, {0, 2, 1}, {0, 0, 0}}, {1, 1, 0}, {2.0 / 3, 2.0 / 3, 0}, {0.8, 0.8, 0}, 0.8},
      {{"A", "B", "C", "D"},
       {{0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}, {1, 0, 0, 0}},
       {0, 0, 0, 0},
       {0, 0, 0, 0},
       {0, 0, 0, 0},
       0.0},
      {{"A", "B"}, {{10, 0}, {0, 0}}, {1, 0}, {1, 0}, {1, 0}, 1.0},
  };
  std::size_t bad = 0;
  bool diagonal_exact = false;
  for (std::size_t k = 0; k < tables.size(); ++k) {
    const auto& h = tables[k];
    ConfusionTable t{CategorySet(h.cats)};
    for (std::size_t g = 0; g < h.cats.size(); ++g) {
      for (std::size_t q = 0; q < h.cats.size(); ++q) t.add(g, q, h.counts[g][q]);
    }
    const auto m = metrics(t);
    bool ok = std::abs(m.macro_f1 - h.macro) < 1e-12;
    for (std::size_t c = 0; c < h.cats.size(); ++c) {
      ok = ok && std::abs(m.per_category[c].precision - h.p[c]) < 1e-12 &&
           std::abs(m.per_category[c].recall - h.r[c]) < 1e-12 &&
           std::abs(m.per_category[c].f1 - h.f1[c]) < 1e-12;
    }
    if (k == 0) diagonal_exact = m.macro_f1 == 1.0;
    if (!ok) ++bad;
  }
  return {bad == 0 && diagonal_exact, std::to_string(tables.size()) + " hand tables, " + std::to_string(bad) +
                                          " mismatches, diagonal macro-F1 " +
                                          (diagonal_exact ? "exactly 1.0" : "NOT 1.0")};
}

// ---------------------------------------------------------------------------

const char* kRoster =
    "[gpt2]\nendpoint = mock://synthetic?slot=0\nkind = causal-lm\n"
    "[gptneo]\nendpoint = mock://synthetic?slot=1\nkind = causal-lm\n"
    "[gptj]\nendpoint = mock://synthetic?slot=2\nkind = causal-lm\n"
    "[llama]\nendpoint = mock://synthetic?slot=3\nkind = causal-lm\n";

struct Bench {
  Dataset train;
  Dataset test;
  double build_seconds = 0.0;
};

Bench build_synthetic_bench() {
  const auto t0 = Clock::now();
  const auto roster = connect(parse_roster(kRoster));
  const auto corpus = make_mock_corpus(150, 1);
  SynthesisConfig cfg;
  cfg.task = Task::kMixedBinary;
  cfg.seed = 3;
  cfg.max_new_tokens = 30;
  cfg.split_ratio = 500.0 / 600.0;
  const auto build = build_bench(corpus, roster, cfg);
  Bench out;
  out.train = extract_features(build.parts.at(0).train, roster, 4).dataset;
  out.test = extract_features(build.parts.at(0).test, roster, 4).dataset;
  out.build_seconds = seconds_since(t0);
  return out;
}

struct TrainedScore {
  double test_macro_f1 = 0.0;
  double seconds = 0.0;
  std::size_t epochs = 0;
};

TrainedScore train_and_score(const Bench& bench, bool use_cnn, bool use_transformer) {
  const auto t0 = Clock::now();
  auto [tr, va] = split(bench.train.docs, 0.9, 0);
  const Dataset train_set{bench.train.categories, bench.train.backends, tr};
  const Dataset val_set{bench.train.categories, bench.train.backends, va};
  EncoderConfig mcfg;
  mcfg.in_channels = bench.train.backends.size();
  mcfg.labels = LabelSet(bench.train.categories).size();
  mcfg.use_cnn = use_cnn;
  mcfg.use_transformer = use_transformer;
  TrainConfig tcfg;
  auto model = Encoder::init(mcfg, tcfg.seed);
  const auto report = train(model, train_set, val_set, tcfg);
  const LabelSet labels(bench.test.categories);
  const auto preds = predict(model, labels, bench.test.docs, Level::kSentence, 32);
  TrainedScore s;
  s.test_macro_f1 = metrics(confusion(preds, bench.test, Level::kSentence)).macro_f1;
  s.seconds = seconds_since(t0);
  s.epochs = report.epochs.size();
  return s;
}

Outcome synthetic_end_to_end(const Bench& bench, Outcome& ablation) {
  const auto full = train_and_score(bench, true, true);
  const double total = bench.build_seconds + full.seconds;
  const bool sizes = bench.train.docs.size() == 500 && bench.test.docs.size() == 100;
  Outcome e2e{sizes && full.test_macro_f1 >= 0.95 && total < 300.0,
              std::to_string(bench.train.docs.size()) + "/" + std::to_string(bench.test.docs.size()) +
                  " docs, sentence macro-F1 " + fmt("%.4f", full.test_macro_f1) + " after " +
                  std::to_string(full.epochs) + " epochs, " + fmt("%.1f s", total) + " (limits 0.95, 300 s)"};

  const auto cnn = train_and_score(bench, true, false);
  const auto tf = train_and_score(bench, false, true);
  const double bound = std::max(cnn.test_macro_f1, tf.test_macro_f1) - 0.02;
  ablation = {full.test_macro_f1 >= bound,
              "full " + fmt("%.4f", full.test_macro_f1) + ", cnn-only " + fmt("%.4f", cnn.test_macro_f1) +
                  ", transformer-only " + fmt("%.4f", tf.test_macro_f1) + " (full must be >= " +
                  fmt("%.4f", bound) + ")"};
  return e2e;
}

// ---------------------------------------------------------------------------

Outcome baseline_sanity(const Bench& bench) {
  const std::size_t column = 0;  // gpt2
  auto sentence_scores = [&](const Dataset& ds, std::vector<double>& scores, std::vector<bool>& ai) {
    for (const auto& doc : ds.docs) {
      for (const auto& s : doc.spans) {
        std::vector<double> lp;
        for (std::size_t w = s.start_word; w < s.end_word; ++w) lp.push_back(doc.features.feats.at(w, column));
        scores.push_back(logp_score(lp).score);
        ai.push_back(s.category == kAiCategory);
      }
    }
  };
  std::vector<double> train_scores, test_scores;
  std::vector<bool> train_ai, test_ai;
  sentence_scores(bench.train, train_scores, train_ai);
  sentence_scores(bench.test, test_scores, test_ai);
  const auto rule = fit_threshold(train_scores, train_ai);
  ConfusionTable t(CategorySet::binary());
  for (std::size_t i = 0; i < test_scores.size(); ++i) {
    t.add(test_ai[i] ? kAiCategory : kHumanCategory, rule.predicts_ai(test_scores[i]) ? kAiCategory : kHumanCategory);
  }
  const double test_f1 = metrics(t).macro_f1;

  BackendSpec spec;
  spec.name = "gpt2";
  spec.endpoint = "mock://synthetic?slot=0&perturb=identity";
  const BackendClient identity(spec, make_transport(spec));
  std::size_t flagged = 0;
  std::size_t tried = 0;
  for (std::size_t d = 0; d < 10; ++d) {
    const auto& doc = bench.test.docs[d];
    for (const auto& s : doc.spans) {
      const auto z = detectgpt_z(span_text(doc, s), identity, 10);
      if (z.degenerate && z.z == 0.0 && z.sigma == kSigmaFloor) ++flagged;
      ++tried;
    }
  }
  return {rule.train_macro_f1 >= 0.9 && flagged == tried,
          "logp threshold " + fmt("%.3f", rule.threshold) + " (" + to_string(rule.direction) +
              "), fit macro-F1 " + fmt("%.4f", rule.train_macro_f1) + ", held-out " + fmt("%.4f", test_f1) +
              " (limit 0.9); identity perturber: " + std::to_string(flagged) + "/" + std::to_string(tried) +
              " sentences z=0 and flagged"};
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "seqx_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto p = [&](const std::string& n) { return (dir / n).string(); };
  std::ofstream(dir / "roster.ini") << kRoster;
  bool ok = run_cli({"mock-corpus", "--out", p("corpus.jsonl"), "--n", "30", "--seed", "4"}) == 0 &&
            run_cli({"synth", "--corpus", p("corpus.jsonl"), "--roster", p("roster.ini"), "--out", p("bench"),
                     "--max-new-tokens", "30", "--seed", "5"}) == 0;
  std::vector<std::string> diffs;
  for (int run = 0; ok && run < 2; ++run) {
    const std::string r = std::to_string(run);
    ok = run_cli({"extract", "--in", p("bench/train.jsonl"), "--roster", p("roster.ini"), "--out",
                  p("train" + r + ".jsonl"), "--jobs", run == 0 ? "1" : "4"}) == 0 &&
         run_cli({"extract", "--in", p("bench/test.jsonl"), "--roster", p("roster.ini"), "--out",
                  p("test" + r + ".jsonl")}) == 0 &&
         run_cli({"train", "--train", p("train" + r + ".jsonl"), "--out", p("model" + r + ".ckpt"), "--log",
                  p("log" + r + ".jsonl"), "--epochs", "2", "--seed", "6"}) == 0 &&
         run_cli({"detect", "--model", p("model" + r + ".ckpt"), "--in", p("test" + r + ".jsonl"), "--out",
                  p("pred" + r + ".jsonl")}) == 0;
  }
  if (ok) {
    for (const char* stem : {"train", "test", "model", "log", "pred"}) {
      const std::string ext = std::string(stem) == "model" ? ".ckpt" : ".jsonl";
      const auto a = slurp(dir / (stem + std::string("0") + ext));
      const auto b = slurp(dir / (stem + std::string("1") + ext));
      if (a.empty() || a != b) diffs.push_back(stem);
    }
  }
  fs::remove_all(dir);
  std::string detail = ok ? "extract/train/detect outputs compared across two runs" : "a command failed";
  if (!diffs.empty()) {
    detail += "; differing:";
    for (const auto& d : diffs) detail += " " + d;
  } else if (ok) {
    detail += ", all byte-identical";
  }
  return {ok && diffs.empty(), detail};
}

void report(const std::string& name, const Outcome& o, int& failures) {
  std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

Outcome guarded(const std::function<Outcome()>& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return {false, std::string("error: ") + e.what()};
  }
}

}  // namespace

// With arguments, only the named criteria run.
int main(int argc, char** argv) {
  seqx::tune_allocator();
  const std::vector<std::string> only(argv + 1, argv + argc);
  auto selected = [&](const std::string& name) {
    return only.empty() || std::find(only.begin(), only.end(), name) != only.end();
  };
  int failures = 0;
  auto run = [&](const std::string& name, const std::function<Outcome()>& fn) {
    if (selected(name)) report(name, guarded(fn), failures);
  };
  run("alignment", alignment_suite);
  run("gradient-check", gradient_check);
  run("shape-padding", shape_padding_suite);
  run("decode-oracle", decode_oracle);
  run("metrics-oracle", metrics_oracle);

  if (selected("synthetic-e2e") || selected("baseline-sanity")) {
    Bench bench;
    const Outcome built = guarded([&] {
      bench = build_synthetic_bench();
      return Outcome{true, ""};
    });
    run("synthetic-e2e", [&] {
      if (!built.pass) return built;
      Outcome ablation{false, "not run"};
      const Outcome e2e = synthetic_end_to_end(bench, ablation);
      return Outcome{e2e.pass && ablation.pass, e2e.detail + "; ablation: " + ablation.detail};
    });
    run("baseline-sanity", [&] { return built.pass ? baseline_sanity(bench) : built; });
  }
  run("determinism", determinism);
  return failures == 0 ? 0 : 1;
}
