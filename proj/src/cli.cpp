#include "seqx/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "seqx/benchbuilder.hpp"
#include "seqx/checkpoint.hpp"
#include "seqx/detector.hpp"
#include "seqx/error.hpp"
#include "seqx/evalkit.hpp"
#include "seqx/http_transport.hpp"
#include "seqx/mock_backend.hpp"
#include "seqx/pipeline.hpp"
#include "seqx/trainer.hpp"

namespace seqx {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << content;
}

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw InputError("missing file " + path);
}

void log_line(const std::string& msg) { std::cerr << "seqx: " << msg << "\n"; }

// --- synth -------------------------------------------------------------------

struct SynthArgs {
  std::string corpus, roster, out, task = "binary", backends;
  std::uint64_t seed = 0;
  std::size_t max_new_tokens = 64;
  std::size_t min_prompt = 1, max_prompt = 3;
  bool doc_level = false, prompt_strip = false, ood = false;
  double split_ratio = 0.9;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_synth(const SynthArgs& a) {
  const auto started = Clock::now();
  require_file(a.corpus);
  require_file(a.roster);
  SynthesisConfig config;
  config.task = parse_task(a.task);
  config.backends = split_list(a.backends);
  config.seed = a.seed;
  config.max_new_tokens = a.max_new_tokens;
  config.min_prompt_sentences = a.min_prompt;
  config.max_prompt_sentences = a.max_prompt;
  config.doc_level = a.doc_level;
  config.prompt_strip = a.prompt_strip;
  config.split_ratio = a.split_ratio;
  const auto corpus = load_corpus(a.corpus);
  const auto roster = connect(load_roster(a.roster));
  BenchBuild build = a.ood ? build_ood(corpus, roster, config) : build_bench(corpus, roster, config);

  // The bench manifest doubles as this run's manifest.
  RunManifest run;
  run.command = "synth";
  run.config = config.resolved().to_json();
  run.inputs = {a.corpus, a.roster};
  run.outputs = {a.out};
  run.seed = a.seed;
  json merged = run.to_json(seconds_since(started));
  for (const auto& [k, v] : build.manifest.items()) merged[k] = v;
  build.manifest = std::move(merged);
  write_bench(build, a.out);
  log_line("built " + std::to_string(build.manifest["built"].get<std::size_t>()) + " documents, skipped " +
           std::to_string(build.manifest["skipped"].size()));
  return 0;
}

// --- extract -----------------------------------------------------------------

struct ExtractArgs {
  std::string in, roster, out;
  std::size_t jobs = 1;
};

int cmd_extract(const ExtractArgs& a) {
  const auto started = Clock::now();
  require_file(a.in);
  require_file(a.roster);
  const Dataset docs = load_dataset(a.in);
  const auto specs = load_roster(a.roster);
  const auto roster = connect(specs);
  ExtractResult result = extract_features(docs, roster, a.jobs);
  save_dataset(result.dataset, a.out);
  for (const auto& f : result.failures) {
    log_line("skipped " + f["id"].get<std::string>() + " (" + f["backend"].get<std::string>() +
             "): " + f["error"].get<std::string>());
  }
  RunManifest run;
  run.command = "extract";
  run.config = {{"jobs", a.jobs}};
  run.inputs = {a.in, a.roster};
  run.outputs = {a.out};
  json backends = json::array();
  for (const auto& s : specs) {
    backends.push_back({{"name", s.name}, {"endpoint", s.endpoint}, {"kind", to_string(s.kind)},
                        {"max_sequence_length", s.max_sequence_length}});
  }
  std::size_t truncated = 0;
  for (const auto& d : result.dataset.docs) truncated += d.features.truncated.empty() ? 0 : 1;
  run.extra = {{"backends", backends},
               {"documents", result.dataset.docs.size()},
               {"truncated_documents", truncated},
               {"failures", result.failures}};
  write_manifest(run, seconds_since(started), manifest_path_for(a.out));
  return 0;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::string train, val, out, log;
  double train_fraction = 0.9;
  TrainConfig config;
  EncoderConfig model;
  bool no_cnn = false, no_transformer = false;
};

int cmd_train(TrainArgs a) {
  const auto started = Clock::now();
  require_file(a.train);
  Dataset train_set = load_dataset(a.train);
  Dataset val_set;
  if (!a.val.empty()) {
    require_file(a.val);
    val_set = load_dataset(a.val);
    if (val_set.categories != train_set.categories) throw InputError("validation categories differ from training");
    if (val_set.backends != train_set.backends) throw InputError("validation backend columns differ from training");
  } else {
    auto [tr, va] = split(std::move(train_set.docs), a.train_fraction, a.config.seed);
    val_set.categories = train_set.categories;
    val_set.backends = train_set.backends;
    train_set.docs = std::move(tr);
    val_set.docs = std::move(va);
  }
  a.model.use_cnn = !a.no_cnn;
  a.model.use_transformer = !a.no_transformer;
  a.model.in_channels = train_set.backends.size();
  a.model.labels = LabelSet(train_set.categories).size();
  a.model.validate();
  a.config.checkpoint_path = a.out;
  a.config.log_path = a.log;

  Encoder model = Encoder::init(a.model, a.config.seed);
  const TrainReport report = train(model, train_set, val_set, a.config);
  save_checkpoint({model, train_set.categories, train_set.backends, a.config.to_json()}, a.out);
  log_line("best epoch " + std::to_string(report.best_epoch) + ", val macro-F1 " +
           std::to_string(report.best_val_macro_f1));

  RunManifest run;
  run.command = "train";
  run.config = {{"model", config_to_json(a.model)}, {"train", a.config.to_json()}};
  run.inputs = {a.train};
  if (!a.val.empty()) run.inputs.push_back(a.val);
  run.outputs = {a.out};
  if (!a.log.empty()) run.outputs.push_back(a.log);
  run.seed = a.config.seed;
  json epochs = json::array();
  for (const auto& e : report.epochs) {
    json r{{"epoch", e.epoch}, {"train_loss", e.train_loss}};
    if (e.val_macro_f1) r["val_macro_f1"] = *e.val_macro_f1;
    epochs.push_back(r);
  }
  run.extra = {{"epochs", epochs},
               {"best_epoch", report.best_epoch},
               {"best_val_macro_f1", report.best_val_macro_f1},
               {"parameters", model.parameter_count()}};
  write_manifest(run, seconds_since(started), manifest_path_for(a.out));
  return 0;
}

// --- detect ------------------------------------------------------------------

struct DetectArgs {
  std::string model, in, out, level = "sentence";
  std::size_t batch_size = 16;
};

void check_schema(const Checkpoint& ckpt, const Dataset& data) {
  if (ckpt.categories != data.categories) throw InputError("dataset categories do not match the model's");
  if (ckpt.backends != data.backends) throw InputError("dataset backend columns do not match the model's");
}

int cmd_detect(const DetectArgs& a) {
  const auto started = Clock::now();
  require_file(a.model);
  require_file(a.in);
  const Checkpoint ckpt = load_checkpoint(a.model);
  const Dataset data = load_dataset(a.in);
  check_schema(ckpt, data);
  const Level level = parse_level(a.level);
  const auto preds = predict(ckpt.model, LabelSet(ckpt.categories), data.docs, level, a.batch_size);
  save_predictions(preds, a.out);
  RunManifest run;
  run.command = "detect";
  run.config = {{"level", to_string(level)}, {"batch_size", a.batch_size}};
  run.inputs = {a.model, a.in};
  run.outputs = {a.out};
  write_manifest(run, seconds_since(started), manifest_path_for(a.out));
  return 0;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string pred, gold, out, csv, level = "sentence", method = "seqx";
};

int cmd_eval(const EvalArgs& a) {
  const auto started = Clock::now();
  require_file(a.pred);
  require_file(a.gold);
  const Level level = parse_level(a.level);
  const Metrics m = metrics(confusion(load_predictions(a.pred), load_dataset(a.gold), level));
  const std::string report = report_json(m, level);
  if (a.out.empty()) {
    std::cout << report;
  } else {
    write_text(a.out, report);
  }
  if (!a.csv.empty()) write_text(a.csv, report_csv(m, a.method));
  RunManifest run;
  run.command = "eval";
  run.config = {{"level", to_string(level)}, {"method", a.method}};
  run.inputs = {a.pred, a.gold};
  if (!a.out.empty()) run.outputs.push_back(a.out);
  if (!a.csv.empty()) run.outputs.push_back(a.csv);
  if (!run.outputs.empty()) write_manifest(run, seconds_since(started), manifest_path_for(run.outputs.front()));
  return 0;
}

// --- baseline ----------------------------------------------------------------

struct BaselineArgs {
  std::string method, train, test, roster, backend, out, histogram;
  std::size_t n = kDefaultPerturbations;
};

struct SentenceRow {
  std::size_t doc = 0;
  std::size_t sentence = 0;
  double score = 0.0;
  bool is_ai = false;
  bool degenerate = false;
};

std::vector<SentenceRow> score_sentences(const BaselineArgs& a, const Dataset& data, const BackendClient* client) {
  std::vector<SentenceRow> rows;
  std::size_t column = 0;
  if (a.method == "logp") {
    const auto it = std::find(data.backends.begin(), data.backends.end(), a.backend);
    if (it == data.backends.end()) throw InputError("dataset has no feature column for backend " + a.backend);
    column = static_cast<std::size_t>(it - data.backends.begin());
  }
  for (std::size_t d = 0; d < data.docs.size(); ++d) {
    const auto& doc = data.docs[d];
    for (std::size_t s = 0; s < doc.spans.size(); ++s) {
      const auto& span = doc.spans[s];
      SentenceRow row{d, s, 0.0, span.category != kHumanCategory, false};
      if (a.method == "logp") {
        std::vector<double> lp;
        for (std::size_t w = span.start_word; w < span.end_word; ++w) lp.push_back(doc.features.feats.at(w, column));
        row.score = logp_score(lp).score;
      } else {
        const PerturbationScore z = detectgpt_z(span_text(doc, span), *client, a.n);
        row.score = z.z;
        row.degenerate = z.degenerate;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

int cmd_baseline(const BaselineArgs& a) {
  const auto started = Clock::now();
  if (a.method != "logp" && a.method != "detectgpt") throw InputError("baseline must be logp or detectgpt");
  require_file(a.train);
  require_file(a.test);
  const Dataset train_set = load_dataset(a.train);
  const Dataset test_set = load_dataset(a.test);
  if (train_set.categories != CategorySet::binary() || test_set.categories != CategorySet::binary()) {
    throw InputError("baselines need binary AI/HUMAN datasets");
  }
  std::optional<BackendClient> client;
  if (a.method == "detectgpt") {
    require_file(a.roster);
    for (const auto& spec : load_roster(a.roster)) {
      if (spec.name == a.backend) client.emplace(spec, make_transport(spec));
    }
    if (!client) throw InputError("backend " + a.backend + " is not in the roster");
  }

  const auto train_rows = score_sentences(a, train_set, client ? &*client : nullptr);
  const auto test_rows = score_sentences(a, test_set, client ? &*client : nullptr);
  std::vector<double> scores;
  std::vector<bool> is_ai;
  for (const auto& r : train_rows) {
    scores.push_back(r.score);
    is_ai.push_back(r.is_ai);
  }
  const ThresholdRule rule = fit_threshold(scores, is_ai);

  std::vector<PredictionResult> preds(test_set.docs.size());
  for (std::size_t d = 0; d < test_set.docs.size(); ++d) {
    preds[d].id = test_set.docs[d].id;
    preds[d].word_labels.resize(test_set.docs[d].length());
  }
  for (const auto& r : test_rows) {
    const auto& span = test_set.docs[r.doc].spans[r.sentence];
    const std::string cat = rule.predicts_ai(r.score) ? kAiCategory : kHumanCategory;
    auto& p = preds[r.doc];
    p.sentences.push_back({{span.start_word, span.end_word, cat}, r.score});
    for (std::size_t w = span.start_word; w < span.end_word; ++w) {
      p.word_labels[w] = w == span.start_word ? WordLabel::begin(cat) : WordLabel::inside(cat);
    }
  }
  for (auto& p : preds) {
    if (!p.word_labels.empty()) p.document_category = decode_document(p.word_labels);
  }
  save_predictions(preds, a.out);

  if (!a.histogram.empty()) {
    std::ostringstream csv;
    csv << "split,score,gold\n";
    csv.precision(17);
    for (const auto* rows : {&train_rows, &test_rows}) {
      for (const auto& r : *rows) {
        csv << (rows == &train_rows ? "train" : "test") << "," << r.score << ","
            << (r.is_ai ? kAiCategory : kHumanCategory) << "\n";
      }
    }
    write_text(a.histogram, csv.str());
  }

  std::size_t degenerate = 0;
  for (const auto* rows : {&train_rows, &test_rows}) {
    for (const auto& r : *rows) degenerate += r.degenerate ? 1 : 0;
  }
  RunManifest run;
  run.command = "baseline " + a.method;
  run.config = {{"method", a.method}, {"backend", a.backend}};
  if (a.method == "detectgpt") run.config["n"] = a.n;
  run.inputs = {a.train, a.test};
  if (!a.roster.empty()) run.inputs.push_back(a.roster);
  run.outputs = {a.out};
  if (!a.histogram.empty()) run.outputs.push_back(a.histogram);
  run.extra = {{"rule",
                {{"threshold", rule.threshold},
                 {"direction", to_string(rule.direction)},
                 {"train_macro_f1", rule.train_macro_f1},
                 {"degenerate", rule.degenerate}}},
               {"degenerate_sentences", degenerate}};
  write_manifest(run, seconds_since(started), manifest_path_for(a.out));
  return 0;
}

// --- mock helpers --------------------------------------------------------------

struct MockCorpusArgs {
  std::string out;
  std::size_t n = 100;
  std::uint64_t seed = 0;
  std::size_t min_sentences = 4, max_sentences = 6;
};

int cmd_mock_corpus(const MockCorpusArgs& a) {
  save_corpus(make_mock_corpus(a.n, a.seed, a.min_sentences, a.max_sentences), a.out);
  return 0;
}

struct ServeArgs {
  std::string endpoint = "mock://synthetic", name = "mock", host = "127.0.0.1";
  int port = 8080;
};

int cmd_serve_mock(const ServeArgs& a) {
  auto backend = std::make_shared<MockBackend>(a.name, MockOptions::parse(a.endpoint));
  ProtocolServer server(a.name, backend);
  log_line("serving " + a.endpoint + " on http://" + a.host + ":" + std::to_string(a.port));
  server.listen_blocking(a.host, a.port);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Sentence-level detection of machine-generated text"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Synthesize a benchmark from a human corpus");
  c_synth->add_option("--corpus", synth.corpus, "Human corpus (JSON lines {id, text})")->required();
  c_synth->add_option("--roster", synth.roster, "Backend roster")->required();
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--task", synth.task, "particular | binary | multiclass")->capture_default_str();
  c_synth->add_option("--backends", synth.backends, "Comma-separated roster subset");
  c_synth->add_option("--seed", synth.seed)->capture_default_str();
  c_synth->add_option("--max-new-tokens", synth.max_new_tokens)->capture_default_str();
  c_synth->add_option("--min-prompt", synth.min_prompt)->capture_default_str();
  c_synth->add_option("--max-prompt", synth.max_prompt)->capture_default_str();
  c_synth->add_flag("--doc-level", synth.doc_level, "Document-level bench (prompt removed)");
  c_synth->add_flag("--prompt-strip", synth.prompt_strip);
  c_synth->add_flag("--ood", synth.ood, "Mark the build out-of-distribution");
  c_synth->add_option("--split-ratio", synth.split_ratio)->capture_default_str();

  ExtractArgs extract;
  auto* c_extract = app.add_subcommand("extract", "Extract word-level log-probability features");
  c_extract->add_option("--in", extract.in, "Documents dataset")->required();
  c_extract->add_option("--roster", extract.roster)->required();
  c_extract->add_option("--out", extract.out)->required();
  c_extract->add_option("--jobs", extract.jobs, "Concurrent backend requests")->capture_default_str();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train the sequence labeler");
  c_train->add_option("--train", tr.train, "Feature dataset")->required();
  c_train->add_option("--val", tr.val, "Validation dataset (default: split from --train)");
  c_train->add_option("--train-fraction", tr.train_fraction, "Fraction of --train kept for training when --val is absent")->capture_default_str();
  c_train->add_option("--out", tr.out, "Checkpoint path")->required();
  c_train->add_option("--log", tr.log, "JSON-lines epoch log");
  c_train->add_option("--seed", tr.config.seed)->capture_default_str();
  c_train->add_option("--lr", tr.config.learning_rate)->capture_default_str();
  c_train->add_option("--batch-size", tr.config.batch_size)->capture_default_str();
  c_train->add_option("--epochs", tr.config.max_epochs)->capture_default_str();
  c_train->add_option("--patience", tr.config.patience)->capture_default_str();
  c_train->add_option("--eval-every", tr.config.eval_every)->capture_default_str();
  c_train->add_option("--clip", tr.config.grad_clip_norm)->capture_default_str();
  c_train->add_flag("--no-cnn", tr.no_cnn, "Disable the convolution stack");
  c_train->add_flag("--no-transformer", tr.no_transformer, "Disable the attention layers");
  c_train->add_option("--model-dim", tr.model.model_dim)->capture_default_str();
  c_train->add_option("--heads", tr.model.heads)->capture_default_str();
  c_train->add_option("--layers", tr.model.layers)->capture_default_str();
  c_train->add_option("--ffn-dim", tr.model.ffn_dim)->capture_default_str();
  c_train->add_option("--dropout", tr.model.dropout)->capture_default_str();

  DetectArgs det;
  auto* c_detect = app.add_subcommand("detect", "Label documents with a trained model");
  c_detect->add_option("--model", det.model)->required();
  c_detect->add_option("--in", det.in)->required();
  c_detect->add_option("--out", det.out)->required();
  c_detect->add_option("--level", det.level, "sentence | document")->capture_default_str();
  c_detect->add_option("--batch-size", det.batch_size)->capture_default_str();

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Score predictions against gold labels");
  c_eval->add_option("--pred", ev.pred)->required();
  c_eval->add_option("--gold", ev.gold)->required();
  c_eval->add_option("--out", ev.out, "JSON report (default: stdout)");
  c_eval->add_option("--csv", ev.csv, "Table row CSV");
  c_eval->add_option("--level", ev.level)->capture_default_str();
  c_eval->add_option("--method", ev.method, "Row label for the CSV")->capture_default_str();

  BaselineArgs base;
  auto* c_base = app.add_subcommand("baseline", "Zero-shot threshold baselines");
  c_base->add_option("method", base.method, "logp | detectgpt")->required();
  c_base->add_option("--train", base.train, "Dataset used to fit the threshold")->required();
  c_base->add_option("--test", base.test)->required();
  c_base->add_option("--backend", base.backend, "Designated scoring backend")->required();
  c_base->add_option("--roster", base.roster, "Roster (detectgpt)");
  c_base->add_option("--n", base.n, "Perturbations per sentence")->capture_default_str();
  c_base->add_option("--out", base.out)->required();
  c_base->add_option("--histogram", base.histogram, "Per-sentence score CSV");

  MockCorpusArgs mc;
  auto* c_mc = app.add_subcommand("mock-corpus", "Write a synthetic human corpus");
  c_mc->add_option("--out", mc.out)->required();
  c_mc->add_option("--n", mc.n)->capture_default_str();
  c_mc->add_option("--seed", mc.seed)->capture_default_str();
  c_mc->add_option("--min-sentences", mc.min_sentences)->capture_default_str();
  c_mc->add_option("--max-sentences", mc.max_sentences)->capture_default_str();

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve-mock", "Serve a mock backend over HTTP");
  c_serve->add_option("--endpoint", serve.endpoint)->capture_default_str();
  c_serve->add_option("--name", serve.name)->capture_default_str();
  c_serve->add_option("--host", serve.host)->capture_default_str();
  c_serve->add_option("--port", serve.port)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*c_synth) return cmd_synth(synth);
    if (*c_extract) return cmd_extract(extract);
    if (*c_train) return cmd_train(tr);
    if (*c_detect) return cmd_detect(det);
    if (*c_eval) return cmd_eval(ev);
    if (*c_base) return cmd_baseline(base);
    if (*c_mc) return cmd_mock_corpus(mc);
    if (*c_serve) return cmd_serve_mock(serve);
  } catch (const Error& e) {
    std::cerr << "seqx: error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "seqx: error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "seqx: internal error: " << e.what() << "\n";
    return 4;
  }
  return 4;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("seqx");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace seqx
