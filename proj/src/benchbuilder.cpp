#include "seqx/benchbuilder.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include "seqx/error.hpp"
#include "seqx/mock_backend.hpp"
#include "seqx/random.hpp"
#include "seqx/trainer.hpp"

namespace seqx {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string to_string(Task task) {
  switch (task) {
    case Task::kParticular:
      return "particular";
    case Task::kMixedBinary:
      return "binary";
    case Task::kMixedMulticlass:
      return "multiclass";
  }
  return "binary";
}

Task parse_task(const std::string& text) {
  if (text == "particular") return Task::kParticular;
  if (text == "binary" || text == "mixed-binary") return Task::kMixedBinary;
  if (text == "multiclass" || text == "mixed-multiclass") return Task::kMixedMulticlass;
  throw InputError("unknown task '" + text + "' (expected particular, binary or multiclass)");
}

void SynthesisConfig::validate() const {
  if (min_prompt_sentences < 1 || max_prompt_sentences > 3 || min_prompt_sentences > max_prompt_sentences) {
    throw InputError("prompt sentences must be a range within [1, 3]");
  }
  if (max_new_tokens == 0) throw InputError("max_new_tokens must be positive");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw InputError("split ratio must be in (0, 1)");
}

SynthesisConfig SynthesisConfig::resolved() const {
  SynthesisConfig c = *this;
  if (c.doc_level) {
    c.min_prompt_sentences = c.max_prompt_sentences = 1;
    c.prompt_strip = true;
  }
  return c;
}

json SynthesisConfig::to_json() const {
  return json{{"task", to_string(task)},
              {"backends", backends},
              {"seed", seed},
              {"max_new_tokens", max_new_tokens},
              {"prompt_sentences", {min_prompt_sentences, max_prompt_sentences}},
              {"doc_level", doc_level},
              {"prompt_strip", prompt_strip},
              {"split_ratio", split_ratio},
              // Sampling is left to each backend's own defaults.
              {"generation", {{"temperature", nullptr}, {"top_p", nullptr}}}};
}

std::size_t choose_prompt_sentences(const SynthesisConfig& config, const std::string& doc_id) {
  const SynthesisConfig c = config.resolved();
  Rng rng(mix_seed(c.seed, fnv1a(doc_id)));
  return c.min_prompt_sentences + rng.below(c.max_prompt_sentences - c.min_prompt_sentences + 1);
}

std::string continuation_category(Task task, const BackendSpec& spec) {
  if (task != Task::kMixedMulticlass) return kAiCategory;
  return spec.category.empty() ? default_category(spec.name) : spec.category;
}

CategorySet task_categories(Task task, const std::vector<BackendSpec>& backends) {
  if (task != Task::kMixedMulticlass) return CategorySet::binary();
  std::vector<std::string> names;
  for (const auto& b : backends) {
    const std::string c = continuation_category(task, b);
    if (c == kHumanCategory) throw InputError("backend " + b.name + " uses the reserved category HUMAN");
    if (std::find(names.begin(), names.end(), c) == names.end()) names.push_back(c);
  }
  names.push_back(kHumanCategory);
  return CategorySet(std::move(names));
}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return s.substr(first, last - first + 1);
}

}  // namespace

SynthesisOutcome synthesize_doc(const HumanDocument& human, const BackendClient& backend,
                                const SynthesisConfig& config) {
  const SynthesisConfig c = config.resolved();
  c.validate();
  SynthesisOutcome out;
  const auto words = whitespace_words(human.text);
  const auto sentences = segment_words(words);
  out.prompt_sentences = choose_prompt_sentences(c, human.id);
  if (sentences.size() < out.prompt_sentences + 1) {
    out.skip_reason = "human document has " + std::to_string(sentences.size()) + " sentences, need " +
                      std::to_string(out.prompt_sentences + 1);
    return out;
  }
  const std::size_t prompt_words = sentences[out.prompt_sentences - 1].end_word;
  const std::string prompt = human.text.substr(words.front().start, words[prompt_words - 1].end - words.front().start);

  const Generation gen = backend.generate(prompt, c.max_new_tokens);
  const std::string continuation = trim(gen.text);
  if (gen.end_of_sequence || continuation.empty()) {
    out.skip_reason = "empty generation";
    return out;
  }

  const std::string category = continuation_category(c.task, backend.spec());
  std::string text;
  std::vector<SentenceSpan> spans;
  if (!c.prompt_strip) {
    text = prompt + " ";
    for (std::size_t i = 0; i < out.prompt_sentences; ++i) {
      spans.push_back({sentences[i].start_word, sentences[i].end_word, kHumanCategory});
    }
  }
  const std::size_t offset = c.prompt_strip ? 0 : prompt_words;
  text += continuation;
  for (const auto& s : segment_sentences(continuation)) {
    spans.push_back({s.start_word + offset, s.end_word + offset, category});
  }

  // Structural label check: the concatenated text must tokenize into exactly
  // the prompt words followed by the continuation words.
  const std::size_t expected = offset + whitespace_words(continuation).size();
  LabeledDocument doc = make_document(human.id + ":" + backend.name(), std::move(text), std::move(spans));
  if (doc.length() != expected) throw Error(ErrorKind::kInternal, "synthesized word count mismatch for " + doc.id);
  out.doc = std::move(doc);
  return out;
}

namespace {

std::vector<const BackendClient*> select_backends(const std::vector<BackendClient>& roster,
                                                  const SynthesisConfig& config) {
  std::vector<const BackendClient*> out;
  if (config.backends.empty()) {
    for (const auto& b : roster) out.push_back(&b);
    return out;
  }
  for (const auto& name : config.backends) {
    const auto it = std::find_if(roster.begin(), roster.end(), [&](const auto& b) { return b.name() == name; });
    if (it == roster.end()) throw InputError("backend " + name + " is not in the roster");
    out.push_back(&*it);
  }
  return out;
}

}  // namespace

BenchBuild build_bench(const std::vector<HumanDocument>& corpus, const std::vector<BackendClient>& roster,
                       const SynthesisConfig& config, bool ood) {
  const SynthesisConfig c = config.resolved();
  c.validate();
  if (corpus.empty()) throw InputError("human corpus is empty");
  const auto backends = select_backends(roster, c);
  if (backends.empty()) throw InputError("no backends selected");
  std::vector<BackendSpec> specs;
  for (const auto* b : backends) specs.push_back(b->spec());
  const CategorySet categories = task_categories(c.task, specs);

  json skipped = json::array();
  json records = json::array();
  // Synthesized documents per backend, in corpus order.
  std::vector<std::vector<LabeledDocument>> per_backend(backends.size());
  std::vector<std::string> failed_backends;
  for (std::size_t bi = 0; bi < backends.size(); ++bi) {
    const BackendClient& backend = *backends[bi];
    for (const auto& human : corpus) {
      const std::string id = human.id + ":" + backend.name();
      SynthesisOutcome outcome;
      try {
        outcome = synthesize_doc(human, backend, c);
      } catch (const TransportError& e) {
        outcome.skip_reason = std::string("backend unreachable: ") + e.what();
      } catch (const ProtocolError& e) {
        outcome.skip_reason = std::string("backend error: ") + e.what();
      }
      if (!outcome.doc) {
        skipped.push_back({{"id", id}, {"reason", outcome.skip_reason}});
        continue;
      }
      records.push_back({{"id", id},
                         {"backend", backend.name()},
                         {"prompt_sentences", outcome.prompt_sentences},
                         {"ood", ood}});
      per_backend[bi].push_back(std::move(*outcome.doc));
    }
  }

  BenchBuild build;
  std::size_t built = 0;
  const auto make_part = [&](std::string name, std::vector<LabeledDocument> docs) {
    BenchPart part;
    part.name = std::move(name);
    part.train.categories = part.test.categories = categories;
    if (docs.size() >= 2) {
      auto [train, test] = split(std::move(docs), c.split_ratio, c.seed);
      part.train.docs = std::move(train);
      part.test.docs = std::move(test);
    } else {
      part.train.docs = std::move(docs);
    }
    built += part.train.docs.size() + part.test.docs.size();
    build.parts.push_back(std::move(part));
  };
  if (c.task == Task::kParticular) {
    for (std::size_t bi = 0; bi < backends.size(); ++bi) make_part(backends[bi]->name(), std::move(per_backend[bi]));
  } else {
    std::vector<LabeledDocument> all;
    for (auto& docs : per_backend) {
      for (auto& d : docs) all.push_back(std::move(d));
    }
    make_part("", std::move(all));
  }

  // Record which split each document landed in.
  std::map<std::string, std::string> split_of;
  for (const auto& part : build.parts) {
    for (const auto& d : part.train.docs) split_of[d.id] = "train";
    for (const auto& d : part.test.docs) split_of[d.id] = "test";
  }
  for (auto& r : records) r["split"] = split_of[r["id"].get<std::string>()];

  build.manifest = json{{"built", built},
                        {"skipped", std::move(skipped)},
                        {"ood", ood},
                        {"config", c.to_json()},
                        {"categories", categories.names()},
                        {"records", std::move(records)}};
  return build;
}

BenchBuild build_ood(const std::vector<HumanDocument>& corpus, const std::vector<BackendClient>& roster,
                     const SynthesisConfig& config) {
  return build_bench(corpus, roster, config, true);
}

void write_bench(const BenchBuild& build, const std::string& out_dir) {
  fs::create_directories(out_dir);
  for (const auto& part : build.parts) {
    const fs::path dir = part.name.empty() ? fs::path(out_dir) : fs::path(out_dir) / part.name;
    fs::create_directories(dir);
    save_dataset(part.train, (dir / "train.jsonl").string());
    save_dataset(part.test, (dir / "test.jsonl").string());
  }
  std::ofstream out(fs::path(out_dir) / "manifest.json", std::ios::binary);
  if (!out) throw InputError("cannot write manifest in " + out_dir);
  out << build.manifest.dump(2) << "\n";
}

std::vector<HumanDocument> make_mock_corpus(std::size_t n, std::uint64_t seed, std::size_t min_sentences,
                                            std::size_t max_sentences, std::size_t min_words,
                                            std::size_t max_words) {
  if (min_sentences == 0 || min_sentences > max_sentences || min_words < 2 || min_words > max_words) {
    throw InputError("invalid mock corpus shape");
  }
  std::vector<HumanDocument> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, i));
    const std::size_t sentences = min_sentences + rng.below(max_sentences - min_sentences + 1);
    std::string text;
    for (std::size_t s = 0; s < sentences; ++s) {
      if (!text.empty()) text.push_back(' ');
      text += mock_lexicon::human_sentence(rng, min_words + rng.below(max_words - min_words + 1));
    }
    out.push_back({"doc" + std::to_string(i), std::move(text)});
  }
  return out;
}

}  // namespace seqx
