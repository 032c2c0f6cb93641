#pragma once

// Benchmark synthesis: a human prompt of the first 1-3 sentences plus a
// backend continuation, labeled per sentence at generation time.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqx/backend.hpp"
#include "seqx/features.hpp"

namespace seqx {

enum class Task { kParticular, kMixedBinary, kMixedMulticlass };

std::string to_string(Task task);
/// Accepts particular | binary | multiclass (and the mixed-* spellings).
Task parse_task(const std::string& text);

struct SynthesisConfig {
  Task task = Task::kMixedBinary;
  std::vector<std::string> backends;  // roster subset by name; empty = whole roster
  std::uint64_t seed = 0;
  std::size_t max_new_tokens = 64;
  std::size_t min_prompt_sentences = 1;
  std::size_t max_prompt_sentences = 3;
  bool doc_level = false;     // forces one prompt sentence and prompt_strip
  bool prompt_strip = false;  // drop the prompt from the output text
  double split_ratio = 0.9;

  void validate() const;
  /// Applies the doc_level overrides.
  SynthesisConfig resolved() const;
  nlohmann::ordered_json to_json() const;
};

/// Seeded uniform choice in [min_prompt_sentences, max_prompt_sentences],
/// keyed by document id so that it does not depend on processing order.
std::size_t choose_prompt_sentences(const SynthesisConfig& config, const std::string& doc_id);

/// Category for text generated by a backend under a task.
std::string continuation_category(Task task, const BackendSpec& spec);
CategorySet task_categories(Task task, const std::vector<BackendSpec>& backends);

struct SynthesisOutcome {
  std::optional<LabeledDocument> doc;
  std::string skip_reason;  // set when doc is empty
  std::size_t prompt_sentences = 0;
};

/// Backend errors propagate; degenerate inputs and empty generations are
/// reported as skips.
SynthesisOutcome synthesize_doc(const HumanDocument& human, const BackendClient& backend,
                                const SynthesisConfig& config);

struct BenchPart {
  std::string name;  // backend name for the particular task, empty otherwise
  Dataset train;
  Dataset test;
};

struct BenchBuild {
  std::vector<BenchPart> parts;
  nlohmann::ordered_json manifest;
};

/// One document per (human doc, backend) pair, split train/test with the
/// config seed. The particular task yields one binary dataset per backend.
BenchBuild build_bench(const std::vector<HumanDocument>& corpus, const std::vector<BackendClient>& roster,
                       const SynthesisConfig& config, bool ood = false);
/// Same procedure over a held-out corpus, flagged OOD in the manifest.
BenchBuild build_ood(const std::vector<HumanDocument>& corpus, const std::vector<BackendClient>& roster,
                     const SynthesisConfig& config);

/// Writes train.jsonl / test.jsonl (under a per-backend directory for the
/// particular task) and manifest.json into out_dir.
void write_bench(const BenchBuild& build, const std::string& out_dir);

/// Human-like documents drawn from the mock lexicon.
std::vector<HumanDocument> make_mock_corpus(std::size_t n, std::uint64_t seed, std::size_t min_sentences = 4,
                                            std::size_t max_sentences = 6, std::size_t min_words = 5,
                                            std::size_t max_words = 9);

}  // namespace seqx
