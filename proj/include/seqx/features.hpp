#pragma once

// Labeled documents, word-level B/I labels, sentence segmentation, and the
// JSON-lines dataset format shared by every pipeline stage.

#include <optional>
#include <string>
#include <vector>

#include "seqx/alignment.hpp"

namespace seqx {

inline constexpr const char* kHumanCategory = "HUMAN";
inline constexpr const char* kAiCategory = "AI";

/// Closed, ordered set of provenance categories for one dataset.
class CategorySet {
 public:
  CategorySet() = default;
  explicit CategorySet(std::vector<std::string> names);

  static CategorySet binary() { return CategorySet({kAiCategory, kHumanCategory}); }

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  bool contains(const std::string& name) const;
  /// Throws InputError for unknown names.
  std::size_t index_of(const std::string& name) const;
  const std::string& name(std::size_t index) const { return names_.at(index); }

  bool operator==(const CategorySet&) const = default;

 private:
  std::vector<std::string> names_;
};

struct WordLabel {
  enum class Kind { kBegin, kInside, kOutside };
  Kind kind = Kind::kOutside;
  std::string category;  // empty for O

  static WordLabel begin(std::string c) { return {Kind::kBegin, std::move(c)}; }
  static WordLabel inside(std::string c) { return {Kind::kInside, std::move(c)}; }
  static WordLabel outside() { return {}; }

  std::string to_string() const;
  /// "B-AI", "I-HUMAN", "O".
  static WordLabel parse(const std::string& text);
  bool operator==(const WordLabel&) const = default;
};

/// Maps word labels to classifier indices: 0 = O, 1 + 2c = B-c, 2 + 2c = I-c.
class LabelSet {
 public:
  explicit LabelSet(CategorySet categories) : categories_(std::move(categories)) {}

  std::size_t size() const { return 2 * categories_.size() + 1; }
  std::size_t index_of(const WordLabel& label) const;
  WordLabel label(std::size_t index) const;
  const CategorySet& categories() const { return categories_; }

 private:
  CategorySet categories_;
};

struct SentenceSpan {
  std::size_t start_word = 0;  // inclusive
  std::size_t end_word = 0;    // exclusive
  std::string category;

  std::size_t size() const { return end_word - start_word; }
  bool operator==(const SentenceSpan&) const = default;
};

/// Throws InputError unless spans partition [0, t) in order.
void check_partition(const std::vector<SentenceSpan>& spans, std::size_t t);

/// B-c at each span start and I-c for the rest of the span.
std::vector<WordLabel> expand_labels(const std::vector<SentenceSpan>& spans, std::size_t t);

/// Rule-based segmentation into word-index spans (category left empty).
/// A sentence ends at a word ending in '!' or '?', or at a word ending in
/// '.' that is followed by a capitalized word or the end of the text and is
/// not a listed abbreviation. The last word always closes a sentence.
std::vector<SentenceSpan> segment_sentences(const std::string& text);
std::vector<SentenceSpan> segment_words(const std::vector<WordSpan>& words);

struct LabeledDocument {
  std::string id;
  std::string text;
  WordFeatureSequence features;  // words always present; feats may have 0 columns
  std::vector<SentenceSpan> spans;

  const std::vector<WordSpan>& words() const { return features.words; }
  std::size_t length() const { return features.words.size(); }
  bool operator==(const LabeledDocument&) const = default;
};

/// Builds a document from text and spans; words come from the whitespace tokenizer.
LabeledDocument make_document(std::string id, std::string text, std::vector<SentenceSpan> spans);

struct Dataset {
  CategorySet categories;
  std::vector<std::string> backends;  // feature column order
  std::vector<LabeledDocument> docs;

  bool operator==(const Dataset&) const = default;
};

/// JSON-lines: a "#schema {...}" header, then one document per line. An
/// empty dataset is written as an empty file.
void save_dataset(const Dataset& dataset, const std::string& path);
std::string serialize_dataset(const Dataset& dataset);
/// Throws InputError naming the offending line.
Dataset load_dataset(const std::string& path);
Dataset parse_dataset(const std::string& content);

/// Human corpus input: JSON-lines {id, text}.
struct HumanDocument {
  std::string id;
  std::string text;
};
std::vector<HumanDocument> load_corpus(const std::string& path);
void save_corpus(const std::vector<HumanDocument>& corpus, const std::string& path);

}  // namespace seqx
