#pragma once

#include <optional>
#include <string>
#include <vector>

#include "seqx/features.hpp"

namespace seqx {

enum class Level { kSentence, kDocument };

std::string to_string(Level level);
Level parse_level(const std::string& text);

struct SentencePrediction {
  SentenceSpan span;  // span.category holds the predicted category
  std::optional<double> score;

  bool operator==(const SentencePrediction&) const = default;
};

struct PredictionResult {
  std::string id;
  std::vector<WordLabel> word_labels;
  std::vector<SentencePrediction> sentences;
  std::string document_category;

  bool operator==(const PredictionResult&) const = default;
};

/// JSON-lines {id, word_labels, sentences:[{span, category, score?}], document_category}.
std::string serialize_predictions(const std::vector<PredictionResult>& preds);
void save_predictions(const std::vector<PredictionResult>& preds, const std::string& path);
std::vector<PredictionResult> load_predictions(const std::string& path);

}  // namespace seqx
