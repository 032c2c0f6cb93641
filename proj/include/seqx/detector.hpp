#pragma once

// Inference-time decoding and the two zero-shot sentence baselines.

#include <span>
#include <string>
#include <vector>

#include "seqx/backend.hpp"
#include "seqx/encoder.hpp"
#include "seqx/features.hpp"
#include "seqx/prediction.hpp"

namespace seqx {

/// Majority vote over the categories of B-/I- labels; ties go to the
/// category that appears first. O labels do not vote; an all-O (or empty)
/// input throws InputError.
std::string decode_sentence(std::span<const WordLabel> labels);
std::string decode_document(std::span<const WordLabel> labels);

/// Pads documents to the longest one; feats are cast to float.
SequenceBatch<float> batch_documents(const std::vector<const LabeledDocument*>& docs);

/// Highest-scoring non-O label per position of logits [positions x labels].
std::vector<WordLabel> argmax_labels(const Tensor<float>& logits, std::size_t first_row,
                                     std::size_t count, const LabelSet& labels);

/// Runs the model over docs (in batches) and decodes each one. Sentence
/// boundaries come from the stored spans. At document level the sentence
/// list is left empty.
std::vector<PredictionResult> predict(const Encoder& model, const LabelSet& labels,
                                      const std::vector<LabeledDocument>& docs, Level level,
                                      std::size_t batch_size = 16);

// ---------------------------------------------------------------------------
// log p(x) baseline

struct SentenceScore {
  double score = 0.0;       // mean word log probability
  double perplexity = 0.0;  // exp(-score)
};

SentenceScore logp_score(std::span<const double> word_logprobs);

struct ThresholdRule {
  enum class Direction { kBelowIsAi, kAboveIsAi };
  double threshold = 0.0;
  Direction direction = Direction::kAboveIsAi;
  double train_macro_f1 = 0.0;
  /// All scores were identical; the rule cannot separate anything.
  bool degenerate = false;

  bool predicts_ai(double score) const {
    return direction == Direction::kBelowIsAi ? score < threshold : score > threshold;
  }
};

std::string to_string(ThresholdRule::Direction d);

/// Grid search over midpoints of the sorted unique scores in both
/// directions, maximizing binary macro-F1; ties go to the smaller threshold.
/// Throws InputError unless both classes are present.
ThresholdRule fit_threshold(std::span<const double> scores, const std::vector<bool>& is_ai);

// ---------------------------------------------------------------------------
// DetectGPT-style perturbation z-score

inline constexpr std::size_t kDefaultPerturbations = 40;
inline constexpr double kSigmaFloor = 1e-6;

struct PerturbationScore {
  double z = 0.0;
  double original = 0.0;   // ll of the sentence
  double mean = 0.0;       // mean ll of the perturbations
  double sigma = 0.0;      // population standard deviation, after flooring
  bool degenerate = false;  // sigma was floored
};

/// z = (original - mean(perturbed)) / max(sigma, kSigmaFloor).
PerturbationScore perturbation_zscore(double original, std::span<const double> perturbed);

/// Mean word log probability of text under one backend.
double mean_word_logprob(const BackendClient& backend, const std::string& text);

PerturbationScore detectgpt_z(const std::string& sentence, const BackendClient& backend,
                              std::size_t n = kDefaultPerturbations);

/// Text of a sentence span: from its first word's start to its last word's end.
std::string span_text(const LabeledDocument& doc, const SentenceSpan& span);

}  // namespace seqx
