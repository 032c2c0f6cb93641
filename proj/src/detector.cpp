#include "seqx/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "seqx/alignment.hpp"
#include "seqx/error.hpp"
#include "seqx/evalkit.hpp"

namespace seqx {

namespace {

std::string majority(std::span<const WordLabel> labels) {
  // category -> (count, first position)
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].kind == WordLabel::Kind::kOutside) continue;
    auto [it, inserted] = counts.try_emplace(labels[i].category, 0, i);
    ++it->second.first;
  }
  if (counts.empty()) throw InputError("decode: span has no B-/I- labels");
  const std::string* best = nullptr;
  std::pair<std::size_t, std::size_t> best_key{0, 0};
  for (const auto& [cat, key] : counts) {
    if (!best || key.first > best_key.first ||
        (key.first == best_key.first && key.second < best_key.second)) {
      best = &cat;
      best_key = key;
    }
  }
  return *best;
}

}  // namespace

std::string decode_sentence(std::span<const WordLabel> labels) { return majority(labels); }
std::string decode_document(std::span<const WordLabel> labels) { return majority(labels); }

SequenceBatch<float> batch_documents(const std::vector<const LabeledDocument*>& docs) {
  SequenceBatch<float> b;
  b.batch = docs.size();
  if (docs.empty()) return b;
  b.channels = docs.front()->features.channels();
  for (const auto* d : docs) {
    if (d->features.channels() != b.channels) throw ShapeError("documents in a batch differ in feature width");
    b.length = std::max(b.length, d->length());
  }
  b.feats.assign(b.batch * b.length * b.channels, 0.0f);
  b.mask.assign(b.batch * b.length, 0);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& f = docs[i]->features.feats;
    for (std::size_t t = 0; t < docs[i]->length(); ++t) {
      b.mask[i * b.length + t] = 1;
      for (std::size_t c = 0; c < b.channels; ++c) {
        b.feats[(i * b.length + t) * b.channels + c] = static_cast<float>(f.at(t, c));
      }
    }
  }
  return b;
}

std::vector<WordLabel> argmax_labels(const Tensor<float>& logits, std::size_t first_row,
                                     std::size_t count, const LabelSet& labels) {
  const std::size_t width = logits.row_stride();
  std::vector<WordLabel> out;
  out.reserve(count);
  for (std::size_t r = first_row; r < first_row + count; ++r) {
    std::size_t best = 1;
    for (std::size_t j = 2; j < width; ++j) {
      if (logits.at(r, j) > logits.at(r, best)) best = j;
    }
    out.push_back(labels.label(best));
  }
  return out;
}

std::vector<PredictionResult> predict(const Encoder& model, const LabelSet& labels,
                                      const std::vector<LabeledDocument>& docs, Level level,
                                      std::size_t batch_size) {
  if (labels.size() != model.config().labels) {
    throw InputError("label vocabulary (" + std::to_string(labels.size()) + ") does not match the model (" +
                     std::to_string(model.config().labels) + ")");
  }
  std::vector<PredictionResult> out;
  out.reserve(docs.size());
  batch_size = std::max<std::size_t>(1, batch_size);
  for (std::size_t start = 0; start < docs.size(); start += batch_size) {
    std::vector<const LabeledDocument*> chunk;
    for (std::size_t i = start; i < std::min(docs.size(), start + batch_size); ++i) chunk.push_back(&docs[i]);
    const SequenceBatch<float> batch = batch_documents(chunk);
    const Tensor<float> logits = model.forward(batch);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const LabeledDocument& doc = *chunk[i];
      PredictionResult p;
      p.id = doc.id;
      p.word_labels = argmax_labels(logits, i * batch.length, doc.length(), labels);
      if (level == Level::kSentence) {
        for (const auto& s : doc.spans) {
          SentencePrediction sp;
          sp.span = {s.start_word, s.end_word,
                     decode_sentence(std::span<const WordLabel>(p.word_labels).subspan(s.start_word, s.size()))};
          p.sentences.push_back(std::move(sp));
        }
      }
      p.document_category = decode_document(p.word_labels);
      out.push_back(std::move(p));
    }
  }
  return out;
}

SentenceScore logp_score(std::span<const double> word_logprobs) {
  if (word_logprobs.empty()) throw InputError("logp_score: empty sentence");
  double sum = 0.0;
  for (double v : word_logprobs) sum += v;
  SentenceScore s;
  s.score = sum / static_cast<double>(word_logprobs.size());
  s.perplexity = std::exp(-s.score);
  return s;
}

std::string to_string(ThresholdRule::Direction d) {
  return d == ThresholdRule::Direction::kBelowIsAi ? "below-is-ai" : "above-is-ai";
}

namespace {

double binary_macro_f1(std::span<const double> scores, const std::vector<bool>& is_ai,
                       const ThresholdRule& rule) {
  ConfusionTable table(CategorySet::binary());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    table.add(is_ai[i] ? 0 : 1, rule.predicts_ai(scores[i]) ? 0 : 1);
  }
  return metrics(table).macro_f1;
}

}  // namespace

ThresholdRule fit_threshold(std::span<const double> scores, const std::vector<bool>& is_ai) {
  if (scores.size() != is_ai.size()) throw InputError("fit_threshold: scores and labels differ in length");
  const auto n_ai = static_cast<std::size_t>(std::count(is_ai.begin(), is_ai.end(), true));
  if (n_ai == 0 || n_ai == is_ai.size()) throw InputError("fit_threshold: both classes must be present");
  for (double s : scores) {
    if (!std::isfinite(s)) throw InputError("fit_threshold: non-finite score");
  }
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  ThresholdRule best;
  if (sorted.size() == 1) {
    best.threshold = sorted.front();
    best.degenerate = true;
    best.train_macro_f1 = binary_macro_f1(scores, is_ai, best);
    return best;
  }
  bool have = false;
  // Ascending thresholds with strict improvement keep the smaller one on ties.
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    const double mid = 0.5 * (sorted[i] + sorted[i + 1]);
    for (auto dir : {ThresholdRule::Direction::kBelowIsAi, ThresholdRule::Direction::kAboveIsAi}) {
      ThresholdRule rule;
      rule.threshold = mid;
      rule.direction = dir;
      rule.train_macro_f1 = binary_macro_f1(scores, is_ai, rule);
      if (!have || rule.train_macro_f1 > best.train_macro_f1) {
        best = rule;
        have = true;
      }
    }
  }
  return best;
}

PerturbationScore perturbation_zscore(double original, std::span<const double> perturbed) {
  if (perturbed.size() < 2) throw InputError("perturbation z-score needs at least 2 perturbations");
  PerturbationScore s;
  s.original = original;
  double sum = 0.0;
  for (double v : perturbed) sum += v;
  s.mean = sum / static_cast<double>(perturbed.size());
  double var = 0.0;
  for (double v : perturbed) var += (v - s.mean) * (v - s.mean);
  var /= static_cast<double>(perturbed.size());
  s.sigma = std::sqrt(var);
  if (s.sigma < kSigmaFloor) {
    s.sigma = kSigmaFloor;
    s.degenerate = true;
  }
  // Keep exact zero when the numerator vanishes under rounding noise.
  const double diff = original - s.mean;
  s.z = s.degenerate && std::abs(diff) < kSigmaFloor ? 0.0 : diff / s.sigma;
  return s;
}

double mean_word_logprob(const BackendClient& backend, const std::string& text) {
  const auto response = backend.fetch_logprobs(text);
  const auto words = whitespace_words(text);
  const auto aligned = align(response.tokens, words, text.size());
  return logp_score(aligned.logprobs).score;
}

PerturbationScore detectgpt_z(const std::string& sentence, const BackendClient& backend, std::size_t n) {
  if (n < 2) throw InputError("detectgpt_z: n must be >= 2");
  const double original = mean_word_logprob(backend, sentence);
  const Perturbations variants = backend.perturb(sentence, n);
  std::vector<double> lls;
  lls.reserve(n);
  for (const auto& v : variants.variants) lls.push_back(mean_word_logprob(backend, v));
  return perturbation_zscore(original, lls);
}

std::string span_text(const LabeledDocument& doc, const SentenceSpan& span) {
  const auto& words = doc.words();
  if (span.end_word > words.size() || span.start_word >= span.end_word) {
    throw InputError("span_text: span outside document " + doc.id);
  }
  const std::size_t begin = words[span.start_word].start;
  const std::size_t end = words[span.end_word - 1].end;
  return doc.text.substr(begin, end - begin);
}

}  // namespace seqx
