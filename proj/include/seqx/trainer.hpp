#pragma once

// Supervised training of the encoder on labeled feature datasets.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "seqx/encoder.hpp"
#include "seqx/error.hpp"
#include "seqx/features.hpp"
#include "seqx/random.hpp"

namespace seqx {

/// Deterministic seeded shuffle, then the first round(ratio * n) items go to
/// train. Both sides are kept non-empty. Throws InputError for fewer than 2
/// items or a ratio outside (0, 1).
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split(std::vector<T> items, double ratio, std::uint64_t seed) {
  if (items.size() < 2) throw InputError("split: need at least 2 documents");
  if (!(ratio > 0.0 && ratio < 1.0)) throw InputError("split: ratio must be in (0, 1)");
  Rng rng(seed);
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(items.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, items.size() - 1);
  std::pair<std::vector<T>, std::vector<T>> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? out.first : out.second).push_back(std::move(items[order[i]]));
  }
  return out;
}

template <typename T>
struct LossResult {
  double loss = 0.0;
  std::size_t positions = 0;  // non-pad positions averaged over
  Tensor<T> grad;             // d loss / d logits
};

/// Mean over mask=1 positions of -log softmax(logits)[gold]. gold holds one
/// label index per position (ignored at padding). A gold O (index 0) at a
/// real position throws InputError.
template <typename T>
LossResult<T> masked_cross_entropy(const Tensor<T>& logits, const std::vector<std::size_t>& gold,
                                   const std::vector<std::uint8_t>& mask);

/// Label indices for a padded batch of documents, 0 at padding.
std::vector<std::size_t> gold_indices(const std::vector<const LabeledDocument*>& docs, std::size_t length,
                                      const LabelSet& labels);

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 20;
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;
  std::size_t patience = 5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::string checkpoint_path;  // best model is written here when set
  std::string log_path;         // JSON-lines epoch log when set

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::ordered_json& j);
};

/// Global L2 norm over every tensor.
template <typename T>
double global_norm(const ParameterSet<T>& grads);

/// Rescales grads so the global norm is at most max_norm; returns the norm before clipping.
template <typename T>
double clip_gradients(ParameterSet<T>& grads, double max_norm);

class Adam {
 public:
  Adam(const ParameterSet<float>& params, double beta1, double beta2, double epsilon);
  void step(ParameterSet<float>& params, const ParameterSet<float>& grads, double learning_rate);
  std::size_t steps() const { return t_; }

 private:
  double beta1_, beta2_, epsilon_;
  std::size_t t_ = 0;
  ParameterSet<float> m_, v_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean of batch losses
  std::optional<double> val_macro_f1;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_macro_f1 = -1.0;
  std::string best_checkpoint;
  double wall_clock_seconds = 0.0;
};

/// Sentence-level macro-F1 of model on docs.
double validation_macro_f1(const Encoder& model, const Dataset& docs);

/// Trains in place; on return model holds the best-validation parameters.
/// Stops once patience epochs pass without a strict improvement, or at
/// max_epochs. A non-finite loss throws naming the epoch and batch.
TrainReport train(Encoder& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config);

}  // namespace seqx
