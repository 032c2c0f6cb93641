#include "seqx/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "seqx/checkpoint.hpp"
#include "seqx/detector.hpp"
#include "seqx/evalkit.hpp"

namespace seqx {

using json = nlohmann::ordered_json;

template <typename T>
LossResult<T> masked_cross_entropy(const Tensor<T>& logits, const std::vector<std::size_t>& gold,
                                   const std::vector<std::uint8_t>& mask) {
  const std::size_t rows = logits.rows();
  const std::size_t width = logits.row_stride();
  if (gold.size() != rows || mask.size() != rows) {
    throw ShapeError("loss: logits have " + std::to_string(rows) + " rows but " + std::to_string(gold.size()) +
                     " labels and " + std::to_string(mask.size()) + " mask entries");
  }
  LossResult<T> out;
  out.grad = Tensor<T>(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) out.positions += mask[r] ? 1 : 0;
  if (out.positions == 0) return out;
  const double inv = 1.0 / static_cast<double>(out.positions);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    if (gold[r] == 0) throw InputError("loss: gold label O at position " + std::to_string(r));
    if (gold[r] >= width) throw ShapeError("loss: gold label index out of range");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < width; ++j) mx = std::max(mx, static_cast<double>(logits.at(r, j)));
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) z += std::exp(static_cast<double>(logits.at(r, j)) - mx);
    const double log_z = mx + std::log(z);
    total += log_z - static_cast<double>(logits.at(r, gold[r]));
    for (std::size_t j = 0; j < width; ++j) {
      const double p = std::exp(static_cast<double>(logits.at(r, j)) - log_z);
      out.grad.at(r, j) = static_cast<T>((p - (j == gold[r] ? 1.0 : 0.0)) * inv);
    }
  }
  out.loss = total * inv;
  return out;
}

template LossResult<float> masked_cross_entropy(const Tensor<float>&, const std::vector<std::size_t>&,
                                                const std::vector<std::uint8_t>&);
template LossResult<double> masked_cross_entropy(const Tensor<double>&, const std::vector<std::size_t>&,
                                                 const std::vector<std::uint8_t>&);

std::vector<std::size_t> gold_indices(const std::vector<const LabeledDocument*>& docs, std::size_t length,
                                      const LabelSet& labels) {
  std::vector<std::size_t> gold(docs.size() * length, 0);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto tags = expand_labels(docs[i]->spans, docs[i]->length());
    for (std::size_t t = 0; t < tags.size(); ++t) gold[i * length + t] = labels.index_of(tags[t]);
  }
  return gold;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InputError("learning_rate must be positive");
  if (batch_size == 0) throw InputError("batch_size must be positive");
  if (max_epochs == 0) throw InputError("max_epochs must be positive");
  if (!(grad_clip_norm > 0.0)) throw InputError("grad_clip_norm must be positive");
  if (eval_every == 0) throw InputError("eval_every must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw InputError("betas must be in (0, 1)");
  if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
}

json TrainConfig::to_json() const {
  return json{{"learning_rate", learning_rate}, {"batch_size", batch_size}, {"max_epochs", max_epochs},
              {"grad_clip_norm", grad_clip_norm}, {"seed", seed}, {"eval_every", eval_every},
              {"patience", patience}, {"optimizer", "adam"}, {"beta1", beta1}, {"beta2", beta2},
              {"epsilon", epsilon}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.grad_clip_norm = j.value("grad_clip_norm", c.grad_clip_norm);
  c.seed = j.value("seed", c.seed);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.patience = j.value("patience", c.patience);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.validate();
  return c;
}

template <typename T>
double global_norm(const ParameterSet<T>& grads) {
  double sq = 0.0;
  for (const auto& name : grads.names()) {
    for (T g : grads[name].values()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(sq);
}

template <typename T>
double clip_gradients(ParameterSet<T>& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& name : grads.names()) {
      for (T& g : grads[name].values()) g = static_cast<T>(static_cast<double>(g) * scale);
    }
  }
  return norm;
}

template double global_norm(const ParameterSet<float>&);
template double global_norm(const ParameterSet<double>&);
template double clip_gradients(ParameterSet<float>&, double);
template double clip_gradients(ParameterSet<double>&, double);

Adam::Adam(const ParameterSet<float>& params, double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon), m_(params.zeros_like()), v_(params.zeros_like()) {}

void Adam::step(ParameterSet<float>& params, const ParameterSet<float>& grads, double learning_rate) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto b1 = static_cast<float>(beta1_);
  const auto b2 = static_cast<float>(beta2_);
  const auto step = static_cast<float>(learning_rate / c1);
  const auto rc2 = static_cast<float>(1.0 / std::sqrt(c2));
  const auto eps = static_cast<float>(epsilon_);
  for (const auto& name : params.names()) {
    float* p = params[name].data();
    const float* g = grads[name].data();
    float* m = m_[name].data();
    float* v = v_[name].data();
    const std::size_t n = params[name].size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      p[i] -= step * m[i] / (std::sqrt(v[i]) * rc2 + eps);
    }
  }
}

double validation_macro_f1(const Encoder& model, const Dataset& docs) {
  const LabelSet labels(docs.categories);
  const auto preds = predict(model, labels, docs.docs, Level::kSentence);
  return metrics(confusion(preds, docs, Level::kSentence)).macro_f1;
}

namespace {

void check_compatible(const Encoder& model, const Dataset& train_set, const Dataset& val_set) {
  if (train_set.categories != val_set.categories) throw InputError("train and validation categories differ");
  if (train_set.backends != val_set.backends) throw InputError("train and validation backend columns differ");
  const LabelSet labels(train_set.categories);
  if (labels.size() != model.config().labels) {
    throw InputError("dataset has " + std::to_string(labels.size()) + " labels but the model has " +
                     std::to_string(model.config().labels));
  }
  if (train_set.backends.size() != model.config().in_channels) {
    throw InputError("dataset has " + std::to_string(train_set.backends.size()) +
                     " feature columns but the model expects " + std::to_string(model.config().in_channels));
  }
  if (train_set.docs.empty()) throw InputError("training set is empty");
  if (val_set.docs.empty()) throw InputError("validation set is empty");
  for (const auto* set : {&train_set, &val_set}) {
    for (const auto& d : set->docs) {
      if (d.length() == 0) throw InputError("document " + d.id + " has no words");
    }
  }
}

}  // namespace

TrainReport train(Encoder& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config) {
  config.validate();
  check_compatible(model, train_set, val_set);
  const auto started = std::chrono::steady_clock::now();
  const LabelSet labels(train_set.categories);

  std::ofstream log;
  if (!config.log_path.empty()) {
    log.open(config.log_path, std::ios::binary);
    if (!log) throw InputError("cannot write training log " + config.log_path);
  }

  Adam adam(model.parameters(), config.beta1, config.beta2, config.epsilon);
  ParameterSet<float> best = model.parameters();
  TrainReport report;
  std::optional<std::size_t> best_epoch;

  std::vector<std::size_t> order(train_set.docs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    Rng rng(mix_seed(config.seed, epoch));
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      std::vector<const LabeledDocument*> chunk;
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i) {
        chunk.push_back(&train_set.docs[order[i]]);
      }
      const SequenceBatch<float> batch = batch_documents(chunk);
      const auto gold = gold_indices(chunk, batch.length, labels);
      ForwardCache<float> cache;
      const Tensor<float> logits = model.forward(batch, cache, rng.next());
      auto loss = masked_cross_entropy(logits, gold, batch.mask);
      if (!std::isfinite(loss.loss)) {
        throw Error(ErrorKind::kInternal, "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                              std::to_string(batches));
      }
      auto grads = model.backward(cache, loss.grad);
      clip_gradients(grads, config.grad_clip_norm);
      adam.step(model.parameters(), grads, config.learning_rate);
      loss_sum += loss.loss;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    const bool last = epoch + 1 == config.max_epochs;
    if ((epoch + 1) % config.eval_every == 0 || last) {
      rec.val_macro_f1 = validation_macro_f1(model, val_set);
      if (!best_epoch || *rec.val_macro_f1 > report.best_val_macro_f1) {
        best_epoch = epoch;
        report.best_val_macro_f1 = *rec.val_macro_f1;
        best = model.parameters();
        if (!config.checkpoint_path.empty()) {
          Checkpoint ckpt{model, train_set.categories, train_set.backends, config.to_json()};
          save_checkpoint(ckpt, config.checkpoint_path);
          report.best_checkpoint = config.checkpoint_path;
        }
      }
    }
    report.epochs.push_back(rec);
    if (log) {
      json line{{"epoch", rec.epoch}, {"train_loss", rec.train_loss}};
      if (rec.val_macro_f1) line["val_macro_f1"] = *rec.val_macro_f1;
      log << line.dump() << "\n" << std::flush;
    }
    if (best_epoch && epoch - *best_epoch >= config.patience) break;
  }

  report.best_epoch = best_epoch.value_or(0);
  model.parameters() = std::move(best);
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace seqx
