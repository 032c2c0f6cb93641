#pragma once

// Sequence labeler over word-aligned log-probability features:
// same-padding 1-D conv stack -> projection to model_dim -> pre-norm
// self-attention layers with sinusoidal positions -> per-word linear head.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "seqx/tensor.hpp"

namespace seqx {

enum class Activation { kGelu, kIdentity };

struct EncoderConfig {
  std::size_t in_channels = 4;
  std::vector<std::size_t> conv_kernels{5, 3, 3, 3, 3};
  std::vector<std::size_t> conv_strides{1, 1, 1, 1, 1};
  std::vector<std::size_t> conv_channels{64, 128, 128, 128, 64};
  std::size_t model_dim = 512;
  std::size_t heads = 16;
  std::size_t layers = 2;
  std::size_t ffn_dim = 2048;
  double dropout = 0.1;
  std::size_t labels = 13;
  bool use_cnn = true;
  bool use_transformer = true;
  Activation conv_activation = Activation::kGelu;

  /// Throws InputError when the invariants do not hold.
  void validate() const;

  bool operator==(const EncoderConfig&) const = default;
};

/// Padded batch of feature sequences, [batch x length x channels].
template <typename T>
struct SequenceBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::size_t channels = 0;
  std::vector<T> feats;
  std::vector<std::uint8_t> mask;  // 1 = real word, 0 = padding

  static SequenceBatch single(const Tensor<T>& rows, std::vector<std::uint8_t> mask = {});
  std::size_t positions() const { return batch * length; }
};

/// Named parameter tensors in a fixed insertion order.
template <typename T>
class ParameterSet {
 public:
  Tensor<T>& add(const std::string& name, std::vector<std::size_t> shape);
  Tensor<T>& operator[](const std::string& name);
  const Tensor<T>& operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::string>& names() const { return names_; }
  std::size_t count() const;
  /// Same names and shapes, all zeros.
  ParameterSet zeros_like() const;

  bool operator==(const ParameterSet& other) const {
    return names_ == other.names_ && tensors_ == other.tensors_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> tensors_;
  std::map<std::string, std::size_t> index_;
};

/// Activations saved by a training-mode forward pass.
template <typename T>
struct ForwardCache {
  bool valid = false;
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::uint8_t> mask;
  std::vector<T> zero_mask;  // mask as 0/1 scalars per position

  struct Conv {
    std::vector<T> cols;  // im2col of the layer input
    std::vector<T> pre;   // pre-activation
  };
  std::vector<Conv> convs;
  std::vector<T> proj_in;

  struct LayerNorm {
    std::vector<T> normalized;
    std::vector<T> rstd;
  };
  struct Block {
    LayerNorm ln1, ln2;
    std::vector<T> attn_in;  // ln1 output
    std::vector<T> q, k, v;
    std::vector<T> probs;  // [batch x heads x length x length]
    std::vector<T> context;
    std::vector<T> attn_drop;  // dropout scale per element (0 or 1/(1-p))
    std::vector<T> ffn_in;     // ln2 output
    std::vector<T> hidden_pre;
    std::vector<T> hidden;
    std::vector<T> ffn_drop;
  };
  std::vector<Block> blocks;
  LayerNorm final_ln;
  std::vector<T> head_in;
};

template <typename T>
class BasicEncoder {
 public:
  BasicEncoder() = default;

  /// Fan-in scaled uniform weights, zero biases, unit layer-norm scales.
  static BasicEncoder init(const EncoderConfig& config, std::uint64_t seed);
  /// Wraps existing parameters; throws if names or shapes disagree with config.
  static BasicEncoder from_parameters(const EncoderConfig& config, ParameterSet<T> params);

  const EncoderConfig& config() const { return config_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.count(); }

  /// Inference: no dropout. Returns [batch*length x labels] logits.
  Tensor<T> forward(const SequenceBatch<T>& input) const;
  /// Training: dropout masks drawn from dropout_seed, activations cached.
  Tensor<T> forward(const SequenceBatch<T>& input, ForwardCache<T>& cache,
                    std::uint64_t dropout_seed) const;
  /// Gradients of sum(upstream * logits) for every parameter.
  ParameterSet<T> backward(const ForwardCache<T>& cache, const Tensor<T>& upstream) const;

  template <typename U>
  BasicEncoder<U> cast() const;

 private:
  Tensor<T> run(const SequenceBatch<T>& input, ForwardCache<T>* cache, bool train,
                std::uint64_t dropout_seed) const;

  EncoderConfig config_;
  ParameterSet<T> params_;
};

using Encoder = BasicEncoder<float>;

/// Parameter names and shapes implied by a config, in storage order.
std::vector<std::pair<std::string, std::vector<std::size_t>>> parameter_layout(
    const EncoderConfig& config);

/// Sinusoidal absolute position encoding value for (position, dimension).
double position_encoding(std::size_t position, std::size_t dim, std::size_t model_dim);

}  // namespace seqx
