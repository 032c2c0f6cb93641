#include "seqx/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "seqx/kernels.hpp"
#include "seqx/random.hpp"

namespace seqx {

namespace k = kernels;

void EncoderConfig::validate() const {
  if (in_channels == 0) throw InputError("encoder config: in_channels must be positive");
  if (conv_kernels.size() != conv_strides.size() || conv_kernels.size() != conv_channels.size()) {
    throw InputError("encoder config: conv kernels, strides and channels differ in length");
  }
  for (std::size_t i = 0; i < conv_kernels.size(); ++i) {
    if (conv_kernels[i] == 0 || conv_channels[i] == 0) {
      throw InputError("encoder config: conv layer " + std::to_string(i) + " has a zero size");
    }
    // Same-padding output length only holds for unit stride.
    if (conv_strides[i] != 1) {
      throw InputError("encoder config: conv stride must be 1 (layer " + std::to_string(i) + ")");
    }
  }
  if (use_cnn && conv_kernels.empty()) throw InputError("encoder config: use_cnn with no conv layers");
  if (!use_cnn && !use_transformer) {
    throw InputError("encoder config: at least one of use_cnn/use_transformer must be set");
  }
  if (model_dim == 0 || heads == 0 || model_dim % heads != 0) {
    throw InputError("encoder config: model_dim must be a positive multiple of heads");
  }
  if (use_transformer && (layers == 0 || ffn_dim == 0)) {
    throw InputError("encoder config: transformer needs layers and ffn_dim");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InputError("encoder config: dropout must be in [0,1)");
  if (labels == 0) throw InputError("encoder config: labels must be positive");
}

std::vector<std::pair<std::string, std::vector<std::size_t>>> parameter_layout(
    const EncoderConfig& config) {
  config.validate();
  std::vector<std::pair<std::string, std::vector<std::size_t>>> out;
  std::size_t width = config.in_channels;
  if (config.use_cnn) {
    for (std::size_t i = 0; i < config.conv_kernels.size(); ++i) {
      const std::string p = "conv." + std::to_string(i);
      out.push_back({p + ".weight", {config.conv_kernels[i], width, config.conv_channels[i]}});
      out.push_back({p + ".bias", {config.conv_channels[i]}});
      width = config.conv_channels[i];
    }
  }
  const std::size_t d = config.model_dim;
  out.push_back({"proj.weight", {width, d}});
  out.push_back({"proj.bias", {d}});
  if (config.use_transformer) {
    for (std::size_t l = 0; l < config.layers; ++l) {
      const std::string p = "blocks." + std::to_string(l);
      out.push_back({p + ".ln1.scale", {d}});
      out.push_back({p + ".ln1.shift", {d}});
      for (const char* name : {"query", "key", "value", "output"}) {
        out.push_back({p + ".attn." + name + ".weight", {d, d}});
        out.push_back({p + ".attn." + name + ".bias", {d}});
      }
      out.push_back({p + ".ln2.scale", {d}});
      out.push_back({p + ".ln2.shift", {d}});
      out.push_back({p + ".ffn.in.weight", {d, config.ffn_dim}});
      out.push_back({p + ".ffn.in.bias", {config.ffn_dim}});
      out.push_back({p + ".ffn.out.weight", {config.ffn_dim, d}});
      out.push_back({p + ".ffn.out.bias", {d}});
    }
    out.push_back({"final_ln.scale", {d}});
    out.push_back({"final_ln.shift", {d}});
  }
  out.push_back({"head.weight", {d, config.labels}});
  out.push_back({"head.bias", {config.labels}});
  return out;
}

double position_encoding(std::size_t position, std::size_t dim, std::size_t model_dim) {
  const double pair = static_cast<double>(dim - dim % 2);
  const double angle =
      static_cast<double>(position) / std::pow(10000.0, pair / static_cast<double>(model_dim));
  return dim % 2 == 0 ? std::sin(angle) : std::cos(angle);
}

// ---------------------------------------------------------------------------
// SequenceBatch / ParameterSet

template <typename T>
SequenceBatch<T> SequenceBatch<T>::single(const Tensor<T>& rows, std::vector<std::uint8_t> mask) {
  SequenceBatch out;
  out.batch = 1;
  out.length = rows.rows();
  out.channels = rows.row_stride();
  out.feats = rows.values();
  out.mask = mask.empty() ? std::vector<std::uint8_t>(out.length, 1) : std::move(mask);
  return out;
}

template <typename T>
Tensor<T>& ParameterSet<T>::add(const std::string& name, std::vector<std::size_t> shape) {
  if (contains(name)) throw InputError("duplicate parameter " + name);
  index_[name] = tensors_.size();
  names_.push_back(name);
  tensors_.emplace_back(std::move(shape));
  return tensors_.back();
}

template <typename T>
Tensor<T>& ParameterSet<T>::operator[](const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw InputError("unknown parameter " + name);
  return tensors_[it->second];
}

template <typename T>
const Tensor<T>& ParameterSet<T>::operator[](const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InputError("unknown parameter " + name);
  return tensors_[it->second];
}

template <typename T>
std::size_t ParameterSet<T>::count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

template <typename T>
ParameterSet<T> ParameterSet<T>::zeros_like() const {
  ParameterSet out;
  for (std::size_t i = 0; i < names_.size(); ++i) out.add(names_[i], tensors_[i].shape());
  return out;
}

// ---------------------------------------------------------------------------
// Construction

template <typename T>
BasicEncoder<T> BasicEncoder<T>::init(const EncoderConfig& config, std::uint64_t seed) {
  BasicEncoder enc;
  enc.config_ = config;
  Rng rng(seed);
  for (const auto& [name, shape] : parameter_layout(config)) {
    Tensor<T>& t = enc.params_.add(name, shape);
    const bool is_weight = name.ends_with(".weight");
    if (name.ends_with(".scale")) {
      t.fill(T{1});
    } else if (is_weight) {
      // Fan-in is every dimension except the output one.
      std::size_t fan_in = 1;
      for (std::size_t i = 0; i + 1 < shape.size(); ++i) fan_in *= shape[i];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
    }
  }
  return enc;
}

template <typename T>
BasicEncoder<T> BasicEncoder<T>::from_parameters(const EncoderConfig& config,
                                                 ParameterSet<T> params) {
  const auto layout = parameter_layout(config);
  if (layout.size() != params.names().size()) {
    throw ShapeError("parameter set has " + std::to_string(params.names().size()) +
                     " tensors, config implies " + std::to_string(layout.size()));
  }
  for (const auto& [name, shape] : layout) {
    if (!params.contains(name)) throw ShapeError("missing parameter " + name);
    if (params[name].shape() != shape) throw ShapeError("shape mismatch for parameter " + name);
  }
  BasicEncoder enc;
  enc.config_ = config;
  enc.params_ = std::move(params);
  return enc;
}

template <typename T>
template <typename U>
BasicEncoder<U> BasicEncoder<T>::cast() const {
  ParameterSet<U> out;
  for (const auto& name : params_.names()) {
    out.add(name, params_[name].shape()) = params_[name].template cast<U>();
  }
  return BasicEncoder<U>::from_parameters(config_, std::move(out));
}

// ---------------------------------------------------------------------------
// Building blocks

namespace {

template <typename T>
std::span<const T> cspan(const std::vector<T>& v) {
  return std::span<const T>(v.data(), v.size());
}

constexpr double kLayerNormEps = 1e-5;

template <typename T>
void layer_norm(std::span<const T> x, std::span<const T> scale, std::span<const T> shift,
                std::span<T> y, std::size_t rows, std::size_t dim,
                typename ForwardCache<T>::LayerNorm* cache) {
  if (cache) {
    cache->normalized.assign(rows * dim, T{0});
    cache->rstd.assign(rows, T{0});
  }
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < rows; ++i) {
    const T* xr = x.data() + i * dim;
    T mean{0};
    for (std::size_t j = 0; j < dim; ++j) mean += xr[j];
    mean /= static_cast<T>(dim);
    T var{0};
    for (std::size_t j = 0; j < dim; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<T>(dim);
    const T rstd = T{1} / std::sqrt(var + static_cast<T>(kLayerNormEps));
    T* yr = y.data() + i * dim;
    for (std::size_t j = 0; j < dim; ++j) {
      const T hat = (xr[j] - mean) * rstd;
      if (cache) cache->normalized[i * dim + j] = hat;
      yr[j] = hat * scale[j] + shift[j];
    }
    if (cache) cache->rstd[i] = rstd;
  }
}

// Accumulates into dx; writes scale/shift gradients.
template <typename T>
void layer_norm_backward(const typename ForwardCache<T>::LayerNorm& cache, std::span<const T> scale,
                         std::span<const T> dy, std::span<T> dx, std::span<T> dscale,
                         std::span<T> dshift, std::size_t rows, std::size_t dim) {
  std::vector<T> dhat(rows * dim);
  for (std::size_t j = 0; j < dim; ++j) {
    dscale[j] = T{0};
    dshift[j] = T{0};
  }
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      const T g = dy[i * dim + j];
      dscale[j] += g * cache.normalized[i * dim + j];
      dshift[j] += g;
    }
  }
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < rows; ++i) {
    const T* hat = cache.normalized.data() + i * dim;
    T mean_d{0}, mean_dh{0};
    for (std::size_t j = 0; j < dim; ++j) {
      const T d = dy[i * dim + j] * scale[j];
      dhat[i * dim + j] = d;
      mean_d += d;
      mean_dh += d * hat[j];
    }
    mean_d /= static_cast<T>(dim);
    mean_dh /= static_cast<T>(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      dx[i * dim + j] += cache.rstd[i] * (dhat[i * dim + j] - mean_d - hat[j] * mean_dh);
    }
  }
}

template <typename T>
std::vector<T> dropout_scales(std::size_t n, double rate, Rng& rng) {
  std::vector<T> scales(n, T{1});
  if (rate <= 0.0) return scales;
  const T keep = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& s : scales) s = rng.uniform() < rate ? T{0} : keep;
  return scales;
}

// Linear layer: y[rows x out] = x W + b.
template <typename T>
std::vector<T> linear(std::span<const T> x, const Tensor<T>& weight, const Tensor<T>& bias,
                      std::size_t rows) {
  const std::size_t in = weight.dim(0);
  const std::size_t out = weight.dim(1);
  std::vector<T> y(rows * out);
  k::gemm<T>(x, weight.span(), y, rows, in, out);
  k::add_bias<T>(y, bias.span(), rows, out);
  return y;
}

// Backward of linear: returns dx (if wanted), writes dW/db.
template <typename T>
std::vector<T> linear_backward(std::span<const T> x, const Tensor<T>& weight, std::span<const T> dy,
                               Tensor<T>& dweight, Tensor<T>& dbias, std::size_t rows,
                               bool need_dx) {
  const std::size_t in = weight.dim(0);
  const std::size_t out = weight.dim(1);
  k::gemm_tn<T>(x, dy, dweight.span(), in, rows, out);
  k::column_sums<T>(dy, dbias.span(), rows, out);
  std::vector<T> dx;
  if (need_dx) {
    dx.resize(rows * in);
    k::gemm_nt<T>(dy, weight.span(), dx, rows, out, in);
  }
  return dx;
}

}  // namespace

// ---------------------------------------------------------------------------
// Forward

template <typename T>
Tensor<T> BasicEncoder<T>::forward(const SequenceBatch<T>& input) const {
  return run(input, nullptr, false, 0);
}

template <typename T>
Tensor<T> BasicEncoder<T>::forward(const SequenceBatch<T>& input, ForwardCache<T>& cache,
                                   std::uint64_t dropout_seed) const {
  return run(input, &cache, true, dropout_seed);
}

template <typename T>
Tensor<T> BasicEncoder<T>::run(const SequenceBatch<T>& input, ForwardCache<T>* cache, bool train,
                               std::uint64_t dropout_seed) const {
  const EncoderConfig& cfg = config_;
  if (input.channels != cfg.in_channels) {
    throw ShapeError("feature width " + std::to_string(input.channels) + " != in_channels " +
                     std::to_string(cfg.in_channels));
  }
  if (input.length == 0 || input.batch == 0) throw InputError("forward: empty sequence");
  const std::size_t bsz = input.batch;
  const std::size_t len = input.length;
  const std::size_t rows = bsz * len;
  if (input.feats.size() != rows * input.channels || input.mask.size() != rows) {
    throw ShapeError("forward: batch buffers do not match batch x length x channels");
  }
  const double rate = train ? cfg.dropout : 0.0;
  Rng rng(dropout_seed);

  std::vector<T> zmask(rows);
  for (std::size_t i = 0; i < rows; ++i) zmask[i] = input.mask[i] ? T{1} : T{0};

  if (cache) {
    *cache = ForwardCache<T>{};
    cache->batch = bsz;
    cache->length = len;
    cache->mask = input.mask;
    cache->zero_mask = zmask;
  }

  // Padded rows enter as zeros so they look exactly like same-padding.
  std::vector<T> h(input.feats);
  std::size_t width = cfg.in_channels;
  for (std::size_t i = 0; i < rows; ++i) {
    if (!input.mask[i]) std::fill(h.begin() + i * width, h.begin() + (i + 1) * width, T{0});
  }

  if (cfg.use_cnn) {
    for (std::size_t l = 0; l < cfg.conv_kernels.size(); ++l) {
      const std::string p = "conv." + std::to_string(l);
      const std::size_t kw = cfg.conv_kernels[l];
      const std::size_t out_ch = cfg.conv_channels[l];
      std::vector<T> cols(rows * kw * width);
      k::im2col<T>(h, cols, bsz, len, width, kw, (kw - 1) / 2);
      std::vector<T> pre(rows * out_ch);
      k::gemm<T>(cols, params_[p + ".weight"].span(), pre, rows, kw * width, out_ch);
      k::add_bias<T>(pre, params_[p + ".bias"].span(), rows, out_ch);
      std::vector<T> act(pre.size());
      if (cfg.conv_activation == Activation::kGelu) {
        k::gelu<T>(pre, act);
      } else {
        act = pre;
      }
      for (std::size_t i = 0; i < rows; ++i) {
        if (!input.mask[i]) std::fill(act.begin() + i * out_ch, act.begin() + (i + 1) * out_ch, T{0});
      }
      if (cache) cache->convs.push_back({std::move(cols), std::move(pre)});
      h = std::move(act);
      width = out_ch;
    }
  }

  const std::size_t d = cfg.model_dim;
  if (cache) cache->proj_in = h;
  std::vector<T> x = linear<T>(h, params_["proj.weight"], params_["proj.bias"], rows);

  if (cfg.use_transformer) {
    std::vector<T> pe(len * d);
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t j = 0; j < d; ++j) pe[t * d + j] = static_cast<T>(position_encoding(t, j, d));
    }
    for (std::size_t b = 0; b < bsz; ++b) {
      for (std::size_t t = 0; t < len; ++t) {
        T* row = x.data() + (b * len + t) * d;
        for (std::size_t j = 0; j < d; ++j) row[j] += pe[t * d + j];
      }
    }
    const std::size_t heads = cfg.heads;
    const std::size_t hd = d / heads;
    const T score_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));

    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const std::string p = "blocks." + std::to_string(l);
      typename ForwardCache<T>::Block blk;

      std::vector<T> a(rows * d);
      layer_norm<T>(x, params_[p + ".ln1.scale"].span(), params_[p + ".ln1.shift"].span(), a, rows,
                    d, cache ? &blk.ln1 : nullptr);
      std::vector<T> q = linear<T>(a, params_[p + ".attn.query.weight"], params_[p + ".attn.query.bias"], rows);
      std::vector<T> kk = linear<T>(a, params_[p + ".attn.key.weight"], params_[p + ".attn.key.bias"], rows);
      std::vector<T> v = linear<T>(a, params_[p + ".attn.value.weight"], params_[p + ".attn.value.bias"], rows);

      std::vector<T> probs(bsz * heads * len * len, T{0});
      std::vector<T> ctx(rows * d, T{0});
#pragma omp parallel for collapse(2) schedule(static)
      for (std::size_t b = 0; b < bsz; ++b) {
        for (std::size_t hh = 0; hh < heads; ++hh) {
          T* pb = probs.data() + ((b * heads + hh) * len) * len;
          for (std::size_t i = 0; i < len; ++i) {
            const T* qi = q.data() + (b * len + i) * d + hh * hd;
            T* prow = pb + i * len;
            T maxv = -std::numeric_limits<T>::infinity();
            for (std::size_t j = 0; j < len; ++j) {
              if (!input.mask[b * len + j]) continue;
              const T* kj = kk.data() + (b * len + j) * d + hh * hd;
              T s{0};
              for (std::size_t c = 0; c < hd; ++c) s += qi[c] * kj[c];
              s *= score_scale;
              prow[j] = s;
              maxv = std::max(maxv, s);
            }
            T sum{0};
            for (std::size_t j = 0; j < len; ++j) {
              if (!input.mask[b * len + j]) continue;
              prow[j] = std::exp(prow[j] - maxv);
              sum += prow[j];
            }
            if (sum > T{0}) {
              for (std::size_t j = 0; j < len; ++j) prow[j] /= sum;
            }
            T* ci = ctx.data() + (b * len + i) * d + hh * hd;
            for (std::size_t j = 0; j < len; ++j) {
              if (prow[j] == T{0}) continue;
              const T* vj = v.data() + (b * len + j) * d + hh * hd;
              for (std::size_t c = 0; c < hd; ++c) ci[c] += prow[j] * vj[c];
            }
          }
        }
      }
      std::vector<T> o = linear<T>(ctx, params_[p + ".attn.output.weight"], params_[p + ".attn.output.bias"], rows);
      std::vector<T> attn_drop = dropout_scales<T>(rows * d, rate, rng);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += o[i] * attn_drop[i];

      std::vector<T> c(rows * d);
      layer_norm<T>(x, params_[p + ".ln2.scale"].span(), params_[p + ".ln2.shift"].span(), c, rows,
                    d, cache ? &blk.ln2 : nullptr);
      std::vector<T> hidden_pre = linear<T>(c, params_[p + ".ffn.in.weight"], params_[p + ".ffn.in.bias"], rows);
      std::vector<T> hidden(hidden_pre.size());
      k::gelu<T>(hidden_pre, hidden);
      std::vector<T> f = linear<T>(hidden, params_[p + ".ffn.out.weight"], params_[p + ".ffn.out.bias"], rows);
      std::vector<T> ffn_drop = dropout_scales<T>(rows * d, rate, rng);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += f[i] * ffn_drop[i];

      if (cache) {
        blk.attn_in = std::move(a);
        blk.q = std::move(q);
        blk.k = std::move(kk);
        blk.v = std::move(v);
        blk.probs = std::move(probs);
        blk.context = std::move(ctx);
        blk.attn_drop = std::move(attn_drop);
        blk.ffn_in = std::move(c);
        blk.hidden_pre = std::move(hidden_pre);
        blk.hidden = std::move(hidden);
        blk.ffn_drop = std::move(ffn_drop);
        cache->blocks.push_back(std::move(blk));
      }
    }
    std::vector<T> y(rows * d);
    layer_norm<T>(x, params_["final_ln.scale"].span(), params_["final_ln.shift"].span(), y, rows, d,
                  cache ? &cache->final_ln : nullptr);
    x = std::move(y);
  }

  if (cache) {
    cache->head_in = x;
    cache->valid = true;
  }
  std::vector<T> logits = linear<T>(x, params_["head.weight"], params_["head.bias"], rows);
  Tensor<T> out({rows, cfg.labels});
  out.values() = std::move(logits);
  return out;
}

// ---------------------------------------------------------------------------
// Backward

template <typename T>
ParameterSet<T> BasicEncoder<T>::backward(const ForwardCache<T>& cache,
                                          const Tensor<T>& upstream) const {
  if (!cache.valid) throw StateError("backward called without a training-mode forward cache");
  const EncoderConfig& cfg = config_;
  const std::size_t bsz = cache.batch;
  const std::size_t len = cache.length;
  const std::size_t rows = bsz * len;
  const std::size_t d = cfg.model_dim;
  if (upstream.size() != rows * cfg.labels) throw ShapeError("backward: upstream gradient shape");

  ParameterSet<T> grads = params_.zeros_like();

  std::vector<T> dx = linear_backward<T>(cache.head_in, params_["head.weight"], upstream.span(),
                                         grads["head.weight"], grads["head.bias"], rows, true);

  if (cfg.use_transformer) {
    std::vector<T> dpre(rows * d, T{0});
    layer_norm_backward<T>(cache.final_ln, params_["final_ln.scale"].span(), dx, dpre,
                           grads["final_ln.scale"].span(), grads["final_ln.shift"].span(), rows, d);
    dx = std::move(dpre);

    const std::size_t heads = cfg.heads;
    const std::size_t hd = d / heads;
    const T score_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));

    for (std::size_t li = cfg.layers; li-- > 0;) {
      const std::string p = "blocks." + std::to_string(li);
      const auto& blk = cache.blocks[li];

      // FFN sublayer: out = h1 + drop(ffn(ln2(h1))).
      std::vector<T> df(rows * d);
      for (std::size_t i = 0; i < df.size(); ++i) df[i] = dx[i] * blk.ffn_drop[i];
      std::vector<T> dhidden = linear_backward<T>(blk.hidden, params_[p + ".ffn.out.weight"], df,
                                                  grads[p + ".ffn.out.weight"], grads[p + ".ffn.out.bias"], rows, true);
      std::vector<T> dhidden_pre(dhidden.size());
      k::gelu_backward<T>(blk.hidden_pre, dhidden, dhidden_pre);
      std::vector<T> dc = linear_backward<T>(blk.ffn_in, params_[p + ".ffn.in.weight"], dhidden_pre,
                                             grads[p + ".ffn.in.weight"], grads[p + ".ffn.in.bias"], rows, true);
      // dx already carries the residual path.
      layer_norm_backward<T>(blk.ln2, params_[p + ".ln2.scale"].span(), dc, dx,
                             grads[p + ".ln2.scale"].span(), grads[p + ".ln2.shift"].span(), rows, d);

      // Attention sublayer: h1 = x + drop(attn(ln1(x))).
      std::vector<T> dout(rows * d);
      for (std::size_t i = 0; i < dout.size(); ++i) dout[i] = dx[i] * blk.attn_drop[i];
      std::vector<T> dctx = linear_backward<T>(blk.context, params_[p + ".attn.output.weight"], dout,
                                               grads[p + ".attn.output.weight"], grads[p + ".attn.output.bias"], rows, true);
      std::vector<T> dq(rows * d, T{0}), dk(rows * d, T{0}), dv(rows * d, T{0});
#pragma omp parallel for collapse(2) schedule(static)
      for (std::size_t b = 0; b < bsz; ++b) {
        for (std::size_t hh = 0; hh < heads; ++hh) {
          const T* pb = blk.probs.data() + ((b * heads + hh) * len) * len;
          std::vector<T> dp(len);
          for (std::size_t i = 0; i < len; ++i) {
            const T* prow = pb + i * len;
            const T* dci = dctx.data() + (b * len + i) * d + hh * hd;
            T dot{0};
            for (std::size_t j = 0; j < len; ++j) {
              dp[j] = T{0};
              if (prow[j] == T{0}) continue;
              const T* vj = blk.v.data() + (b * len + j) * d + hh * hd;
              T s{0};
              for (std::size_t c = 0; c < hd; ++c) s += dci[c] * vj[c];
              dp[j] = s;
              dot += s * prow[j];
            }
            const T* qi = blk.q.data() + (b * len + i) * d + hh * hd;
            T* dqi = dq.data() + (b * len + i) * d + hh * hd;
            for (std::size_t j = 0; j < len; ++j) {
              if (prow[j] == T{0}) continue;
              const T ds = prow[j] * (dp[j] - dot) * score_scale;
              const T* kj = blk.k.data() + (b * len + j) * d + hh * hd;
              T* dkj = dk.data() + (b * len + j) * d + hh * hd;
              T* dvj = dv.data() + (b * len + j) * d + hh * hd;
              for (std::size_t c = 0; c < hd; ++c) {
                dqi[c] += ds * kj[c];
                dkj[c] += ds * qi[c];
                dvj[c] += prow[j] * dci[c];
              }
            }
          }
        }
      }
      std::vector<T> da = linear_backward<T>(blk.attn_in, params_[p + ".attn.query.weight"], dq,
                                             grads[p + ".attn.query.weight"], grads[p + ".attn.query.bias"], rows, true);
      std::vector<T> da_k = linear_backward<T>(blk.attn_in, params_[p + ".attn.key.weight"], dk,
                                               grads[p + ".attn.key.weight"], grads[p + ".attn.key.bias"], rows, true);
      std::vector<T> da_v = linear_backward<T>(blk.attn_in, params_[p + ".attn.value.weight"], dv,
                                               grads[p + ".attn.value.weight"], grads[p + ".attn.value.bias"], rows, true);
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += da_k[i] + da_v[i];
      layer_norm_backward<T>(blk.ln1, params_[p + ".ln1.scale"].span(), da, dx,
                             grads[p + ".ln1.scale"].span(), grads[p + ".ln1.shift"].span(), rows, d);
    }
  }

  const bool need_proj_dx = cfg.use_cnn;
  std::vector<T> dh = linear_backward<T>(cache.proj_in, params_["proj.weight"], dx,
                                         grads["proj.weight"], grads["proj.bias"], rows, need_proj_dx);

  if (cfg.use_cnn) {
    for (std::size_t l = cfg.conv_kernels.size(); l-- > 0;) {
      const std::string p = "conv." + std::to_string(l);
      const auto& conv = cache.convs[l];
      const std::size_t kw = cfg.conv_kernels[l];
      const std::size_t out_ch = cfg.conv_channels[l];
      const std::size_t in_ch = l == 0 ? cfg.in_channels : cfg.conv_channels[l - 1];
      for (std::size_t i = 0; i < rows; ++i) {
        if (!cache.mask[i]) std::fill(dh.begin() + i * out_ch, dh.begin() + (i + 1) * out_ch, T{0});
      }
      std::vector<T> dpre(dh.size());
      if (cfg.conv_activation == Activation::kGelu) {
        k::gelu_backward<T>(conv.pre, dh, dpre);
      } else {
        dpre = dh;
      }
      const std::size_t width = kw * in_ch;
      k::gemm_tn<T>(conv.cols, dpre, grads[p + ".weight"].span(), width, rows, out_ch);
      k::column_sums<T>(dpre, grads[p + ".bias"].span(), rows, out_ch);
      if (l > 0) {
        std::vector<T> dcols(rows * width);
        k::gemm_nt<T>(dpre, params_[p + ".weight"].span(), dcols, rows, out_ch, width);
        dh.assign(rows * in_ch, T{0});
        k::col2im<T>(dcols, dh, bsz, len, in_ch, kw, (kw - 1) / 2);
      }
    }
  }
  return grads;
}

template struct SequenceBatch<float>;
template struct SequenceBatch<double>;
template class ParameterSet<float>;
template class ParameterSet<double>;
template class BasicEncoder<float>;
template class BasicEncoder<double>;
template BasicEncoder<double> BasicEncoder<float>::cast<double>() const;
template BasicEncoder<float> BasicEncoder<double>::cast<float>() const;
template BasicEncoder<float> BasicEncoder<float>::cast<float>() const;
template BasicEncoder<double> BasicEncoder<double>::cast<double>() const;

}  // namespace seqx
