// Serial reference kernels: straightforward loops, no blocking, no threads.

#include <cmath>

#include "seqx/kernels.hpp"

namespace seqx::kernels::reference {

template <typename T>
void gemm(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
          std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T sum = accumulate ? c[i * n + j] : T{0};
      for (std::size_t p = 0; p < k; ++p) sum += a[i * k + p] * b[p * n + j];
      c[i * n + j] = sum;
    }
  }
}

template <typename T>
void gemm_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T sum = accumulate ? c[i * n + j] : T{0};
      for (std::size_t p = 0; p < k; ++p) sum += a[i * k + p] * b[j * k + p];
      c[i * n + j] = sum;
    }
  }
}

template <typename T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T sum = accumulate ? c[i * n + j] : T{0};
      for (std::size_t p = 0; p < k; ++p) sum += a[p * m + i] * b[p * n + j];
      c[i * n + j] = sum;
    }
  }
}

template <typename T>
void transpose(std::span<const T> in, std::span<T> out, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = in[i * cols + j];
  }
}

template <typename T>
void add_bias(std::span<T> x, std::span<const T> bias, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) x[i * n + j] += bias[j];
  }
}

template <typename T>
void column_sums(std::span<const T> g, std::span<T> out, std::size_t m, std::size_t n,
                 bool accumulate) {
  for (std::size_t j = 0; j < n; ++j) {
    T sum = accumulate ? out[j] : T{0};
    for (std::size_t i = 0; i < m; ++i) sum += g[i * n + j];
    out[j] = sum;
  }
}

template <typename T>
void im2col(std::span<const T> x, std::span<T> cols, std::size_t batch, std::size_t length,
            std::size_t channels, std::size_t kernel, std::size_t left_pad) {
  const std::size_t width = kernel * channels;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < length; ++t) {
      for (std::size_t j = 0; j < kernel; ++j) {
        const long src = static_cast<long>(t + j) - static_cast<long>(left_pad);
        for (std::size_t c = 0; c < channels; ++c) {
          T v{0};
          if (src >= 0 && src < static_cast<long>(length)) {
            v = x[(b * length + static_cast<std::size_t>(src)) * channels + c];
          }
          cols[(b * length + t) * width + j * channels + c] = v;
        }
      }
    }
  }
}

template <typename T>
void col2im(std::span<const T> cols, std::span<T> dx, std::size_t batch, std::size_t length,
            std::size_t channels, std::size_t kernel, std::size_t left_pad) {
  const std::size_t width = kernel * channels;
  for (std::size_t i = 0; i < batch * length * channels; ++i) dx[i] = T{0};
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < length; ++t) {
      for (std::size_t j = 0; j < kernel; ++j) {
        const long src = static_cast<long>(t + j) - static_cast<long>(left_pad);
        if (src < 0 || src >= static_cast<long>(length)) continue;
        for (std::size_t c = 0; c < channels; ++c) {
          dx[(b * length + static_cast<std::size_t>(src)) * channels + c] +=
              cols[(b * length + t) * width + j * channels + c];
        }
      }
    }
  }
}

template <typename T>
void gelu(std::span<const T> x, std::span<T> y) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = T{0.5} * x[i] * (T{1} + std::erf(x[i] / std::sqrt(T{2})));
  }
}

template <typename T>
void gelu_backward(std::span<const T> x, std::span<const T> dy, std::span<T> dx) {
  const T pi = static_cast<T>(3.14159265358979323846);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T cdf = T{0.5} * (T{1} + std::erf(x[i] / std::sqrt(T{2})));
    const T pdf = std::exp(-x[i] * x[i] / T{2}) / std::sqrt(T{2} * pi);
    dx[i] = dy[i] * (cdf + x[i] * pdf);
  }
}

#define SEQX_INSTANTIATE(T)                                                                     \
  template void gemm<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t,    \
                        std::size_t, std::size_t, bool);                                      \
  template void gemm_nt<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t, \
                           std::size_t, std::size_t, bool);                                   \
  template void gemm_tn<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t, \
                           std::size_t, std::size_t, bool);                                   \
  template void transpose<T>(std::span<const T>, std::span<T>, std::size_t, std::size_t);      \
  template void add_bias<T>(std::span<T>, std::span<const T>, std::size_t, std::size_t);       \
  template void column_sums<T>(std::span<const T>, std::span<T>, std::size_t, std::size_t,     \
                               bool);                                                         \
  template void im2col<T>(std::span<const T>, std::span<T>, std::size_t, std::size_t,          \
                          std::size_t, std::size_t, std::size_t);                             \
  template void col2im<T>(std::span<const T>, std::span<T>, std::size_t, std::size_t,          \
                          std::size_t, std::size_t, std::size_t);                             \
  template void gelu<T>(std::span<const T>, std::span<T>);                                     \
  template void gelu_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);

SEQX_INSTANTIATE(float)
SEQX_INSTANTIATE(double)

}  // namespace seqx::kernels::reference
