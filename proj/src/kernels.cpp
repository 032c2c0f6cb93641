#include "seqx/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <type_traits>
#include <vector>

namespace seqx::kernels {
namespace {

// Register tile: kTileRows rows of C by 256 bytes of columns.
constexpr std::size_t kTileRows = 8;
template <typename T>
constexpr std::size_t kTileCols = 256 / sizeof(T);

// Depth of one k block; a packed panel block is kDepthBlock x 256 bytes.
constexpr std::size_t kDepthBlock = 256;

// c[kTileRows x cols] (+)= a[kTileRows x kc] * panel[kc x cols]. a has row
// stride lda, the packed panel row stride kTileCols, c row stride ldc.
template <typename T>
void gemm_full_tile(const T* a, std::size_t lda, const T* panel, T* c, std::size_t ldc, std::size_t kc,
                    bool accumulate) {
  constexpr std::size_t cols = kTileCols<T>;
  T acc[kTileRows][cols];
  for (std::size_t r = 0; r < kTileRows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) acc[r][j] = accumulate ? c[r * ldc + j] : T{0};
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const T* brow = panel + p * cols;
    for (std::size_t r = 0; r < kTileRows; ++r) {
      const T av = a[r * lda + p];
#pragma omp simd
      for (std::size_t j = 0; j < cols; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (std::size_t r = 0; r < kTileRows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] = acc[r][j];
  }
}

// Partial tile; same summation order as the full tile.
template <typename T>
void gemm_edge_tile(const T* a, std::size_t lda, const T* panel, T* c, std::size_t ldc, std::size_t rows,
                    std::size_t cols, std::size_t kc, bool accumulate) {
  constexpr std::size_t stride = kTileCols<T>;
  T acc[kTileRows][stride];
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) acc[r][j] = accumulate ? c[r * ldc + j] : T{0};
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const T* brow = panel + p * stride;
    for (std::size_t r = 0; r < rows; ++r) {
      const T av = a[r * lda + p];
#pragma omp simd
      for (std::size_t j = 0; j < cols; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] = acc[r][j];
  }
}

}  // namespace

template <typename T>
void gemm(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
          std::size_t k, std::size_t n, bool accumulate) {
  constexpr std::size_t tile_cols = kTileCols<T>;
  const std::size_t row_tiles = (m + kTileRows - 1) / kTileRows;
  const T* ap = a.data();
  const T* bp = b.data();
  T* cp = c.data();
  if (k == 0) {
    if (!accumulate) std::fill(c.begin(), c.begin() + m * n, T{0});
    return;
  }
  // Column panel of b, packed contiguously; k blocks are visited in order,
  // so every element of c still sums its products in ascending k.
  std::vector<T> panel(k * tile_cols);
#pragma omp parallel
  for (std::size_t jb = 0; jb < n; jb += tile_cols) {
    const std::size_t cols = std::min(tile_cols, n - jb);
#pragma omp for schedule(static)
    for (std::size_t p = 0; p < k; ++p) {
      std::copy_n(bp + p * n + jb, cols, panel.data() + p * tile_cols);
    }
    for (std::size_t kb = 0; kb < k; kb += kDepthBlock) {
      const std::size_t kc = std::min(kDepthBlock, k - kb);
      const bool acc = accumulate || kb > 0;
#pragma omp for schedule(static)
      for (std::size_t it = 0; it < row_tiles; ++it) {
        const std::size_t i = it * kTileRows;
        const std::size_t rows = std::min(kTileRows, m - i);
        const T* tile_a = ap + i * k + kb;
        const T* tile_b = panel.data() + kb * tile_cols;
        T* tile_c = cp + i * n + jb;
        if (rows == kTileRows && cols == tile_cols) {
          gemm_full_tile(tile_a, k, tile_b, tile_c, n, kc, acc);
        } else {
          gemm_edge_tile(tile_a, k, tile_b, tile_c, n, rows, cols, kc, acc);
        }
      }
    }
  }
}

template <typename T>
void transpose(std::span<const T> in, std::span<T> out, std::size_t rows, std::size_t cols) {
  constexpr std::size_t block = 32;
#pragma omp parallel for schedule(static)
  for (std::size_t ib = 0; ib < rows; ib += block) {
    for (std::size_t jb = 0; jb < cols; jb += block) {
      const std::size_t ie = std::min(rows, ib + block);
      const std::size_t je = std::min(cols, jb + block);
      for (std::size_t i = ib; i < ie; ++i) {
        for (std::size_t j = jb; j < je; ++j) out[j * rows + i] = in[i * cols + j];
      }
    }
  }
}

template <typename T>
void gemm_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  std::vector<T> bt(k * n);
  transpose<T>(b, bt, n, k);
  gemm<T>(a, bt, c, m, k, n, accumulate);
}

template <typename T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  std::vector<T> at(k * m);
  transpose<T>(a, at, k, m);
  gemm<T>(at, b, c, m, k, n, accumulate);
}

template <typename T>
void add_bias(std::span<T> x, std::span<const T> bias, std::size_t m, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < m; ++i) {
    T* row = x.data() + i * n;
#pragma omp simd
    for (std::size_t j = 0; j < n; ++j) row[j] += bias[j];
  }
}

template <typename T>
void column_sums(std::span<const T> g, std::span<T> out, std::size_t m, std::size_t n,
                 bool accumulate) {
  // Columns are split across threads; each column is summed top to bottom.
  constexpr std::size_t block = 64;
#pragma omp parallel for schedule(static)
  for (std::size_t jb = 0; jb < n; jb += block) {
    const std::size_t je = std::min(n, jb + block);
    T acc[block];
    for (std::size_t j = jb; j < je; ++j) acc[j - jb] = accumulate ? out[j] : T{0};
    for (std::size_t i = 0; i < m; ++i) {
      const T* row = g.data() + i * n;
      for (std::size_t j = jb; j < je; ++j) acc[j - jb] += row[j];
    }
    for (std::size_t j = jb; j < je; ++j) out[j] = acc[j - jb];
  }
}

template <typename T>
void im2col(std::span<const T> x, std::span<T> cols, std::size_t batch, std::size_t length,
            std::size_t channels, std::size_t kernel, std::size_t left_pad) {
  const std::size_t width = kernel * channels;
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < length; ++t) {
      T* out = cols.data() + (b * length + t) * width;
      for (std::size_t j = 0; j < kernel; ++j) {
        const auto src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(left_pad);
        T* dst = out + j * channels;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(length)) {
          std::fill(dst, dst + channels, T{0});
        } else {
          const T* in = x.data() + (b * length + static_cast<std::size_t>(src)) * channels;
          std::copy(in, in + channels, dst);
        }
      }
    }
  }
}

template <typename T>
void col2im(std::span<const T> cols, std::span<T> dx, std::size_t batch, std::size_t length,
            std::size_t channels, std::size_t kernel, std::size_t left_pad) {
  // Gather form: each input row sums the taps that read it, in tap order.
  const std::size_t width = kernel * channels;
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t s = 0; s < length; ++s) {
      T* out = dx.data() + (b * length + s) * channels;
      std::fill(out, out + channels, T{0});
      for (std::size_t j = 0; j < kernel; ++j) {
        // Output row t reads input row s through tap j when t = s + left_pad - j.
        const auto t = static_cast<std::ptrdiff_t>(s + left_pad) - static_cast<std::ptrdiff_t>(j);
        if (t < 0 || t >= static_cast<std::ptrdiff_t>(length)) continue;
        const T* in = cols.data() + (b * length + static_cast<std::size_t>(t)) * width + j * channels;
#pragma omp simd
        for (std::size_t c = 0; c < channels; ++c) out[c] += in[c];
      }
    }
  }
}

namespace {

// Rational approximation of erf on [-4, 4] (absolute error below 1e-7 in
// float); vectorizes, unlike erff.
inline float fast_erf(float a) {
  const float x = a < -4.0f ? -4.0f : (a > 4.0f ? 4.0f : a);
  const float x2 = x * x;
  float p = -2.72614225801306e-10f;
  p = p * x2 + 2.77068142495902e-08f;
  p = p * x2 - 2.10102402082508e-06f;
  p = p * x2 - 5.69250639462346e-05f;
  p = p * x2 - 7.34990630326855e-04f;
  p = p * x2 - 2.95459980854025e-03f;
  p = p * x2 - 1.60960333262415e-02f;
  p *= x;
  float q = -1.45660718464996e-05f;
  q = q * x2 - 2.13374055278905e-04f;
  q = q * x2 - 1.68282697438203e-03f;
  q = q * x2 - 7.37332916720468e-03f;
  q = q * x2 - 1.42647390514189e-02f;
  return p / q;
}

// exp for x <= 0 via 2^n * 2^f with a degree-6 polynomial for 2^f.
inline float fast_exp_nonpositive(float x) {
  const float s = x * 1.44269504088896341f;
  const float t = s < -126.0f ? -126.0f : s;
  const float n = std::floor(t);
  const float f = t - n;
  float p = 1.535336188319500e-4f;
  p = p * f + 1.339887440266574e-3f;
  p = p * f + 9.618437357674640e-3f;
  p = p * f + 5.550332471162809e-2f;
  p = p * f + 2.402264791363012e-1f;
  p = p * f + 6.931472028550421e-1f;
  p = p * f + 1.0f;
  const auto bits = static_cast<std::int32_t>(n + 127.0f) << 23;
  return p * std::bit_cast<float>(bits);
}

}  // namespace

template <typename T>
void gelu(std::span<const T> x, std::span<T> y) {
  const T inv_sqrt2 = static_cast<T>(0.70710678118654752440);
  if constexpr (std::is_same_v<T, float>) {
    const float* xp = x.data();
    float* yp = y.data();
    const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for simd schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      yp[i] = 0.5f * xp[i] * (1.0f + fast_erf(xp[i] * inv_sqrt2));
    }
  } else {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < x.size(); ++i) {
      y[i] = T{0.5} * x[i] * (T{1} + std::erf(x[i] * inv_sqrt2));
    }
  }
}

template <typename T>
void gelu_backward(std::span<const T> x, std::span<const T> dy, std::span<T> dx) {
  const T inv_sqrt2 = static_cast<T>(0.70710678118654752440);
  const T inv_sqrt2pi = static_cast<T>(0.39894228040143267794);
  if constexpr (std::is_same_v<T, float>) {
    const float* xp = x.data();
    const float* dyp = dy.data();
    float* dxp = dx.data();
    const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for simd schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const float cdf = 0.5f * (1.0f + fast_erf(xp[i] * inv_sqrt2));
      const float pdf = inv_sqrt2pi * fast_exp_nonpositive(-0.5f * xp[i] * xp[i]);
      dxp[i] = dyp[i] * (cdf + xp[i] * pdf);
    }
  } else {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < x.size(); ++i) {
      const T cdf = T{0.5} * (T{1} + std::erf(x[i] * inv_sqrt2));
      const T pdf = inv_sqrt2pi * std::exp(T{-0.5} * x[i] * x[i]);
      dx[i] = dy[i] * (cdf + x[i] * pdf);
    }
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

}  // namespace seqx::kernels
