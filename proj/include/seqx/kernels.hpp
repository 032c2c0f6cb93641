#pragma once

// Dense kernels used by the encoder. Every kernel exists twice: an
// OpenMP-parallel version in seqx::kernels and a plain serial version in
// seqx::kernels::reference that the tests and benchmarks compare against.
//
// All matrices are row-major. Each output element is produced by exactly one
// thread and summed in ascending index order, so results do not depend on the
// thread count.

#include <cstddef>
#include <span>

namespace seqx::kernels {

/// c[m x n] (+)= a[m x k] * b[k x n]
template <typename T>
void gemm(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
          std::size_t k, std::size_t n, bool accumulate = false);

/// c[m x n] (+)= a[m x k] * b^T, with b stored [n x k]
template <typename T>
void gemm_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);

/// c[m x n] (+)= a^T * b, with a stored [k x m] and b stored [k x n]
template <typename T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);

/// out[cols x rows] = in[rows x cols]^T
template <typename T>
void transpose(std::span<const T> in, std::span<T> out, std::size_t rows, std::size_t cols);

/// Adds bias[n] to every row of x[m x n].
template <typename T>
void add_bias(std::span<T> x, std::span<const T> bias, std::size_t m, std::size_t n);

/// bias_grad[n] (+)= column sums of g[m x n].
template <typename T>
void column_sums(std::span<const T> g, std::span<T> out, std::size_t m, std::size_t n,
                 bool accumulate = false);

/// Same-padding im2col over a batch of sequences.
///
/// x is [batch*length x channels]. Row (b, t) of the output holds, for each
/// kernel tap j in [0, kernel), the input row (b, t + j - left_pad) or zeros
/// when that position falls outside [0, length). Output is
/// [batch*length x kernel*channels].
template <typename T>
void im2col(std::span<const T> x, std::span<T> cols, std::size_t batch, std::size_t length,
            std::size_t channels, std::size_t kernel, std::size_t left_pad);

/// Adjoint of im2col: scatters column gradients back onto dx (overwrites dx).
template <typename T>
void col2im(std::span<const T> cols, std::span<T> dx, std::size_t batch, std::size_t length,
            std::size_t channels, std::size_t kernel, std::size_t left_pad);

/// GELU, elementwise. The double version uses std::erf; the float version
/// uses a rational erf approximation (absolute error below 1e-6).
template <typename T>
void gelu(std::span<const T> x, std::span<T> y);

/// dx = dy * gelu'(x), elementwise.
template <typename T>
void gelu_backward(std::span<const T> x, std::span<const T> dy, std::span<T> dx);

namespace reference {

template <typename T>
void gemm(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
          std::size_t k, std::size_t n, bool accumulate = false);
template <typename T>
void gemm_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);
template <typename T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);
template <typename T>
void transpose(std::span<const T> in, std::span<T> out, std::size_t rows, std::size_t cols);
template <typename T>
void add_bias(std::span<T> x, std::span<const T> bias, std::size_t m, std::size_t n);
template <typename T>
void column_sums(std::span<const T> g, std::span<T> out, std::size_t m, std::size_t n,
                 bool accumulate = false);
template <typename T>
void im2col(std::span<const T> x, std::span<T> cols, std::size_t batch, std::size_t length,
            std::size_t channels, std::size_t kernel, std::size_t left_pad);
template <typename T>
void col2im(std::span<const T> cols, std::span<T> dx, std::size_t batch, std::size_t length,
            std::size_t channels, std::size_t kernel, std::size_t left_pad);
template <typename T>
void gelu(std::span<const T> x, std::span<T> y);
template <typename T>
void gelu_backward(std::span<const T> x, std::span<const T> dy, std::span<T> dx);

}  // namespace reference

}  // namespace seqx::kernels
