#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "seqx/error.hpp"

namespace seqx {

/// Dense row-major tensor with an owned buffer.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, T fill = T{})
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

  static std::size_t element_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// 2-D access; the tensor is viewed as shape[0] x (product of the rest).
  T& at(std::size_t row, std::size_t col) { return data_[row * row_stride() + col]; }
  const T& at(std::size_t row, std::size_t col) const {
    return data_[row * row_stride() + col];
  }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t row_stride() const {
    std::size_t stride = 1;
    for (std::size_t i = 1; i < shape_.size(); ++i) stride *= shape_[i];
    return shape_.empty() ? 0 : stride;
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

}  // namespace seqx
