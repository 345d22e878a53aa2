#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "weaksep/errors.hpp"

namespace weaksep::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Dense row-major array. Convolutional activations use N,H,W,C layout with
/// H = time and W = frequency.
template <class T>
class Tensor {
 public:
  using value_type = T;
  /// Aligned so that vectorized kernels take the same code path on every allocation.
  using Storage = std::vector<T, Eigen::aligned_allocator<T>>;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)), data_(element_count(shape_), fill) {}
  Tensor(Shape shape, const std::vector<T>& data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (data_.size() != element_count(shape_)) {
      throw ShapeError("Tensor: shape " + nn::to_string(shape_) + " needs " + std::to_string(element_count(shape_)) +
                       " values, got " + std::to_string(data_.size()));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  Storage& storage() { return data_; }
  const Storage& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Number of rows when viewed as (shape[0], rest).
  std::size_t batch() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t row_size() const { return shape_.empty() || shape_[0] == 0 ? 0 : data_.size() / shape_[0]; }

  void reshape(Shape shape) {
    if (element_count(shape) != data_.size()) {
      throw ShapeError("Tensor::reshape: cannot view " + nn::to_string(shape_) + " as " + nn::to_string(shape));
    }
    shape_ = std::move(shape);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <class U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  Storage data_;
};

/// A trainable tensor together with its accumulated gradient.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(T{0}); }
};

/// Non-trainable state that must be checkpointed (batch-norm running statistics).
template <class T>
struct Buffer {
  std::string name;
  Tensor<T>* tensor;
};

inline void require_shape(const Shape& actual, const Shape& expected, const char* where) {
  if (actual != expected) {
    throw ShapeError(std::string(where) + ": expected shape " + to_string(expected) + ", got " + to_string(actual));
  }
}

/// Gathers rows of a batch-major tensor.
template <class T>
Tensor<T> gather_rows(const Tensor<T>& src, std::span<const std::size_t> rows) {
  Shape shape = src.shape();
  shape[0] = rows.size();
  Tensor<T> out(shape);
  const std::size_t width = src.row_size();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(src.data() + rows[r] * width, width, out.data() + r * width);
  }
  return out;
}

}  // namespace weaksep::nn
