#pragma once

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dff {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t numel(const Shape& shape);

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand extents are incompatible with the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A precondition on values (not shapes) was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Dense row-major real array.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<T> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  template <typename... I>
  T& operator()(I... idx) {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <typename... I>
  const T& operator()(I... idx) const {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }

  /// Same data under a new shape with the same element count.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  void fill(T value);

  bool operator==(const Tensor& other) const = default;

 private:
  std::size_t offset(std::initializer_list<std::size_t> idx) const;

  Shape shape_;
  std::vector<T> data_;
};

/// Dense row-major complex array. Element storage is layout-compatible with a
/// real tensor carrying a trailing axis of extent 2 (re, im).
template <typename T>
class ComplexTensor {
 public:
  using value_type = std::complex<T>;

  ComplexTensor() = default;
  explicit ComplexTensor(Shape shape);
  ComplexTensor(Shape shape, std::vector<std::complex<T>> data);

  /// Interprets the trailing extent-2 axis of `pairs` as (re, im).
  static ComplexTensor from_pairs(const Tensor<T>& pairs);
  Tensor<T> to_pairs() const;

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<std::complex<T>> data() { return data_; }
  std::span<const std::complex<T>> data() const { return data_; }

  std::complex<T>& operator[](std::size_t i) { return data_[i]; }
  const std::complex<T>& operator[](std::size_t i) const { return data_[i]; }

  template <typename... I>
  std::complex<T>& operator()(I... idx) {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <typename... I>
  const std::complex<T>& operator()(I... idx) const {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }

  bool operator==(const ComplexTensor& other) const = default;

 private:
  std::size_t offset(std::initializer_list<std::size_t> idx) const;

  Shape shape_;
  std::vector<std::complex<T>> data_;
};

// Pure kernels. None of them mutate their inputs.

/// [m x k] * [k x n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// a^T * b for a [k x m], b [k x n]
template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b);
/// a * b^T for a [m x k], b [n x k]
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> multiply(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scaled(const Tensor<T>& a, T factor);

/// dst += src, shapes must match.
template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src);

template <typename T>
bool all_finite(const Tensor<T>& t);

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
  std::vector<To> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<To>(t[i]);
  return Tensor<To>(t.shape(), std::move(out));
}

}  // namespace dff
