#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "stormcnn/errors.hpp"

namespace stormcnn {

// Ordered list of positive extents. Row-major, last axis fastest.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::int64_t> dims);
  explicit Shape(const std::vector<std::int64_t>& dims);
  explicit Shape(const std::vector<std::size_t>& dims);

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t count() const;

  std::vector<std::size_t> strides() const;
  std::size_t offset(std::span<const std::size_t> index) const;
  std::vector<std::size_t> unravel(std::size_t offset) const;

  // Shape with the leading (batch) axis replaced.
  Shape with_batch(std::size_t n) const;
  // Shape without the leading axis.
  Shape tail() const;

  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> dims_;
};

template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0));
  BasicTensor(Shape shape, std::vector<T> values);

  static BasicTensor create(const Shape& shape, T fill) { return BasicTensor(shape, fill); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::initializer_list<std::size_t> index);
  const T& at(std::initializer_list<std::size_t> index) const;

  // Same buffer under a new shape with the same element count.
  BasicTensor reshaped(const Shape& shape) const&;
  BasicTensor reshaped(const Shape& shape) &&;

  void fill(T value);

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

enum class ZipOp { add, sub, mul, scale };
enum class ReduceOp { sum, mean, max };

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> map_zip(ZipOp op, const BasicTensor<T>& a, const BasicTensor<T>& b);

// Scalar right-hand side; `scale` and `mul` both multiply.
template <typename T>
BasicTensor<T> map_zip(ZipOp op, const BasicTensor<T>& a, T b);

// Removes the named axes. Reducing every axis yields shape [1].
template <typename T>
BasicTensor<T> reduce(ReduceOp op, const BasicTensor<T>& a, std::vector<std::size_t> axes);

namespace kernels {

// C[m,n] (+)= op(A) * op(B). With trans_a, A is stored [k,m]; with trans_b, B is stored [n,k].
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate);

}  // namespace kernels

}  // namespace stormcnn
