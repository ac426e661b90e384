#include "stormcnn/tensor.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace stormcnn {

namespace {

std::vector<std::size_t> checked_dims(const std::vector<std::int64_t>& dims) {
  std::vector<std::size_t> out;
  out.reserve(dims.size());
  std::size_t total = 1;
  for (auto d : dims) {
    if (d < 1) throw ShapeError("shape extent must be >= 1, got " + std::to_string(d));
    std::size_t next = 0;
    if (__builtin_mul_overflow(total, static_cast<std::size_t>(d), &next))
      throw ShapeError("shape element count overflows");
    total = next;
    out.push_back(static_cast<std::size_t>(d));
  }
  return out;
}

}  // namespace

Shape::Shape(std::initializer_list<std::int64_t> dims)
    : dims_(checked_dims(std::vector<std::int64_t>(dims))) {}

Shape::Shape(const std::vector<std::int64_t>& dims) : dims_(checked_dims(dims)) {}

Shape::Shape(const std::vector<std::size_t>& dims) {
  std::vector<std::int64_t> signed_dims;
  for (auto d : dims) {
    if (d > static_cast<std::size_t>(std::numeric_limits<std::int64_t>::max()))
      throw ShapeError("shape extent too large");
    signed_dims.push_back(static_cast<std::int64_t>(d));
  }
  dims_ = checked_dims(signed_dims);
}

std::size_t Shape::count() const {
  if (dims_.empty()) return 0;
  std::size_t n = 1;
  for (auto d : dims_) n *= d;
  return n;
}

std::vector<std::size_t> Shape::strides() const {
  std::vector<std::size_t> s(dims_.size(), 1);
  for (std::size_t i = dims_.size(); i-- > 1;) s[i - 1] = s[i] * dims_[i];
  return s;
}

std::size_t Shape::offset(std::span<const std::size_t> index) const {
  if (index.size() != dims_.size())
    throw ShapeError("index rank " + std::to_string(index.size()) + " != shape rank " +
                     std::to_string(dims_.size()));
  std::size_t off = 0;
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (index[i] >= dims_[i]) throw ShapeError("index out of range on axis " + std::to_string(i));
    off = off * dims_[i] + index[i];
  }
  return off;
}

std::vector<std::size_t> Shape::unravel(std::size_t offset) const {
  if (offset >= count()) throw ShapeError("offset out of range");
  std::vector<std::size_t> idx(dims_.size());
  for (std::size_t i = dims_.size(); i-- > 0;) {
    idx[i] = offset % dims_[i];
    offset /= dims_[i];
  }
  return idx;
}

Shape Shape::with_batch(std::size_t n) const {
  std::vector<std::size_t> d = dims_;
  if (d.empty()) throw ShapeError("with_batch on empty shape");
  d[0] = n;
  return Shape(d);
}

Shape Shape::tail() const {
  if (dims_.size() < 2) throw ShapeError("tail of rank < 2 shape");
  return Shape(std::vector<std::size_t>(dims_.begin() + 1, dims_.end()));
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
  os << ']';
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_.count(), fill) {
  if (shape_.rank() == 0) throw ShapeError("tensor requires a shape of rank >= 1");
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_.rank() == 0) throw ShapeError("tensor requires a shape of rank >= 1");
  if (data_.size() != shape_.count())
    throw ShapeError("buffer length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_.str());
}

template <typename T>
T& BasicTensor<T>::at(std::initializer_list<std::size_t> index) {
  return data_[shape_.offset(std::span<const std::size_t>(index.begin(), index.size()))];
}

template <typename T>
const T& BasicTensor<T>::at(std::initializer_list<std::size_t> index) const {
  return data_[shape_.offset(std::span<const std::size_t>(index.begin(), index.size()))];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(const Shape& shape) const& {
  if (shape.count() != shape_.count())
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  return BasicTensor(shape, data_);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(const Shape& shape) && {
  if (shape.count() != shape_.count())
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  return BasicTensor(shape, std::move(data_));
}

template <typename T>
void BasicTensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

namespace kernels {

namespace {

constexpr std::size_t kRowBlock = 64;

template <typename T>
inline void axpy(std::size_t n, T alpha, const T* __restrict x, T* __restrict y) {
  for (std::size_t j = 0; j < n; ++j) y[j] += alpha * x[j];
}

template <typename T>
inline T dot(std::size_t n, const T* __restrict x, const T* __restrict y) {
  // Eight independent partial sums so the loop vectorizes without reassociation flags.
  T acc[8] = {};
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8)
    for (std::size_t l = 0; l < 8; ++l) acc[l] += x[j + l] * y[j + l];
  T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; j < n; ++j) s += x[j] * y[j];
  return s;
}

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  if (m == 0 || n == 0 || k == 0) return;

  if (!trans_a && !trans_b) {
    for (std::size_t i0 = 0; i0 < m; i0 += kRowBlock) {
      const std::size_t i1 = std::min(m, i0 + kRowBlock);
      for (std::size_t p = 0; p < k; ++p) {
        const T* brow = b + p * n;
        for (std::size_t i = i0; i < i1; ++i) {
          const T av = a[i * k + p];
          if (av != T(0)) axpy(n, av, brow, c + i * n);
        }
      }
    }
    return;
  }

  if (trans_a && !trans_b) {
    // A stored [k,m]: C[i,:] += A[p,i] * B[p,:].
    if (m * n <= (std::size_t{1} << 18)) {
      for (std::size_t p = 0; p < k; ++p) {
        const T* arow = a + p * m;
        const T* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
          const T av = arow[i];
          if (av != T(0)) axpy(n, av, brow, c + i * n);
        }
      }
    } else {
      for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const T av = a[p * m + i];
          if (av != T(0)) axpy(n, av, b + p * n, crow);
        }
      }
    }
    return;
  }

  if (!trans_a && trans_b) {
    // B stored [n,k]: C[i,j] += dot(A[i,:], B[j,:]).
    for (std::size_t i = 0; i < m; ++i) {
      const T* arow = a + i * k;
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += dot(k, arow, b + j * k);
    }
    return;
  }

  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[j * k + p];
      c[i * n + j] += s;
    }
}

template void gemm<float>(bool, bool, std::size_t, std::size_t, std::size_t, const float*,
                          const float*, float*, bool);
template void gemm<double>(bool, bool, std::size_t, std::size_t, std::size_t, const double*,
                           const double*, double*, bool);

}  // namespace kernels

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape().rank() != 2 || b.shape().rank() != 2)
    throw ShapeError("matmul requires rank-2 operands, got " + a.shape().str() + " and " +
                     b.shape().str());
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k)
    throw ShapeError("matmul inner dimension mismatch: " + a.shape().str() + " x " + b.shape().str());
  BasicTensor<T> out(Shape({static_cast<std::int64_t>(m), static_cast<std::int64_t>(n)}));
  kernels::gemm(false, false, m, n, k, a.data(), b.data(), out.data(), false);
  return out;
}

template <typename T>
BasicTensor<T> map_zip(ZipOp op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("elementwise shape mismatch: " + a.shape().str() + " vs " + b.shape().str());
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    switch (op) {
      case ZipOp::add: out[i] = a[i] + b[i]; break;
      case ZipOp::sub: out[i] = a[i] - b[i]; break;
      case ZipOp::mul:
      case ZipOp::scale: out[i] = a[i] * b[i]; break;
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> map_zip(ZipOp op, const BasicTensor<T>& a, T b) {
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    switch (op) {
      case ZipOp::add: out[i] = a[i] + b; break;
      case ZipOp::sub: out[i] = a[i] - b; break;
      case ZipOp::mul:
      case ZipOp::scale: out[i] = a[i] * b; break;
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> reduce(ReduceOp op, const BasicTensor<T>& a, std::vector<std::size_t> axes) {
  const std::size_t rank = a.shape().rank();
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  std::vector<bool> reduced(rank, false);
  for (auto ax : axes) {
    if (ax >= rank)
      throw ShapeError("reduce axis " + std::to_string(ax) + " invalid for rank " + std::to_string(rank));
    reduced[ax] = true;
  }

  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < rank; ++i)
    if (!reduced[i]) kept.push_back(a.shape()[i]);
  const Shape out_shape = kept.empty() ? Shape({1}) : Shape(kept);

  std::size_t group = 1;
  for (auto ax : axes) group *= a.shape()[ax];

  // Accumulate in double so the float path tracks a sequential sum closely.
  std::vector<double> acc(out_shape.count(), op == ReduceOp::max ? -std::numeric_limits<double>::infinity() : 0.0);
  const auto& dims = a.shape().dims();
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < a.size(); ++flat) {
    std::size_t out_off = 0;
    for (std::size_t i = 0; i < rank; ++i)
      if (!reduced[i]) out_off = out_off * dims[i] + idx[i];
    const double v = a[flat];
    if (op == ReduceOp::max)
      acc[out_off] = std::max(acc[out_off], v);
    else
      acc[out_off] += v;
    for (std::size_t i = rank; i-- > 0;) {
      if (++idx[i] < dims[i]) break;
      idx[i] = 0;
    }
  }

  BasicTensor<T> out(out_shape);
  for (std::size_t i = 0; i < acc.size(); ++i)
    out[i] = static_cast<T>(op == ReduceOp::mean ? acc[i] / static_cast<double>(group) : acc[i]);
  return out;
}

template class BasicTensor<float>;
template class BasicTensor<double>;

template BasicTensor<float> matmul(const BasicTensor<float>&, const BasicTensor<float>&);
template BasicTensor<double> matmul(const BasicTensor<double>&, const BasicTensor<double>&);
template BasicTensor<float> map_zip(ZipOp, const BasicTensor<float>&, const BasicTensor<float>&);
template BasicTensor<double> map_zip(ZipOp, const BasicTensor<double>&, const BasicTensor<double>&);
template BasicTensor<float> map_zip(ZipOp, const BasicTensor<float>&, float);
template BasicTensor<double> map_zip(ZipOp, const BasicTensor<double>&, double);
template BasicTensor<float> reduce(ReduceOp, const BasicTensor<float>&, std::vector<std::size_t>);
template BasicTensor<double> reduce(ReduceOp, const BasicTensor<double>&, std::vector<std::size_t>);

}  // namespace stormcnn
