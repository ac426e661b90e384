#include "stormcnn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stormcnn/optim.hpp"

namespace stormcnn {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::dropout: return "dropout";
    case LayerKind::flatten: return "flatten";
  }
  return "?";
}

std::size_t window_extent(std::size_t in, std::size_t pad_total, std::size_t kernel, std::size_t stride) {
  if (kernel == 0 || stride == 0 || in + pad_total < kernel) return 0;
  return (in + pad_total - kernel) / stride + 1;
}

namespace {

Shape shape4(std::size_t n, std::size_t h, std::size_t w, std::size_t c) {
  return Shape(std::vector<std::size_t>{n, h, w, c});
}

template <typename T>
void require_cache(bool cached, const char* layer) {
  if (!cached) throw StateError(std::string(layer) + ": backward called without a preceding forward");
}

void require_rank(const Shape& s, std::size_t rank, const char* layer) {
  if (s.rank() != rank)
    throw ShapeError(std::string(layer) + " expects rank-" + std::to_string(rank) + " input, got " + s.str());
}

}  // namespace

template <typename T>
std::size_t Layer<T>::trainable_count() {
  std::size_t n = 0;
  for (auto& p : params()) n += p.value->size();
  return n;
}

template <typename T>
std::size_t Layer<T>::non_trainable_count() {
  std::size_t n = 0;
  for (auto& b : buffers()) n += b.value->size();
  return n;
}

// ---------------------------------------------------------------- Conv2D

template <typename T>
Conv2D<T>::Conv2D(std::size_t in_channels, ConvSpec spec) : in_channels_(in_channels), spec_(spec) {
  if (spec.filters == 0 || spec.kernel_h == 0 || spec.kernel_w == 0 || spec.stride_h == 0 ||
      spec.stride_w == 0 || in_channels == 0)
    throw ShapeError("conv2d: filters, kernel, stride and input channels must be >= 1");
  const Shape wshape = Shape(std::vector<std::size_t>{spec.kernel_h, spec.kernel_w, in_channels, spec.filters});
  const Shape bshape = Shape(std::vector<std::size_t>{spec.filters});
  weights_ = BasicTensor<T>(wshape);
  weight_grad_ = BasicTensor<T>(wshape);
  bias_ = BasicTensor<T>(bshape);
  bias_grad_ = BasicTensor<T>(bshape);
}

template <typename T>
std::string Conv2D<T>::label() const {
  return "2-D Convolutional " + std::to_string(spec_.filters) + "@(" + std::to_string(spec_.kernel_h) +
         "x" + std::to_string(spec_.kernel_w) + ")";
}

template <typename T>
Shape Conv2D<T>::output_shape(const Shape& s) const {
  require_rank(s, 3, "conv2d");
  if (s[2] != in_channels_)
    throw ShapeError("conv2d expects " + std::to_string(in_channels_) + " input channels, got " + s.str());
  const std::size_t oh = window_extent(s[0], spec_.pad_top + spec_.pad_bottom, spec_.kernel_h, spec_.stride_h);
  const std::size_t ow = window_extent(s[1], spec_.pad_left + spec_.pad_right, spec_.kernel_w, spec_.stride_w);
  if (oh == 0 || ow == 0) throw ShapeError("conv2d output extent < 1 for input " + s.str());
  return Shape(std::vector<std::size_t>{oh, ow, spec_.filters});
}

template <typename T>
void Conv2D<T>::im2col(const T* sample, std::size_t h, std::size_t w, std::size_t oh, std::size_t ow,
                       T* col) const {
  const std::size_t cin = in_channels_;
  const std::size_t kcols = spec_.kernel_h * spec_.kernel_w * cin;
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      T* row = col + (y * ow + x) * kcols;
      for (std::size_t dy = 0; dy < spec_.kernel_h; ++dy) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * spec_.stride_h + dy) -
                                  static_cast<std::ptrdiff_t>(spec_.pad_top);
        for (std::size_t dx = 0; dx < spec_.kernel_w; ++dx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * spec_.stride_w + dx) -
                                    static_cast<std::ptrdiff_t>(spec_.pad_left);
          T* dst = row + (dy * spec_.kernel_w + dx) * cin;
          if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) || ix >= static_cast<std::ptrdiff_t>(w)) {
            std::fill(dst, dst + cin, T(0));
          } else {
            const T* src = sample + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
            std::copy(src, src + cin, dst);
          }
        }
      }
    }
  }
}

template <typename T>
void Conv2D<T>::col2im(const T* col, std::size_t h, std::size_t w, std::size_t oh, std::size_t ow,
                       T* sample) const {
  const std::size_t cin = in_channels_;
  const std::size_t kcols = spec_.kernel_h * spec_.kernel_w * cin;
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      const T* row = col + (y * ow + x) * kcols;
      for (std::size_t dy = 0; dy < spec_.kernel_h; ++dy) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * spec_.stride_h + dy) -
                                  static_cast<std::ptrdiff_t>(spec_.pad_top);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t dx = 0; dx < spec_.kernel_w; ++dx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * spec_.stride_w + dx) -
                                    static_cast<std::ptrdiff_t>(spec_.pad_left);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          const T* src = row + (dy * spec_.kernel_w + dx) * cin;
          T* dst = sample + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
          for (std::size_t c = 0; c < cin; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

template <typename T>
BasicTensor<T> Conv2D<T>::forward(const BasicTensor<T>& input, Mode) {
  require_rank(input.shape(), 4, "conv2d");
  const Shape out_sample = output_shape(input.shape().tail());
  const std::size_t n = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
  const std::size_t oh = out_sample[0], ow = out_sample[1], cout = spec_.filters;
  const std::size_t kcols = spec_.kernel_h * spec_.kernel_w * in_channels_;
  const std::size_t in_stride = h * w * in_channels_, out_stride = oh * ow * cout;

  BasicTensor<T> out(shape4(n, oh, ow, cout));
  std::vector<T> col(oh * ow * kcols);
  for (std::size_t s = 0; s < n; ++s) {
    T* dst = out.data() + s * out_stride;
    for (std::size_t r = 0; r < oh * ow; ++r) std::copy(bias_.data(), bias_.data() + cout, dst + r * cout);
    im2col(input.data() + s * in_stride, h, w, oh, ow, col.data());
    kernels::gemm(false, false, oh * ow, cout, kcols, col.data(), weights_.data(), dst, true);
  }
  input_ = input;
  cached_ = true;
  return out;
}

template <typename T>
BasicTensor<T> Conv2D<T>::backward(const BasicTensor<T>& grad_out) {
  require_cache<T>(cached_, "conv2d");
  const std::size_t n = input_.shape()[0], h = input_.shape()[1], w = input_.shape()[2];
  const Shape out_sample = output_shape(input_.shape().tail());
  const std::size_t oh = out_sample[0], ow = out_sample[1], cout = spec_.filters;
  if (grad_out.shape() != shape4(n, oh, ow, cout))
    throw ShapeError("conv2d backward: grad shape " + grad_out.shape().str() + " does not match output");
  const std::size_t kcols = spec_.kernel_h * spec_.kernel_w * in_channels_;
  const std::size_t in_stride = h * w * in_channels_, out_stride = oh * ow * cout;

  weight_grad_.fill(T(0));
  bias_grad_.fill(T(0));
  BasicTensor<T> grad_in(input_.shape());

  // W^T stored [Cout, K] so grad_col = grad_out * W^T is a plain row-major product.
  std::vector<T> wt(kcols * cout);
  for (std::size_t p = 0; p < kcols; ++p)
    for (std::size_t c = 0; c < cout; ++c) wt[c * kcols + p] = weights_[p * cout + c];

  std::vector<T> col(oh * ow * kcols), grad_col(oh * ow * kcols);
  for (std::size_t s = 0; s < n; ++s) {
    const T* g = grad_out.data() + s * out_stride;
    for (std::size_t r = 0; r < oh * ow; ++r)
      for (std::size_t c = 0; c < cout; ++c) bias_grad_[c] += g[r * cout + c];
    im2col(input_.data() + s * in_stride, h, w, oh, ow, col.data());
    kernels::gemm(true, false, kcols, cout, oh * ow, col.data(), g, weight_grad_.data(), true);
    kernels::gemm(false, false, oh * ow, kcols, cout, g, wt.data(), grad_col.data(), false);
    col2im(grad_col.data(), h, w, oh, ow, grad_in.data() + s * in_stride);
  }
  return grad_in;
}

template <typename T>
std::vector<Param<T>> Conv2D<T>::params() {
  return {{"weight", &weights_, &weight_grad_, true}, {"bias", &bias_, &bias_grad_, false}};
}

template <typename T>
void Conv2D<T>::initialize(Rng& rng) {
  weights_ = he_uniform_init<T>(weights_.shape(), spec_.kernel_h * spec_.kernel_w * in_channels_, rng);
  bias_.fill(T(0));
}

// ---------------------------------------------------------------- MaxPool2D

template <typename T>
MaxPool2D<T>::MaxPool2D(std::size_t pool_h, std::size_t pool_w, std::size_t stride_h, std::size_t stride_w)
    : pool_h_(pool_h), pool_w_(pool_w), stride_h_(stride_h), stride_w_(stride_w) {
  if (pool_h == 0 || pool_w == 0 || stride_h == 0 || stride_w == 0)
    throw ShapeError("maxpool2d: window and stride must be >= 1");
}

template <typename T>
std::string MaxPool2D<T>::label() const {
  return "2-D Max pooling (" + std::to_string(pool_h_) + "x" + std::to_string(pool_w_) + ")";
}

template <typename T>
Shape MaxPool2D<T>::output_shape(const Shape& s) const {
  require_rank(s, 3, "maxpool2d");
  const std::size_t oh = window_extent(s[0], 0, pool_h_, stride_h_);
  const std::size_t ow = window_extent(s[1], 0, pool_w_, stride_w_);
  if (oh == 0 || ow == 0) throw ShapeError("maxpool2d window larger than input " + s.str());
  return Shape(std::vector<std::size_t>{oh, ow, s[2]});
}

template <typename T>
BasicTensor<T> MaxPool2D<T>::forward(const BasicTensor<T>& input, Mode) {
  require_rank(input.shape(), 4, "maxpool2d");
  const Shape os = output_shape(input.shape().tail());
  const std::size_t n = input.shape()[0], h = input.shape()[1], w = input.shape()[2], c = input.shape()[3];
  const std::size_t oh = os[0], ow = os[1];
  BasicTensor<T> out(shape4(n, oh, ow, c));
  argmax_.assign(out.size(), 0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x)
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::size_t best = ((s * h + y * stride_h_) * w + x * stride_w_) * c + ch;
          T best_v = input[best];
          // Row-major scan; strict comparison keeps the first maximum on ties.
          for (std::size_t dy = 0; dy < pool_h_; ++dy)
            for (std::size_t dx = 0; dx < pool_w_; ++dx) {
              const std::size_t off = ((s * h + y * stride_h_ + dy) * w + x * stride_w_ + dx) * c + ch;
              if (input[off] > best_v) {
                best_v = input[off];
                best = off;
              }
            }
          const std::size_t o = ((s * oh + y) * ow + x) * c + ch;
          out[o] = best_v;
          argmax_[o] = best;
        }
  input_shape_ = input.shape();
  cached_ = true;
  return out;
}

template <typename T>
BasicTensor<T> MaxPool2D<T>::backward(const BasicTensor<T>& grad_out) {
  require_cache<T>(cached_, "maxpool2d");
  if (grad_out.size() != argmax_.size()) throw ShapeError("maxpool2d backward: grad shape mismatch");
  BasicTensor<T> grad_in(input_shape_);
  for (std::size_t o = 0; o < argmax_.size(); ++o) grad_in[argmax_[o]] += grad_out[o];
  return grad_in;
}

// ---------------------------------------------------------------- Dense

template <typename T>
Dense<T>::Dense(std::size_t inputs, std::size_t outputs) : inputs_(inputs), outputs_(outputs) {
  if (inputs == 0 || outputs == 0) throw ShapeError("dense: extents must be >= 1");
  const Shape wshape(std::vector<std::size_t>{inputs, outputs});
  const Shape bshape(std::vector<std::size_t>{outputs});
  weights_ = BasicTensor<T>(wshape);
  weight_grad_ = BasicTensor<T>(wshape);
  bias_ = BasicTensor<T>(bshape);
  bias_grad_ = BasicTensor<T>(bshape);
}

template <typename T>
Shape Dense<T>::output_shape(const Shape& s) const {
  if (s.rank() != 1 || s[0] != inputs_)
    throw ShapeError("dense expects sample shape [" + std::to_string(inputs_) + "], got " + s.str());
  return Shape(std::vector<std::size_t>{outputs_});
}

template <typename T>
BasicTensor<T> Dense<T>::forward(const BasicTensor<T>& input, Mode) {
  require_rank(input.shape(), 2, "dense");
  output_shape(input.shape().tail());
  const std::size_t n = input.shape()[0];
  BasicTensor<T> out(Shape(std::vector<std::size_t>{n, outputs_}));
  for (std::size_t r = 0; r < n; ++r) std::copy(bias_.data(), bias_.data() + outputs_, out.data() + r * outputs_);
  kernels::gemm(false, false, n, outputs_, inputs_, input.data(), weights_.data(), out.data(), true);
  input_ = input;
  cached_ = true;
  return out;
}

template <typename T>
BasicTensor<T> Dense<T>::backward(const BasicTensor<T>& grad_out) {
  require_cache<T>(cached_, "dense");
  const std::size_t n = input_.shape()[0];
  if (grad_out.shape() != Shape(std::vector<std::size_t>{n, outputs_}))
    throw ShapeError("dense backward: grad shape " + grad_out.shape().str() + " does not match output");
  kernels::gemm(true, false, inputs_, outputs_, n, input_.data(), grad_out.data(), weight_grad_.data(), false);
  bias_grad_.fill(T(0));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < outputs_; ++j) bias_grad_[j] += grad_out[r * outputs_ + j];
  BasicTensor<T> grad_in(input_.shape());
  kernels::gemm(false, true, n, inputs_, outputs_, grad_out.data(), weights_.data(), grad_in.data(), false);
  return grad_in;
}

template <typename T>
std::vector<Param<T>> Dense<T>::params() {
  return {{"weight", &weights_, &weight_grad_, true}, {"bias", &bias_, &bias_grad_, false}};
}

template <typename T>
void Dense<T>::initialize(Rng& rng) {
  weights_ = he_uniform_init<T>(weights_.shape(), inputs_, rng);
  bias_.fill(T(0));
}

// ---------------------------------------------------------------- ReLU

template <typename T>
BasicTensor<T> ReLU<T>::forward(const BasicTensor<T>& input, Mode) {
  BasicTensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
  input_ = input;
  cached_ = true;
  return out;
}

template <typename T>
BasicTensor<T> ReLU<T>::backward(const BasicTensor<T>& grad_out) {
  require_cache<T>(cached_, "relu");
  if (grad_out.shape() != input_.shape()) throw ShapeError("relu backward: grad shape mismatch");
  BasicTensor<T> grad_in(input_.shape());
  for (std::size_t i = 0; i < input_.size(); ++i) grad_in[i] = input_[i] > T(0) ? grad_out[i] : T(0);
  return grad_in;
}

// ---------------------------------------------------------------- BatchNorm

template <typename T>
BatchNorm<T>::BatchNorm(std::size_t channels, double epsilon, double momentum)
    : channels_(channels), epsilon_(epsilon), momentum_(momentum) {
  if (channels == 0) throw ShapeError("batchnorm: channels must be >= 1");
  if (!(epsilon > 0.0)) throw ConfigError("batchnorm: epsilon must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("batchnorm: momentum must lie in [0,1)");
  const Shape cs(std::vector<std::size_t>{channels});
  gamma_ = BasicTensor<T>(cs, T(1));
  beta_ = BasicTensor<T>(cs);
  gamma_grad_ = BasicTensor<T>(cs);
  beta_grad_ = BasicTensor<T>(cs);
  running_mean_ = BasicTensor<T>(cs);
  running_var_ = BasicTensor<T>(cs, T(1));
}

template <typename T>
Shape BatchNorm<T>::output_shape(const Shape& s) const {
  if (s.rank() == 0 || s[s.rank() - 1] != channels_)
    throw ShapeError("batchnorm expects last axis " + std::to_string(channels_) + ", got " + s.str());
  return s;
}

template <typename T>
BasicTensor<T> BatchNorm<T>::forward(const BasicTensor<T>& input, Mode mode) {
  if (input.shape().rank() < 2) throw ShapeError("batchnorm expects a batched input");
  output_shape(input.shape().tail());
  const std::size_t c = channels_;
  const std::size_t m = input.size() / c;
  BasicTensor<T> out(input.shape());
  normalized_ = BasicTensor<T>(input.shape());
  inv_std_.assign(c, T(0));

  if (mode == Mode::train) {
    if (m < 2) throw DegenerateBatchError("batchnorm: train mode needs more than one element per channel");
    std::vector<double> mean(c, 0.0), var(c, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += input[i * c + ch];
    for (auto& v : mean) v /= static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double d = input[i * c + ch] - mean[ch];
        var[ch] += d * d;
      }
    for (auto& v : var) v /= static_cast<double>(m);
    for (std::size_t ch = 0; ch < c; ++ch) {
      inv_std_[ch] = static_cast<T>(1.0 / std::sqrt(var[ch] + epsilon_));
      running_mean_[ch] = static_cast<T>(momentum_ * running_mean_[ch] + (1.0 - momentum_) * mean[ch]);
      running_var_[ch] = static_cast<T>(momentum_ * running_var_[ch] + (1.0 - momentum_) * var[ch]);
    }
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T xhat = static_cast<T>((input[i * c + ch] - mean[ch]) * inv_std_[ch]);
        normalized_[i * c + ch] = xhat;
        out[i * c + ch] = gamma_[ch] * xhat + beta_[ch];
      }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch)
      inv_std_[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var_[ch]) + epsilon_));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T xhat = (input[i * c + ch] - running_mean_[ch]) * inv_std_[ch];
        normalized_[i * c + ch] = xhat;
        out[i * c + ch] = gamma_[ch] * xhat + beta_[ch];
      }
  }
  cached_mode_ = mode;
  cached_ = true;
  return out;
}

template <typename T>
BasicTensor<T> BatchNorm<T>::backward(const BasicTensor<T>& grad_out) {
  require_cache<T>(cached_, "batchnorm");
  if (grad_out.shape() != normalized_.shape()) throw ShapeError("batchnorm backward: grad shape mismatch");
  const std::size_t c = channels_;
  const std::size_t m = grad_out.size() / c;
  std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      sum_dy[ch] += grad_out[i * c + ch];
      sum_dy_xhat[ch] += static_cast<double>(grad_out[i * c + ch]) * normalized_[i * c + ch];
    }
  for (std::size_t ch = 0; ch < c; ++ch) {
    gamma_grad_[ch] = static_cast<T>(sum_dy_xhat[ch]);
    beta_grad_[ch] = static_cast<T>(sum_dy[ch]);
  }

  BasicTensor<T> grad_in(grad_out.shape());
  if (cached_mode_ == Mode::train) {
    // dx = gamma * inv_std / m * (m * dy - sum(dy) - xhat * sum(dy * xhat))
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double k = static_cast<double>(gamma_[ch]) * inv_std_[ch] / static_cast<double>(m);
        grad_in[i * c + ch] = static_cast<T>(
            k * (static_cast<double>(m) * grad_out[i * c + ch] - sum_dy[ch] -
                 static_cast<double>(normalized_[i * c + ch]) * sum_dy_xhat[ch]));
      }
  } else {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) grad_in[i * c + ch] = grad_out[i * c + ch] * gamma_[ch] * inv_std_[ch];
  }
  return grad_in;
}

template <typename T>
std::vector<Param<T>> BatchNorm<T>::params() {
  return {{"gamma", &gamma_, &gamma_grad_, false}, {"beta", &beta_, &beta_grad_, false}};
}

template <typename T>
std::vector<Buffer<T>> BatchNorm<T>::buffers() {
  return {{"running_mean", &running_mean_}, {"running_var", &running_var_}};
}

template <typename T>
void BatchNorm<T>::initialize(Rng&) {
  gamma_.fill(T(1));
  beta_.fill(T(0));
  running_mean_.fill(T(0));
  running_var_.fill(T(1));
}

// ---------------------------------------------------------------- Dropout

template <typename T>
Dropout<T>::Dropout(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0,1), got " + std::to_string(rate));
}

template <typename T>
std::string Dropout<T>::label() const {
  char buf[48];
  std::snprintf(buf, sizeof buf, "Dropout (%g)", rate_);
  return buf;
}

template <typename T>
BasicTensor<T> Dropout<T>::forward(const BasicTensor<T>& input, Mode mode) {
  cached_ = true;
  if (mode == Mode::infer || rate_ == 0.0) {
    passthrough_ = true;
    return input;
  }
  passthrough_ = false;
  if (!(frozen_ && mask_.size() == input.size())) {
    const T scale = static_cast<T>(1.0 / (1.0 - rate_));
    mask_.resize(input.size());
    for (auto& v : mask_) v = rng_.uniform() < rate_ ? T(0) : scale;
  }
  BasicTensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] * mask_[i];
  return out;
}

template <typename T>
BasicTensor<T> Dropout<T>::backward(const BasicTensor<T>& grad_out) {
  require_cache<T>(cached_, "dropout");
  if (passthrough_) return grad_out;
  if (grad_out.size() != mask_.size()) throw ShapeError("dropout backward: grad shape mismatch");
  BasicTensor<T> grad_in(grad_out.shape());
  for (std::size_t i = 0; i < grad_out.size(); ++i) grad_in[i] = grad_out[i] * mask_[i];
  return grad_in;
}

// ---------------------------------------------------------------- Flatten

template <typename T>
Shape Flatten<T>::output_shape(const Shape& s) const {
  return Shape(std::vector<std::size_t>{s.count()});
}

template <typename T>
BasicTensor<T> Flatten<T>::forward(const BasicTensor<T>& input, Mode) {
  if (input.shape().rank() < 2) throw ShapeError("flatten expects a batched input");
  input_shape_ = input.shape();
  cached_ = true;
  const std::size_t n = input.shape()[0];
  return input.reshaped(Shape(std::vector<std::size_t>{n, input.size() / n}));
}

template <typename T>
BasicTensor<T> Flatten<T>::backward(const BasicTensor<T>& grad_out) {
  require_cache<T>(cached_, "flatten");
  return grad_out.reshaped(input_shape_);
}

// ---------------------------------------------------------------- softmax

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  if (logits.shape().rank() != 2) throw ShapeError("softmax expects [N,K] logits, got " + logits.shape().str());
  const std::size_t n = logits.shape()[0], k = logits.shape()[1];
  BasicTensor<T> out(logits.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const T* z = logits.data() + r * k;
    T zmax = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      if (!std::isfinite(z[j])) throw NumericError("softmax: non-finite logit in row " + std::to_string(r));
      zmax = std::max(zmax, z[j]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(static_cast<double>(z[j] - zmax));
    for (std::size_t j = 0; j < k; ++j)
      out[r * k + j] = static_cast<T>(std::exp(static_cast<double>(z[j] - zmax)) / total);
  }
  return out;
}

template class Layer<float>;
template class Layer<double>;
template class Conv2D<float>;
template class Conv2D<double>;
template class MaxPool2D<float>;
template class MaxPool2D<double>;
template class Dense<float>;
template class Dense<double>;
template class ReLU<float>;
template class ReLU<double>;
template class BatchNorm<float>;
template class BatchNorm<double>;
template class Dropout<float>;
template class Dropout<double>;
template class Flatten<float>;
template class Flatten<double>;
template BasicTensor<float> softmax(const BasicTensor<float>&);
template BasicTensor<double> softmax(const BasicTensor<double>&);

}  // namespace stormcnn
