#pragma once

#include <memory>
#include <string>
#include <vector>

#include "stormcnn/rng.hpp"
#include "stormcnn/tensor.hpp"

namespace stormcnn {

enum class Mode { train, infer };

enum class LayerKind { conv2d, maxpool2d, dense, relu, batchnorm, dropout, flatten };

const char* to_string(LayerKind kind);

struct ConvSpec {
  std::size_t filters = 1;
  std::size_t kernel_h = 1, kernel_w = 1;
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_top = 0, pad_bottom = 0, pad_left = 0, pad_right = 0;

  static ConvSpec square(std::size_t filters, std::size_t kernel, std::size_t stride, std::size_t pad) {
    return {filters, kernel, kernel, stride, stride, pad, pad, pad, pad};
  }
};

// floor((in + pad - k) / s) + 1, or 0 when the window does not fit.
std::size_t window_extent(std::size_t in, std::size_t pad_total, std::size_t kernel, std::size_t stride);

template <typename T>
struct Param {
  std::string name;
  BasicTensor<T>* value;
  BasicTensor<T>* grad;
  bool decay;  // subject to L2 weight decay
};

template <typename T>
struct Buffer {
  std::string name;
  BasicTensor<T>* value;
};

/// One network stage. Batched tensors carry the batch on axis 0; `output_shape`
/// works on per-sample shapes. `backward` consumes the cache written by the most
/// recent `forward` and overwrites (does not accumulate) parameter gradients.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  // Human-readable row label, e.g. "2-D Convolutional 32@(3x3)".
  virtual std::string label() const = 0;
  virtual Shape output_shape(const Shape& sample_shape) const = 0;

  virtual BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) = 0;
  virtual BasicTensor<T> backward(const BasicTensor<T>& grad_out) = 0;

  virtual std::vector<Param<T>> params() { return {}; }
  virtual std::vector<Buffer<T>> buffers() { return {}; }
  virtual void initialize(Rng&) {}

  std::size_t trainable_count();
  std::size_t non_trainable_count();
};

template <typename T>
class Conv2D final : public Layer<T> {
 public:
  Conv2D(std::size_t in_channels, ConvSpec spec);

  LayerKind kind() const override { return LayerKind::conv2d; }
  std::string label() const override;
  Shape output_shape(const Shape& sample_shape) const override;
  BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
  std::vector<Param<T>> params() override;
  void initialize(Rng& rng) override;

  const ConvSpec& spec() const { return spec_; }
  std::size_t in_channels() const { return in_channels_; }
  BasicTensor<T>& weights() { return weights_; }  // [kh,kw,Cin,Cout]
  BasicTensor<T>& bias() { return bias_; }
  const BasicTensor<T>& weight_grad() const { return weight_grad_; }
  const BasicTensor<T>& bias_grad() const { return bias_grad_; }

 private:
  void im2col(const T* sample, std::size_t h, std::size_t w, std::size_t oh, std::size_t ow, T* col) const;
  void col2im(const T* col, std::size_t h, std::size_t w, std::size_t oh, std::size_t ow, T* sample) const;

  std::size_t in_channels_;
  ConvSpec spec_;
  BasicTensor<T> weights_, bias_, weight_grad_, bias_grad_;
  BasicTensor<T> input_;
  bool cached_ = false;
};

template <typename T>
class MaxPool2D final : public Layer<T> {
 public:
  MaxPool2D(std::size_t pool_h, std::size_t pool_w, std::size_t stride_h, std::size_t stride_w);

  LayerKind kind() const override { return LayerKind::maxpool2d; }
  std::string label() const override;
  Shape output_shape(const Shape& sample_shape) const override;
  BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;

 private:
  std::size_t pool_h_, pool_w_, stride_h_, stride_w_;
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
  bool cached_ = false;
};

template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(std::size_t inputs, std::size_t outputs);

  LayerKind kind() const override { return LayerKind::dense; }
  std::string label() const override { return "Fully Connected"; }
  Shape output_shape(const Shape& sample_shape) const override;
  BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
  std::vector<Param<T>> params() override;
  void initialize(Rng& rng) override;

  std::size_t inputs() const { return inputs_; }
  std::size_t outputs() const { return outputs_; }
  BasicTensor<T>& weights() { return weights_; }  // [Din,Dout]
  BasicTensor<T>& bias() { return bias_; }
  const BasicTensor<T>& weight_grad() const { return weight_grad_; }
  const BasicTensor<T>& bias_grad() const { return bias_grad_; }

 private:
  std::size_t inputs_, outputs_;
  BasicTensor<T> weights_, bias_, weight_grad_, bias_grad_;
  BasicTensor<T> input_;
  bool cached_ = false;
};

template <typename T>
class ReLU final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::relu; }
  std::string label() const override { return "ReLU"; }
  Shape output_shape(const Shape& sample_shape) const override { return sample_shape; }
  BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;

 private:
  BasicTensor<T> input_;
  bool cached_ = false;
};

/// Per-channel normalization over every axis but the last.
template <typename T>
class BatchNorm final : public Layer<T> {
 public:
  static constexpr double kDefaultEpsilon = 1e-5;
  static constexpr double kDefaultMomentum = 0.99;

  explicit BatchNorm(std::size_t channels, double epsilon = kDefaultEpsilon,
                     double momentum = kDefaultMomentum);

  LayerKind kind() const override { return LayerKind::batchnorm; }
  std::string label() const override { return "Batch normalization"; }
  Shape output_shape(const Shape& sample_shape) const override;
  BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
  std::vector<Param<T>> params() override;
  std::vector<Buffer<T>> buffers() override;
  void initialize(Rng& rng) override;

  BasicTensor<T>& gamma() { return gamma_; }
  BasicTensor<T>& beta() { return beta_; }
  BasicTensor<T>& running_mean() { return running_mean_; }
  BasicTensor<T>& running_var() { return running_var_; }
  const BasicTensor<T>& gamma_grad() const { return gamma_grad_; }
  const BasicTensor<T>& beta_grad() const { return beta_grad_; }

 private:
  std::size_t channels_;
  double epsilon_, momentum_;
  BasicTensor<T> gamma_, beta_, gamma_grad_, beta_grad_;
  BasicTensor<T> running_mean_, running_var_;
  BasicTensor<T> normalized_;  // cached x-hat
  std::vector<T> inv_std_;
  Mode cached_mode_ = Mode::infer;
  bool cached_ = false;
};

/// Inverted dropout: survivors are scaled by 1/(1-p) in Train mode, Infer is the identity.
template <typename T>
class Dropout final : public Layer<T> {
 public:
  static constexpr double kDefaultRate = 0.5;

  Dropout(double rate, std::uint64_t seed);

  LayerKind kind() const override { return LayerKind::dropout; }
  std::string label() const override;
  Shape output_shape(const Shape& sample_shape) const override { return sample_shape; }
  BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;

  double rate() const { return rate_; }
  // While frozen, Train-mode forward reuses the last mask instead of drawing a new one.
  void freeze_mask(bool frozen) { frozen_ = frozen; }
  const std::vector<T>& mask() const { return mask_; }
  Rng& rng() { return rng_; }

 private:
  double rate_;
  Rng rng_;
  std::vector<T> mask_;  // 0 or 1/(1-p)
  bool frozen_ = false;
  bool cached_ = false;
  bool passthrough_ = true;
};

template <typename T>
class Flatten final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::flatten; }
  std::string label() const override { return "Flattening"; }
  Shape output_shape(const Shape& sample_shape) const override;
  BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;

 private:
  Shape input_shape_;
  bool cached_ = false;
};

// Row-wise numerically stable softmax over [N,K] logits.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

}  // namespace stormcnn
