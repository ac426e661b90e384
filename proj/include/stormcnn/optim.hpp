#pragma once

#include <vector>

#include "stormcnn/layers.hpp"
#include "stormcnn/rng.hpp"
#include "stormcnn/tensor.hpp"

namespace stormcnn {

inline constexpr double kProbabilityClip = 1e-7;

template <typename T>
struct LossAndGrad {
  T loss;
  BasicTensor<T> grad_logits;  // (p - y) / N, the fused softmax + cross-entropy gradient
};

// Mean categorical cross-entropy over softmax rows; labels must be one-hot.
template <typename T>
LossAndGrad<T> cross_entropy(const BasicTensor<T>& probs, const BasicTensor<T>& labels);

// lambda * sum(w^2) over parameters flagged for decay; adds 2*lambda*w to their gradients.
template <typename T>
T l2_penalty(const std::vector<Param<T>>& params, T lambda, bool accumulate_grad = true);

// Classical momentum: v <- mu*v - lr*g; w <- w + v.
template <typename T>
void sgd_momentum_step(BasicTensor<T>& param, const BasicTensor<T>& grad, BasicTensor<T>& velocity, T lr, T momentum);

template <typename T>
class SgdMomentum {
 public:
  static constexpr double kDefaultLearningRate = 0.001;
  static constexpr double kDefaultMomentum = 0.9;

  explicit SgdMomentum(T lr = T(kDefaultLearningRate), T momentum = T(kDefaultMomentum));

  // Velocities are created lazily (zero-filled) on first sight of each parameter slot.
  void step(const std::vector<Param<T>>& params);

  T learning_rate() const { return lr_; }
  T momentum() const { return momentum_; }
  const std::vector<BasicTensor<T>>& velocities() const { return velocity_; }

 private:
  T lr_, momentum_;
  std::vector<BasicTensor<T>> velocity_;
};

// I.i.d. uniform on [-sqrt(6/fan_in), +sqrt(6/fan_in)].
template <typename T>
BasicTensor<T> he_uniform_init(const Shape& shape, std::size_t fan_in, Rng& rng);

}  // namespace stormcnn
