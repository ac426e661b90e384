#include "stormcnn/optim.hpp"

#include <algorithm>
#include <cmath>

namespace stormcnn {

template <typename T>
LossAndGrad<T> cross_entropy(const BasicTensor<T>& probs, const BasicTensor<T>& labels) {
  if (probs.shape().rank() != 2 || probs.shape() != labels.shape())
    throw ShapeError("cross_entropy: probs " + probs.shape().str() + " and labels " + labels.shape().str() +
                     " must be matching [N,K]");
  const std::size_t n = probs.shape()[0], k = probs.shape()[1];
  double total = 0.0;
  BasicTensor<T> grad(probs.shape());
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t ones = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const T y = labels[r * k + j];
      if (y == T(1)) {
        ++ones;
      } else if (y != T(0)) {
        throw InputError("cross_entropy: label row " + std::to_string(r) + " is not one-hot");
      }
      if (y == T(1)) {
        const double p = std::clamp(static_cast<double>(probs[r * k + j]), kProbabilityClip, 1.0 - kProbabilityClip);
        total -= std::log(p);
      }
      grad[r * k + j] = (probs[r * k + j] - y) / static_cast<T>(n);
    }
    if (ones != 1) throw InputError("cross_entropy: label row " + std::to_string(r) + " is not one-hot");
  }
  return {static_cast<T>(total / static_cast<double>(n)), std::move(grad)};
}

template <typename T>
T l2_penalty(const std::vector<Param<T>>& params, T lambda, bool accumulate_grad) {
  if (lambda < T(0)) throw ConfigError("weight decay lambda must be >= 0");
  if (lambda == T(0)) return T(0);
  double sum = 0.0;
  for (const auto& p : params) {
    if (!p.decay) continue;
    auto w = p.value->values();
    for (auto v : w) sum += static_cast<double>(v) * v;
    if (accumulate_grad) {
      auto g = p.grad->values();
      const T two_lambda = T(2) * lambda;
      for (std::size_t i = 0; i < w.size(); ++i) g[i] += two_lambda * w[i];
    }
  }
  return static_cast<T>(lambda * sum);
}

template <typename T>
void sgd_momentum_step(BasicTensor<T>& param, const BasicTensor<T>& grad, BasicTensor<T>& velocity, T lr, T momentum) {
  if (param.shape() != grad.shape() || param.shape() != velocity.shape())
    throw ShapeError("sgd step: param " + param.shape().str() + ", grad " + grad.shape().str() + ", velocity " +
                     velocity.shape().str() + " must match");
  T* w = param.data();
  T* v = velocity.data();
  const T* g = grad.data();
  for (std::size_t i = 0; i < param.size(); ++i) {
    v[i] = momentum * v[i] - lr * g[i];
    w[i] += v[i];
  }
}

template <typename T>
SgdMomentum<T>::SgdMomentum(T lr, T momentum) : lr_(lr), momentum_(momentum) {
  if (!(lr > T(0))) throw ConfigError("learning rate must be > 0");
  if (!(momentum >= T(0) && momentum < T(1))) throw ConfigError("momentum must lie in [0,1)");
}

template <typename T>
void SgdMomentum<T>::step(const std::vector<Param<T>>& params) {
  if (velocity_.size() < params.size())
    for (std::size_t i = velocity_.size(); i < params.size(); ++i)
      velocity_.emplace_back(params[i].value->shape());
  for (std::size_t i = 0; i < params.size(); ++i)
    sgd_momentum_step(*params[i].value, *params[i].grad, velocity_[i], lr_, momentum_);
}

template <typename T>
BasicTensor<T> he_uniform_init(const Shape& shape, std::size_t fan_in, Rng& rng) {
  if (fan_in == 0) throw ConfigError("he_uniform_init: fan_in must be >= 1");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  BasicTensor<T> out(shape);
  for (auto& v : out.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  return out;
}

template struct LossAndGrad<float>;
template struct LossAndGrad<double>;
template LossAndGrad<float> cross_entropy(const BasicTensor<float>&, const BasicTensor<float>&);
template LossAndGrad<double> cross_entropy(const BasicTensor<double>&, const BasicTensor<double>&);
template float l2_penalty(const std::vector<Param<float>>&, float, bool);
template double l2_penalty(const std::vector<Param<double>>&, double, bool);
template void sgd_momentum_step(BasicTensor<float>&, const BasicTensor<float>&, BasicTensor<float>&, float, float);
template void sgd_momentum_step(BasicTensor<double>&, const BasicTensor<double>&, BasicTensor<double>&, double,
                                double);
template class SgdMomentum<float>;
template class SgdMomentum<double>;
template BasicTensor<float> he_uniform_init(const Shape&, std::size_t, Rng&);
template BasicTensor<double> he_uniform_init(const Shape&, std::size_t, Rng&);

}  // namespace stormcnn
