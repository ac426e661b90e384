#include "stormcnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>

#include "stormcnn/model.hpp"
#include "stormcnn/optim.hpp"

namespace stormcnn {

double relative_error(double analytic, double numeric, double abs_floor) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= abs_floor) return 0.0;
  return diff / std::max(std::abs(analytic), std::abs(numeric));
}

namespace {

Shape dims(std::initializer_list<std::size_t> d) { return Shape(std::vector<std::size_t>(d)); }

Tensor64 uniform_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor64 t(shape);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Values at least 0.01 apart so a finite-difference step never flips a max or a ReLU kink.
Tensor64 separated_tensor(const Shape& shape, Rng& rng, bool avoid_zero) {
  Tensor64 t(shape);
  std::vector<std::size_t> perm(t.size());
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  const double half = static_cast<double>(perm.size()) / 2.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    double v = (static_cast<double>(perm[i]) - half) * 0.02 + rng.uniform(-0.005, 0.005);
    if (avoid_zero && std::abs(v) < 0.005) v = 0.011;
    t[i] = v;
  }
  return t;
}

double weighted_sum(const Tensor64& out, const Tensor64& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * weights[i];
  return s;
}

struct LayerCase {
  std::unique_ptr<Layer<double>> layer;
  Tensor64 input;
};

LayerCase make_case(LayerKind kind, Rng& rng) {
  LayerCase c;
  switch (kind) {
    case LayerKind::conv2d: {
      const std::size_t cin = 1 + rng.below(3), stride = 1 + rng.below(2), pad = rng.below(2);
      const std::size_t k = 2 + rng.below(2);
      auto conv = std::make_unique<Conv2D<double>>(cin, ConvSpec::square(1 + rng.below(3), k, stride, pad));
      conv->weights() = uniform_tensor(conv->weights().shape(), rng);
      conv->bias() = uniform_tensor(conv->bias().shape(), rng);
      c.input = uniform_tensor(dims({2, 5, 5, cin}), rng);
      c.layer = std::move(conv);
      break;
    }
    case LayerKind::maxpool2d: {
      const std::size_t p = 2 + rng.below(2);
      c.layer = std::make_unique<MaxPool2D<double>>(p, p, 1 + rng.below(p), 1 + rng.below(p));
      c.input = separated_tensor(dims({2, 6, 6, 2}), rng, false);
      break;
    }
    case LayerKind::dense: {
      const std::size_t din = 2 + rng.below(5), dout = 1 + rng.below(4);
      auto dense = std::make_unique<Dense<double>>(din, dout);
      dense->weights() = uniform_tensor(dense->weights().shape(), rng);
      dense->bias() = uniform_tensor(dense->bias().shape(), rng);
      c.input = uniform_tensor(dims({3, din}), rng);
      c.layer = std::move(dense);
      break;
    }
    case LayerKind::relu:
      c.layer = std::make_unique<ReLU<double>>();
      c.input = separated_tensor(dims({2, 3, 3, 2}), rng, true);
      break;
    case LayerKind::batchnorm: {
      const std::size_t ch = 1 + rng.below(3);
      auto bn = std::make_unique<BatchNorm<double>>(ch);
      bn->gamma() = uniform_tensor(bn->gamma().shape(), rng, 0.5, 1.5);
      bn->beta() = uniform_tensor(bn->beta().shape(), rng);
      c.input = rng.below(2) ? uniform_tensor(dims({4, 2, 2, ch}), rng) : uniform_tensor(dims({5, ch}), rng);
      c.layer = std::move(bn);
      break;
    }
    case LayerKind::dropout: {
      auto drop = std::make_unique<Dropout<double>>(0.3, rng.next_u64());
      drop->freeze_mask(true);
      c.input = uniform_tensor(dims({3, 7}), rng);
      c.layer = std::move(drop);
      break;
    }
    case LayerKind::flatten:
      c.layer = std::make_unique<Flatten<double>>();
      c.input = uniform_tensor(dims({2, 3, 2, 2}), rng);
      break;
  }
  return c;
}

struct Probe {
  Tensor64* tensor;
  std::vector<double> analytic;
};

void check_entries(Probe& probe, const std::function<double()>& loss, const GradCheckOptions& opt,
                   GradCheckResult& result) {
  auto values = probe.tensor->values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + opt.step;
    const double up = loss();
    values[i] = saved - opt.step;
    const double down = loss();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * opt.step);
    result.max_rel_error = std::max(result.max_rel_error, relative_error(probe.analytic[i], numeric, opt.abs_floor));
    ++result.checked;
  }
}

}  // namespace

GradCheckResult check_layer(LayerKind kind, const GradCheckOptions& options) {
  GradCheckResult result;
  result.name = to_string(kind);
  Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(kind)));
  for (std::size_t trial = 0; trial < options.trials; ++trial) {
    LayerCase c = make_case(kind, rng);
    Layer<double>& layer = *c.layer;
    const Tensor64 out = layer.forward(c.input, Mode::train);
    const Tensor64 weights = uniform_tensor(out.shape(), rng);
    const Tensor64 grad_in = layer.backward(weights);

    std::vector<Probe> probes;
    probes.push_back({&c.input, std::vector<double>(grad_in.values().begin(), grad_in.values().end())});
    for (auto& p : layer.params())
      probes.push_back({p.value, std::vector<double>(p.grad->values().begin(), p.grad->values().end())});

    auto loss = [&]() { return weighted_sum(layer.forward(c.input, Mode::train), weights); };
    for (auto& probe : probes) check_entries(probe, loss, options, result);
  }
  result.trials = options.trials;
  return result;
}

GradCheckResult check_toy_model(const GradCheckOptions& options) {
  GradCheckResult result;
  result.name = "toy model + softmax/cross-entropy";
  Rng rng(derive_seed(options.seed, 0x70e));
  const ArchSpec arch = parse_arch_layers("toy", "conv3k3p1,relu,flatten,fc2");
  for (std::size_t trial = 0; trial < options.trials; ++trial) {
    Model64 model = Model64::build(arch, dims({4, 4, 2}), 2, rng);
    Tensor64 x;
    // Redraw until no ReLU input lies within a few steps of the kink, where differences are meaningless.
    for (bool clear = false; !clear;) {
      for (auto& p : model.params()) *p.value = uniform_tensor(p.value->shape(), rng, -0.5, 0.5);
      x = uniform_tensor(dims({3, 4, 4, 2}), rng);
      const Tensor64 pre = model.layers()[0]->forward(x, Mode::infer);
      clear = std::all_of(pre.values().begin(), pre.values().end(),
                          [&](double v) { return std::abs(v) > 100.0 * options.step; });
    }
    Tensor64 y(dims({3, 2}));
    for (std::size_t r = 0; r < 3; ++r) y[r * 2 + rng.below(2)] = 1.0;

    const auto ce = cross_entropy(model.forward(x, Mode::train), y);
    model.backward(ce.grad_logits);
    auto loss = [&]() { return cross_entropy(model.forward(x, Mode::train), y).loss; };
    for (auto& p : model.params()) {
      Probe probe{p.value, std::vector<double>(p.grad->values().begin(), p.grad->values().end())};
      check_entries(probe, loss, options, result);
    }
  }
  result.trials = options.trials;
  return result;
}

std::vector<GradCheckResult> check_all(const GradCheckOptions& options) {
  std::vector<GradCheckResult> results;
  for (LayerKind kind : {LayerKind::conv2d, LayerKind::maxpool2d, LayerKind::dense, LayerKind::relu,
                         LayerKind::batchnorm, LayerKind::dropout, LayerKind::flatten})
    results.push_back(check_layer(kind, options));
  results.push_back(check_toy_model(options));
  return results;
}

}  // namespace stormcnn
