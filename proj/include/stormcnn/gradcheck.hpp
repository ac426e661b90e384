#pragma once

#include <string>
#include <vector>

#include "stormcnn/layers.hpp"

namespace stormcnn {

struct GradCheckOptions {
  std::size_t trials = 20;
  double step = 1e-4;
  double tolerance = 1e-4;
  double abs_floor = 1e-10;  // both sides this close count as exact (zero gradients)
  std::uint64_t seed = 1;
};

struct GradCheckResult {
  std::string name;
  std::size_t trials = 0;
  std::size_t checked = 0;  // gradient entries compared
  double max_rel_error = 0.0;

  bool passed(double tolerance) const { return max_rel_error <= tolerance; }
};

double relative_error(double analytic, double numeric, double abs_floor);

/// Central finite differences against each layer's analytic backward, in double precision.
/// The scalar probed is sum(forward(x) * R) for a random fixed R, over the input and every parameter.
GradCheckResult check_layer(LayerKind kind, const GradCheckOptions& options = {});
// conv -> relu -> flatten -> dense -> softmax + cross-entropy, all parameters.
GradCheckResult check_toy_model(const GradCheckOptions& options = {});
std::vector<GradCheckResult> check_all(const GradCheckOptions& options = {});

}  // namespace stormcnn
