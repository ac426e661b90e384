#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stormcnn/layers.hpp"
#include "stormcnn/rng.hpp"
#include "stormcnn/tensor.hpp"

namespace stormcnn {

inline constexpr std::size_t kDamageClass = 0;
inline constexpr std::size_t kNoDamageClass = 1;

// Architecture modifiers that compose onto any catalog entry.
struct ModelOptions {
  bool batchnorm = false;  // batch-norm after every convolution, before its ReLU
  bool dropout = false;    // dropout after every hidden fully connected layer
  double dropout_rate = 0.5;
};

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  ConvSpec conv{};                       // conv2d
  std::size_t pool = 0, pool_stride = 0;  // maxpool2d
  std::size_t units = 0;                  // dense
  double rate = 0.0;                      // dropout

  std::string token() const;
};

/// A named, ordered layer recipe. The textual form is a comma-separated token list:
///   conv<F>k<K>[s<S>][p<P>]  pool<K>[s<S>]  relu  bn  drop<rate>  flatten  fc<units>
/// e.g. "conv8k3p1,relu,pool2,flatten,fc2".
struct ArchSpec {
  std::string id;
  std::vector<LayerSpec> layers;

  std::string str() const;
};

inline constexpr std::string_view kCatalogIds[] = {"alexnet", "vgg16", "vgg3block"};

bool is_catalog_arch(std::string_view id);
ArchSpec parse_arch_layers(std::string id, std::string_view text);
ArchSpec catalog_arch(std::string_view id, std::size_t num_classes, const ModelOptions& options = {});
// Inserts batch-norm / dropout per the options; existing dropout after an FC is kept as is.
ArchSpec apply_modifiers(const ArchSpec& base, const ModelOptions& options);

struct LayerPlanRow {
  std::string label;
  LayerKind kind;
  Shape output;  // per-sample
  std::size_t trainable = 0;
  std::size_t non_trainable = 0;
};

struct ParameterReport {
  Shape input;
  std::vector<LayerPlanRow> rows;
  std::size_t total_trainable = 0;
  std::size_t total_non_trainable = 0;
};

// Shape and parameter accounting without allocating any parameters.
ParameterReport plan_parameters(const ArchSpec& arch, const Shape& input_shape);

struct ModelInfo {
  std::string arch_id;
  std::string layers;
  Shape input_shape;
  std::size_t num_classes = 2;
  std::vector<std::string> class_names{"damage", "no_damage"};
  RngRecord rng;
  std::string history_summary;
};

template <typename T>
class BasicModel {
 public:
  // Builds the layer stack and He-initializes every weight from `rng`.
  static BasicModel build(const ArchSpec& arch, const Shape& input_shape, std::size_t num_classes, Rng& rng);
  // Same stack, parameters left at zero (checkpoint loading fills them).
  static BasicModel build_uninitialized(const ArchSpec& arch, const Shape& input_shape, std::size_t num_classes,
                                        std::uint64_t seed = 0);

  BasicTensor<T> forward_logits(const BasicTensor<T>& batch, Mode mode);
  BasicTensor<T> forward(const BasicTensor<T>& batch, Mode mode);
  // Chain rule in reverse from d(loss)/d(logits); fills every parameter gradient.
  void backward(const BasicTensor<T>& grad_logits);

  // Per-layer output shapes (per-sample) produced by an Infer-mode pass over `batch`.
  std::vector<Shape> trace_shapes(const BasicTensor<T>& batch);

  std::vector<Param<T>> params();
  std::vector<Buffer<T>> buffers();
  std::vector<BasicTensor<T>> snapshot();
  void restore(const std::vector<BasicTensor<T>>& state);

  ParameterReport count_parameters();
  void freeze_dropout_masks(bool frozen);

  std::vector<std::unique_ptr<Layer<T>>>& layers() { return layers_; }
  const ModelInfo& info() const { return info_; }
  ModelInfo& info() { return info_; }

 private:
  BasicModel() = default;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  ModelInfo info_;
  bool forwarded_ = false;
};

using Model = BasicModel<float>;
using Model64 = BasicModel<double>;

// Two classes: damage iff p_damage > 0.5 (a tie goes to no_damage). Otherwise argmax.
template <typename T>
std::vector<std::size_t> predict_labels(const BasicTensor<T>& probs);

template <typename T>
std::vector<std::size_t> predict(BasicModel<T>& model, const BasicTensor<T>& batch) {
  return predict_labels(model.forward(batch, Mode::infer));
}

// Versioned binary checkpoint; see README for the byte layout.
inline constexpr char kCheckpointMagic[8] = {'S', 'T', 'R', 'M', 'C', 'N', 'N', '\x01'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path, std::optional<std::string> expected_arch = std::nullopt);

}  // namespace stormcnn
