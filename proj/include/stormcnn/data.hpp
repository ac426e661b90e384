#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stormcnn/image_io.hpp"
#include "stormcnn/rng.hpp"
#include "stormcnn/tensor.hpp"

namespace stormcnn {

struct Sample {
  Tensor image;  // [H,W,C], values in [0,1]
  std::size_t label = 0;
  std::string path;
};

/// Labeled images. Class 0 is "damage" (the positive class), class 1 "no_damage".
struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::string> class_names{"damage", "no_damage"};
  std::string split;
  std::size_t skipped = 0;  // files that could not be decoded
  std::vector<std::string> warnings;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::vector<std::size_t> class_counts() const;
  std::vector<std::size_t> labels() const;
};

struct LoadOptions {
  std::size_t height = 128;
  std::size_t width = 128;
  bool resize = false;  // bilinear resize instead of rejecting other sizes
};

// Reads <root>/damage and <root>/no_damage, ordered lexicographically by path, pixels scaled by 1/255.
Dataset load_dataset(const std::filesystem::path& root, const LoadOptions& options = {});
// Every image directly under `root` (no class folders); labels are left at 0.
Dataset load_unlabeled(const std::filesystem::path& root, const LoadOptions& options = {});

Tensor image_to_tensor(const RawImage& image);
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);

struct AugmentConfig {
  bool horizontal_flip = true;
  bool vertical_flip = true;
  bool rotate = true;     // one of 90/180/270 degrees, chosen uniformly
  bool translate = true;  // shift by up to shift_max pixels per axis, zero fill
  double horizontal_flip_prob = 0.5;
  double vertical_flip_prob = 0.5;
  double rotate_prob = 0.5;
  double translate_prob = 0.5;
  std::size_t shift_max = 8;

  static AugmentConfig disabled();
  void validate() const;
};

Tensor flip_horizontal(const Tensor& image);
Tensor flip_vertical(const Tensor& image);
// Counter-clockwise quarter turns; non-square images only accept multiples of two.
Tensor rotate_quarter(const Tensor& image, int turns);
Tensor translate(const Tensor& image, std::ptrdiff_t dy, std::ptrdiff_t dx);

Sample augment(const Sample& sample, const AugmentConfig& config, Rng& rng);

struct Batch {
  Tensor images;  // [B,H,W,C]
  Tensor labels;  // one-hot [B,K]
  std::vector<std::size_t> indices;
};

// Epoch order split into batches; the last batch may be short.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, std::size_t batch_size, bool shuffle, Rng& rng);

// Stacks the given samples. With `augment` set, sample i is augmented from a stream seeded by (seed, epoch, i).
Batch assemble_batch(const Dataset& dataset, std::span<const std::size_t> indices, const AugmentConfig* augment = nullptr,
                     std::uint64_t seed = 0, std::size_t epoch = 0);

std::vector<Batch> make_batches(const Dataset& dataset, std::size_t batch_size, bool shuffle, Rng& rng);

struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Class-stratified k-fold split over sample indices. Folds partition the index set, their
/// sizes differ by at most one, and each class is spread across folds within one sample.
std::vector<FoldSplit> kfold_split(std::span<const std::size_t> labels, std::size_t k, Rng& rng);
std::vector<FoldSplit> kfold_split(const Dataset& dataset, std::size_t k, Rng& rng);

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices);
Dataset concat(const Dataset& a, const Dataset& b);

}  // namespace stormcnn
