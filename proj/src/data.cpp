#include "stormcnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stormcnn/errors.hpp"

namespace stormcnn {

namespace fs = std::filesystem;

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(class_names.size(), 0);
  for (const auto& s : samples) {
    if (s.label >= counts.size()) counts.resize(s.label + 1, 0);
    ++counts[s.label];
  }
  return counts;
}

std::vector<std::size_t> Dataset::labels() const {
  std::vector<std::size_t> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

Tensor image_to_tensor(const RawImage& image) {
  Tensor t(Shape(std::vector<std::size_t>{image.height, image.width, 3}));
  for (std::size_t i = 0; i < image.rgb.size(); ++i) t[i] = static_cast<float>(image.rgb[i] / 255.0);
  return t;
}

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
  const std::size_t h = image.shape()[0], w = image.shape()[1], c = image.shape()[2];
  Tensor out(Shape(std::vector<std::size_t>{height, width, c}));
  // Half-pixel centres, edge clamped.
  const double sy = static_cast<double>(h) / static_cast<double>(height);
  const double sx = static_cast<double>(w) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy), y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx), x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double top = (1 - wx) * image[(y0 * w + x0) * c + ch] + wx * image[(y0 * w + x1) * c + ch];
        const double bot = (1 - wx) * image[(y1 * w + x0) * c + ch] + wx * image[(y1 * w + x1) * c + ch];
        out[(y * width + x) * c + ch] = static_cast<float>((1 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

namespace {

std::vector<fs::path> sorted_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

void load_folder(const fs::path& dir, std::size_t label, const LoadOptions& options, Dataset& ds) {
  std::size_t loaded = 0;
  for (const auto& file : sorted_files(dir)) {
    if (!is_image_extension(file)) {
      ++ds.skipped;
      ds.warnings.push_back("skipped non-image file '" + file.string() + "'");
      continue;
    }
    RawImage raw;
    try {
      raw = decode_image(file);
    } catch (const InputError& e) {
      ++ds.skipped;
      ds.warnings.push_back(std::string("skipped: ") + e.what());
      continue;
    }
    Tensor image = image_to_tensor(raw);
    if (raw.height != options.height || raw.width != options.width) {
      if (!options.resize)
        throw InputError("'" + file.string() + "' is " + std::to_string(raw.width) + "x" + std::to_string(raw.height) +
                         ", expected " + std::to_string(options.width) + "x" + std::to_string(options.height) +
                         " (enable resize to rescale)");
      image = resize_bilinear(image, options.height, options.width);
    }
    ds.samples.push_back({std::move(image), label, file.string()});
    ++loaded;
  }
  if (loaded == 0) ds.warnings.push_back("class folder '" + dir.string() + "' contains no images");
}

}  // namespace

Dataset load_dataset(const fs::path& root, const LoadOptions& options) {
  Dataset ds;
  ds.split = root.filename().string();
  for (std::size_t label = 0; label < ds.class_names.size(); ++label) {
    const fs::path dir = root / ds.class_names[label];
    if (!fs::is_directory(dir))
      throw LayoutError("dataset root '" + root.string() + "' is missing class folder '" + ds.class_names[label] + "/'");
  }
  for (std::size_t label = 0; label < ds.class_names.size(); ++label)
    load_folder(root / ds.class_names[label], label, options, ds);
  return ds;
}

Dataset load_unlabeled(const fs::path& root, const LoadOptions& options) {
  if (!fs::is_directory(root)) throw LayoutError("'" + root.string() + "' is not a directory");
  Dataset ds;
  ds.split = root.filename().string();
  load_folder(root, 0, options, ds);
  return ds;
}

// ---------------------------------------------------------------- augmentation

AugmentConfig AugmentConfig::disabled() {
  AugmentConfig c;
  c.horizontal_flip = c.vertical_flip = c.rotate = c.translate = false;
  return c;
}

void AugmentConfig::validate() const {
  for (double p : {horizontal_flip_prob, vertical_flip_prob, rotate_prob, translate_prob})
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("augmentation probabilities must lie in [0,1]");
}

Tensor flip_horizontal(const Tensor& image) {
  const std::size_t h = image.shape()[0], w = image.shape()[1], c = image.shape()[2];
  Tensor out(image.shape());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) out[(y * w + x) * c + ch] = image[(y * w + (w - 1 - x)) * c + ch];
  return out;
}

Tensor flip_vertical(const Tensor& image) {
  const std::size_t h = image.shape()[0], w = image.shape()[1], c = image.shape()[2];
  Tensor out(image.shape());
  for (std::size_t y = 0; y < h; ++y)
    std::copy_n(image.data() + (h - 1 - y) * w * c, w * c, out.data() + y * w * c);
  return out;
}

Tensor rotate_quarter(const Tensor& image, int turns) {
  turns = ((turns % 4) + 4) % 4;
  const std::size_t h = image.shape()[0], w = image.shape()[1], c = image.shape()[2];
  if (turns % 2 == 1 && h != w) throw ShapeError("quarter-turn rotation needs a square image, got " + image.shape().str());
  Tensor out(image.shape());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      std::size_t sy = y, sx = x;
      switch (turns) {
        case 1: sy = x, sx = w - 1 - y; break;          // counter-clockwise
        case 2: sy = h - 1 - y, sx = w - 1 - x; break;
        case 3: sy = h - 1 - x, sx = y; break;
        default: break;
      }
      for (std::size_t ch = 0; ch < c; ++ch) out[(y * w + x) * c + ch] = image[(sy * w + sx) * c + ch];
    }
  return out;
}

Tensor translate(const Tensor& image, std::ptrdiff_t dy, std::ptrdiff_t dx) {
  const auto h = static_cast<std::ptrdiff_t>(image.shape()[0]);
  const auto w = static_cast<std::ptrdiff_t>(image.shape()[1]);
  const std::size_t c = image.shape()[2];
  Tensor out(image.shape());
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    const std::ptrdiff_t sy = y - dy;
    if (sy < 0 || sy >= h) continue;
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      const std::ptrdiff_t sx = x - dx;
      if (sx < 0 || sx >= w) continue;
      std::copy_n(image.data() + (sy * w + sx) * static_cast<std::ptrdiff_t>(c), c,
                  out.data() + (y * w + x) * static_cast<std::ptrdiff_t>(c));
    }
  }
  return out;
}

Sample augment(const Sample& sample, const AugmentConfig& config, Rng& rng) {
  config.validate();
  Sample out = sample;
  // Each enabled transform consumes its draws whether or not it fires, so streams stay aligned.
  if (config.horizontal_flip && rng.uniform() < config.horizontal_flip_prob) out.image = flip_horizontal(out.image);
  if (config.vertical_flip && rng.uniform() < config.vertical_flip_prob) out.image = flip_vertical(out.image);
  if (config.rotate) {
    const bool fire = rng.uniform() < config.rotate_prob;
    const bool square = out.image.shape()[0] == out.image.shape()[1];
    const int turns = square ? 1 + static_cast<int>(rng.below(3)) : 2;
    if (fire) out.image = rotate_quarter(out.image, turns);
  }
  if (config.translate) {
    const bool fire = rng.uniform() < config.translate_prob;
    const auto span = static_cast<std::uint64_t>(2 * config.shift_max + 1);
    const auto dy = static_cast<std::ptrdiff_t>(rng.below(span)) - static_cast<std::ptrdiff_t>(config.shift_max);
    const auto dx = static_cast<std::ptrdiff_t>(rng.below(span)) - static_cast<std::ptrdiff_t>(config.shift_max);
    if (fire) out.image = translate(out.image, dy, dx);
  }
  return out;
}

// ---------------------------------------------------------------- batching

std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, std::size_t batch_size, bool shuffle, Rng& rng) {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle)
    for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < count; start += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(count, start + batch_size)));
  return batches;
}

Batch assemble_batch(const Dataset& dataset, std::span<const std::size_t> indices, const AugmentConfig* augment_config,
                     std::uint64_t seed, std::size_t epoch) {
  if (indices.empty()) throw InputError("cannot assemble an empty batch");
  const Shape& sample_shape = dataset.samples.at(indices[0]).image.shape();
  const std::size_t per = sample_shape.count();
  const std::size_t k = dataset.class_names.size();
  std::vector<std::size_t> dims{indices.size()};
  dims.insert(dims.end(), sample_shape.dims().begin(), sample_shape.dims().end());
  Batch batch{Tensor(Shape(dims)), Tensor(Shape(std::vector<std::size_t>{indices.size(), k})),
              std::vector<std::size_t>(indices.begin(), indices.end())};
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Sample& s = dataset.samples.at(indices[b]);
    if (s.image.shape() != sample_shape) throw ShapeError("batch samples have mixed image shapes");
    if (s.label >= k) throw InputError("sample label out of range: " + s.path);
    if (augment_config) {
      Rng rng(derive_seed(seed, epoch, indices[b]));
      const Sample aug = augment(s, *augment_config, rng);
      std::copy_n(aug.image.data(), per, batch.images.data() + b * per);
    } else {
      std::copy_n(s.image.data(), per, batch.images.data() + b * per);
    }
    batch.labels[b * k + s.label] = 1.0f;
  }
  return batch;
}

std::vector<Batch> make_batches(const Dataset& dataset, std::size_t batch_size, bool shuffle, Rng& rng) {
  std::vector<Batch> out;
  for (const auto& idx : batch_indices(dataset.size(), batch_size, shuffle, rng))
    out.push_back(assemble_batch(dataset, idx));
  return out;
}

// ---------------------------------------------------------------- k-fold

std::vector<FoldSplit> kfold_split(std::span<const std::size_t> labels, std::size_t k, Rng& rng) {
  if (k < 2) throw ConfigError("k-fold needs k >= 2");
  if (k > labels.size())
    throw ConfigError("k-fold with k=" + std::to_string(k) + " exceeds dataset size " + std::to_string(labels.size()));

  std::size_t classes = 0;
  for (auto l : labels) classes = std::max(classes, l + 1);
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  // Deal each shuffled class round-robin, continuing the fold counter across classes.
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t counter = 0;
  for (auto& members : by_class) {
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.below(i)]);
    for (auto idx : members) folds[counter++ % k].push_back(idx);
  }

  std::vector<FoldSplit> splits(k);
  for (std::size_t f = 0; f < k; ++f) {
    std::sort(folds[f].begin(), folds[f].end());
    splits[f].validation = folds[f];
    for (std::size_t g = 0; g < k; ++g)
      if (g != f) splits[f].train.insert(splits[f].train.end(), folds[g].begin(), folds[g].end());
    std::sort(splits[f].train.begin(), splits[f].train.end());
  }
  return splits;
}

std::vector<FoldSplit> kfold_split(const Dataset& dataset, std::size_t k, Rng& rng) {
  const auto labels = dataset.labels();
  return kfold_split(std::span<const std::size_t>(labels), k, rng);
}

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices) {
  Dataset out;
  out.class_names = dataset.class_names;
  out.split = dataset.split;
  out.samples.reserve(indices.size());
  for (auto i : indices) out.samples.push_back(dataset.samples.at(i));
  return out;
}

Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.class_names != b.class_names) throw InputError("cannot combine datasets with different class names");
  Dataset out = a;
  out.split = a.split + "+" + b.split;
  out.samples.insert(out.samples.end(), b.samples.begin(), b.samples.end());
  out.skipped += b.skipped;
  out.warnings.insert(out.warnings.end(), b.warnings.begin(), b.warnings.end());
  return out;
}

}  // namespace stormcnn
