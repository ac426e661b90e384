#pragma once

// Reference implementations and fixtures shared by the unit tests and the acceptance runner.
// The oracles are written for clarity, independent of the library's optimized kernels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "stormcnn/data.hpp"
#include "stormcnn/image_io.hpp"
#include "stormcnn/layers.hpp"
#include "stormcnn/rng.hpp"
#include "stormcnn/tensor.hpp"

namespace testing {

using namespace stormcnn;

template <typename T>
BasicTensor<T> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  BasicTensor<T> t(shape);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
BasicTensor<T> naive_matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  BasicTensor<T> c(Shape({static_cast<std::int64_t>(m), static_cast<std::int64_t>(n)}));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += double(a[i * k + p]) * double(b[p * n + j]);
      c[i * n + j] = static_cast<T>(s);
    }
  return c;
}

// Direct convolution: one loop per output coordinate and per kernel tap.
template <typename T>
BasicTensor<T> naive_conv(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b, const ConvSpec& s) {
  const std::size_t n = x.shape()[0], h = x.shape()[1], wd = x.shape()[2], cin = x.shape()[3];
  const std::size_t oh = (h + s.pad_top + s.pad_bottom - s.kernel_h) / s.stride_h + 1;
  const std::size_t ow = (wd + s.pad_left + s.pad_right - s.kernel_w) / s.stride_w + 1;
  BasicTensor<T> y(Shape({std::int64_t(n), std::int64_t(oh), std::int64_t(ow), std::int64_t(s.filters)}));
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox)
        for (std::size_t f = 0; f < s.filters; ++f) {
          double acc = double(b[f]);
          for (std::size_t ky = 0; ky < s.kernel_h; ++ky)
            for (std::size_t kx = 0; kx < s.kernel_w; ++kx)
              for (std::size_t c = 0; c < cin; ++c) {
                const std::ptrdiff_t iy = std::ptrdiff_t(oy * s.stride_h + ky) - std::ptrdiff_t(s.pad_top);
                const std::ptrdiff_t ix = std::ptrdiff_t(ox * s.stride_w + kx) - std::ptrdiff_t(s.pad_left);
                if (iy < 0 || ix < 0 || iy >= std::ptrdiff_t(h) || ix >= std::ptrdiff_t(wd)) continue;
                acc += double(x.at({in, std::size_t(iy), std::size_t(ix), c})) * double(w.at({ky, kx, c, f}));
              }
          y.at({in, oy, ox, f}) = static_cast<T>(acc);
        }
  return y;
}

template <typename T>
BasicTensor<T> naive_maxpool(const BasicTensor<T>& x, std::size_t ph, std::size_t pw, std::size_t sh, std::size_t sw) {
  const std::size_t n = x.shape()[0], h = x.shape()[1], wd = x.shape()[2], c = x.shape()[3];
  const std::size_t oh = (h - ph) / sh + 1, ow = (wd - pw) / sw + 1;
  BasicTensor<T> y(Shape({std::int64_t(n), std::int64_t(oh), std::int64_t(ow), std::int64_t(c)}));
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox)
        for (std::size_t ch = 0; ch < c; ++ch) {
          T best = x.at({in, oy * sh, ox * sw, ch});
          for (std::size_t ky = 0; ky < ph; ++ky)
            for (std::size_t kx = 0; kx < pw; ++kx) best = std::max(best, x.at({in, oy * sh + ky, ox * sw + kx, ch}));
          y.at({in, oy, ox, ch}) = best;
        }
  return y;
}

// Two-class images: damage has a bright centre disk on a dark surround, no_damage the reverse.
// Pixel noise and a random global brightness offset keep the mean uninformative. The pattern is
// invariant under flips and quarter turns, so augmentation preserves the label.
inline Dataset synthetic_dataset(std::size_t count, std::size_t size, std::uint64_t seed, double noise = 0.15) {
  Dataset ds;
  ds.split = "synthetic";
  Rng rng(seed);
  const double centre = (static_cast<double>(size) - 1.0) / 2.0, radius = static_cast<double>(size) / 4.0;
  for (std::size_t i = 0; i < count; ++i) {
    Sample s;
    s.label = i % 2;
    s.path = "synthetic/" + std::to_string(i);
    s.image = Tensor(Shape({std::int64_t(size), std::int64_t(size), 3}));
    const double offset = rng.uniform(-0.15, 0.15);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double dy = double(y) - centre, dx = double(x) - centre;
        const bool inside = dy * dy + dx * dx <= radius * radius;
        const double base = (inside == (s.label == 0)) ? 0.65 : 0.35;
        for (std::size_t c = 0; c < 3; ++c) {
          const double v = base + offset + noise * rng.normal();
          s.image.at({y, x, c}) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

// Writes solid-colour PPM images into <root>/damage and <root>/no_damage.
inline void write_solid_fixture(const std::filesystem::path& root, std::size_t per_class, std::size_t size,
                                std::uint8_t damage_value, std::uint8_t no_damage_value) {
  for (const auto& [folder, value] : {std::pair{"damage", damage_value}, std::pair{"no_damage", no_damage_value}}) {
    std::filesystem::create_directories(root / folder);
    for (std::size_t i = 0; i < per_class; ++i) {
      RawImage img{size, size, std::vector<std::uint8_t>(size * size * 3, value)};
      write_ppm(root / folder / ("img" + std::to_string(i) + ".ppm"), img);
    }
  }
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("stormcnn_" + tag + "_" + std::to_string(Rng(std::random_device{}()).next_u64()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
