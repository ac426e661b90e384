#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace stormcnn {

// 8-bit interleaved RGB, row-major.
struct RawImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;
};

bool is_image_extension(const std::filesystem::path& path);

// Decodes JPEG, PNG or binary PPM (P6) by extension. Throws InputError if the file cannot be decoded.
RawImage decode_image(const std::filesystem::path& path);

void write_ppm(const std::filesystem::path& path, const RawImage& image);
void write_png(const std::filesystem::path& path, const RawImage& image);

}  // namespace stormcnn
