#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "antispoof/error.hpp"
#include "antispoof/nn/tensor.hpp"

namespace antispoof::data {

using nn::Tensorf;

// Planar RGB, values in [0,1], shape [3,H,W].
using Image = Tensorf;

inline std::size_t image_width(const Image& im) { return im.dim(2); }
inline std::size_t image_height(const Image& im) { return im.dim(1); }

inline Image read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&png);
    throw IoError("cannot decode PNG " + path.string() + ": " + png.message);
  }
  const std::size_t w = png.width, h = png.height;
  Image im({3, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) im.at(c, y, x) = buf[(y * w + x) * 3 + c] / 255.0f;
  return im;
}

inline std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

inline void write_png(const std::filesystem::path& path, const Image& im) {
  if (im.rank() != 3 || im.dim(0) != 3) throw ShapeError("write_png: expected [3,H,W]");
  const std::size_t h = im.dim(1), w = im.dim(2);
  std::vector<std::uint8_t> buf(w * h * 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) buf[(y * w + x) * 3 + c] = to_byte(im.at(c, y, x));
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(w);
  png.height = static_cast<png_uint_32>(h);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + png.message);
  }
}

}  // namespace antispoof::data
