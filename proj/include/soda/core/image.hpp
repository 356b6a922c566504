#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "soda/error.hpp"
#include "soda/fs.hpp"

namespace soda {

/// 8-bit RGB image, row-major, interleaved channels.
class ImageBuffer {
 public:
  ImageBuffer() = default;

  ImageBuffer(int height, int width, std::uint8_t fill = 0) : height_(height), width_(width) {
    require(height > 0 && width > 0, ErrorCode::DimensionMismatch,
            "image dimensions must be positive");
    pixels_.assign(static_cast<std::size_t>(height) * width * 3, fill);
  }

  ImageBuffer(int height, int width, std::vector<std::uint8_t> pixels)
      : height_(height), width_(width), pixels_(std::move(pixels)) {
    require(height > 0 && width > 0, ErrorCode::DimensionMismatch,
            "image dimensions must be positive");
    require(pixels_.size() == static_cast<std::size_t>(height) * width * 3,
            ErrorCode::DimensionMismatch, "pixel buffer does not match H*W*3");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return pixels_.empty(); }

  std::uint8_t& at(int y, int x, int c) { return pixels_[index(y, x, c)]; }
  std::uint8_t at(int y, int x, int c) const { return pixels_[index(y, x, c)]; }

  std::span<const std::uint8_t> pixels() const { return pixels_; }
  std::span<std::uint8_t> pixels() { return pixels_; }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * 3 + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> pixels_;
};

inline std::uint8_t clamp_channel(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

/// Bilinear resize with half-pixel centers (edge-clamped).
inline ImageBuffer resize_bilinear(const ImageBuffer& src, int height, int width) {
  if (src.height() == height && src.width() == width) return src;
  ImageBuffer out(height, width);
  const double sy = static_cast<double>(src.height()) / height;
  const double sx = static_cast<double>(src.width()) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1 - wx) * src.at(y0, x0, c) + wx * src.at(y0, x1, c);
        const double bot = (1 - wx) * src.at(y1, x0, c) + wx * src.at(y1, x1, c);
        out.at(y, x, c) = clamp_channel((1 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

inline std::vector<std::uint8_t> encode_png(const ImageBuffer& img) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels().data(), 0, nullptr)) {
    fail(ErrorCode::IoError, std::string("png sizing failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels().data(), 0, nullptr)) {
    fail(ErrorCode::IoError, std::string("png encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

inline ImageBuffer decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    fail(ErrorCode::PreprocessFailure, std::string("png decode failed: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    fail(ErrorCode::PreprocessFailure, std::string("png decode failed: ") + image.message);
  }
  return ImageBuffer(static_cast<int>(image.height), static_cast<int>(image.width),
                     std::move(pixels));
}

inline ImageBuffer read_png(const fs::path& path) {
  if (!fs::is_regular_file(path)) {
    fail(ErrorCode::UnresolvableImage, "image not found: " + path.string());
  }
  const auto bytes = read_bytes(path);
  try {
    return decode_png(bytes);
  } catch (const Error& e) {
    fail(ErrorCode::PreprocessFailure, path.string() + ": " + e.what());
  }
}

inline void write_png(const fs::path& path, const ImageBuffer& img) {
  write_atomic(path, encode_png(img));
}

}  // namespace soda
