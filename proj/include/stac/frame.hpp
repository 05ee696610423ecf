#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "stac/common.hpp"

namespace stac {

using PixelArray = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Grayscale raster, one byte per pixel, row-major. pixels(y, x).
struct Frame {
  int camera_id = 0;
  int t = 0;
  PixelArray pixels;

  Frame() = default;
  Frame(int camera, int step, int width, int height, std::uint8_t fill = 0)
      : camera_id(camera), t(step), pixels(PixelArray::Constant(height, width, fill)) {}

  int width() const { return static_cast<int>(pixels.cols()); }
  int height() const { return static_cast<int>(pixels.rows()); }
  std::size_t size() const { return static_cast<std::size_t>(pixels.size()); }
  const std::uint8_t* data() const { return pixels.data(); }
  std::uint8_t* data() { return pixels.data(); }

  bool same_shape(const Frame& other) const {
    return width() == other.width() && height() == other.height();
  }
};

inline bool operator==(const Frame& a, const Frame& b) {
  return a.same_shape(b) && (a.pixels == b.pixels).all();
}

void require_same_shape(const Frame& a, const Frame& b, const char* what);

// Binary PGM (P5, maxval 255).
std::string to_pgm(const Frame& frame);
Frame from_pgm(const std::string& bytes);
void write_pgm(const std::filesystem::path& path, const Frame& frame);

std::uint32_t frame_crc32(const Frame& frame);

}  // namespace stac
