#pragma once
// Minimal PNG reader/writer for 8-bit grayscale and RGB rasters. DEFLATE is
// handled by zlib; chunk layout, filtering and CRC handling live here.
// Writing uses filter 0 and a fixed compression level, so output bytes are a
// pure function of the pixel data.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mcd/errors.hpp"

namespace mcd {

struct Image8 {
  int w = 0, h = 0, c = 0;  // c = 1 (gray) or 3 (RGB), row-major interleaved
  std::vector<uint8_t> pixels;

  Image8() = default;
  Image8(int w_, int h_, int c_, uint8_t fill = 0) : w(w_), h(h_), c(c_), pixels((size_t)w_ * h_ * c_, fill) {}

  uint8_t& at(int y, int x, int ch = 0) { return pixels[((size_t)y * w + x) * c + ch]; }
  uint8_t at(int y, int x, int ch = 0) const { return pixels[((size_t)y * w + x) * c + ch]; }
};

Image8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& img);

}  // namespace mcd
