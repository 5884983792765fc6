#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsn/common.hpp"

namespace tsn {

// 8-bit image buffer, row-major, interleaved channels.
struct ImageU8 {
  int h = 0, w = 0, channels = 0;
  std::vector<uint8_t> data;

  uint8_t& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * w + x) * channels + c];
  }
  uint8_t at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * w + x) * channels + c];
  }
};

// Binary PPM (P6), 3 channels, maxval 255.
void write_ppm(const std::string& path, const ImageU8& img);
ImageU8 read_ppm(const std::string& path);

// Binary PGM (P5), 1 channel, maxval 255.
void write_pgm(const std::string& path, const ImageU8& img);
ImageU8 read_pgm(const std::string& path);

}  // namespace tsn
