#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace ccap {

// 8-bit RGB raster, channel-interleaved rows (PPM pixel order).
struct ImageU8 {
  size_t width = 0;
  size_t height = 0;
  std::vector<uint8_t> pixels;  // 3 * width * height

  static ImageU8 from_planar(const std::vector<double>& rgb, size_t w, size_t h);
  // Planar 3xHxW doubles in [0, 1].
  std::vector<double> to_planar() const;
  Tensor to_tensor() const;
};

void write_ppm(const std::string& path, const ImageU8& img);
ImageU8 read_ppm(const std::string& path);

}  // namespace ccap
