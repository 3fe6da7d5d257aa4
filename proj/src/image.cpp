#include "image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ccap {

ImageU8 ImageU8::from_planar(const std::vector<double>& rgb, size_t w, size_t h) {
  if (rgb.size() != 3 * w * h) {
    throw std::invalid_argument("from_planar: buffer size does not match dimensions");
  }
  ImageU8 img;
  img.width = w;
  img.height = h;
  img.pixels.resize(3 * w * h);
  for (size_t y = 0; y < h; ++y) {
    for (size_t x = 0; x < w; ++x) {
      for (size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(rgb[c * w * h + y * w + x], 0.0, 1.0);
        img.pixels[(y * w + x) * 3 + c] = static_cast<uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return img;
}

std::vector<double> ImageU8::to_planar() const {
  std::vector<double> out(3 * width * height);
  for (size_t y = 0; y < height; ++y) {
    for (size_t x = 0; x < width; ++x) {
      for (size_t c = 0; c < 3; ++c) {
        out[c * width * height + y * width + x] =
            static_cast<double>(pixels[(y * width + x) * 3 + c]) / 255.0;
      }
    }
  }
  return out;
}

Tensor ImageU8::to_tensor() const {
  return Tensor::from_values({3, height, width}, to_planar());
}

void write_ppm(const std::string& path, const ImageU8& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write image: " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw std::runtime_error("image write failed: " + path);
}

ImageU8 read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read image: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw std::runtime_error("not a P6 PPM: " + path);
  auto next_int = [&in, &path]() {
    // Skip whitespace and '#' comment lines between header fields.
    int c = in.get();
    while (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '#') {
      if (c == '#') {
        while (c != '\n' && c != EOF) c = in.get();
      }
      c = in.get();
    }
    size_t v = 0;
    bool any = false;
    while (c >= '0' && c <= '9') {
      v = v * 10 + static_cast<size_t>(c - '0');
      any = true;
      c = in.get();
    }
    if (!any) throw std::runtime_error("malformed PPM header: " + path);
    return v;
  };
  ImageU8 img;
  img.width = next_int();
  img.height = next_int();
  const size_t maxval = next_int();
  if (maxval != 255) throw std::runtime_error("unsupported PPM maxval: " + path);
  img.pixels.resize(3 * img.width * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw std::runtime_error("truncated PPM: " + path);
  return img;
}

}  // namespace ccap
