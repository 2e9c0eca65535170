#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hierseg/labels.hpp"
#include "hierseg/tensor.hpp"

namespace hierseg {

/// 8-bit interleaved RGB image.
struct RgbImage {
  std::size_t h = 0, w = 0;
  std::vector<std::uint8_t> pixels;  // h*w*3, row-major

  RgbImage() = default;
  RgbImage(std::size_t h_, std::size_t w_) : h(h_), w(w_), pixels(h_ * w_ * 3, 0) {}

  std::uint8_t* at(std::size_t y, std::size_t x) { return &pixels[(y * w + x) * 3]; }
  const std::uint8_t* at(std::size_t y, std::size_t x) const { return &pixels[(y * w + x) * 3]; }
};

void write_ppm(const std::string& path, const RgbImage& img);
RgbImage read_ppm(const std::string& path);

// Masks store class ids as bytes; 255 is the void sentinel.
void write_pgm(const std::string& path, const SparseLabelMap& mask);
SparseLabelMap read_pgm(const std::string& path);

/// [3,H,W] f64 tensor scaled to [0,1].
TensorBuffer image_to_tensor(const RgbImage& img);

}  // namespace hierseg
