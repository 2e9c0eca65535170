#pragma once

#include <cstdint>
#include <vector>

#include "hierseg/tensor.hpp"

namespace hierseg {

/// Sentinel for unlabeled/void pixels in sparse maps.
constexpr int kVoidLabel = -1;

/// Per-pixel single class id with a void sentinel.
struct SparseLabelMap {
  std::size_t h = 0, w = 0;
  std::vector<int> labels;

  SparseLabelMap() = default;
  SparseLabelMap(std::size_t h_, std::size_t w_, int fill = kVoidLabel)
      : h(h_), w(w_), labels(h_ * w_, fill) {}

  int& at(std::size_t y, std::size_t x) { return labels[y * w + x]; }
  int at(std::size_t y, std::size_t x) const { return labels[y * w + x]; }
  std::size_t size() const { return labels.size(); }
};

struct PixelMask {
  std::size_t h = 0, w = 0;
  std::vector<std::uint8_t> mask;

  PixelMask() = default;
  PixelMask(std::size_t h_, std::size_t w_, bool fill = false)
      : h(h_), w(w_), mask(h_ * w_, fill ? 1 : 0) {}

  bool at(std::size_t y, std::size_t x) const { return mask[y * w + x] != 0; }
  void set(std::size_t y, std::size_t x, bool v) { mask[y * w + x] = v ? 1 : 0; }
  std::size_t count() const;
};

/// Per-pixel categorical distribution over one classifier's classes, plus a
/// coverage mask. Covered pixels sum to 1; uncovered pixels are all zero.
struct DenseLabelMap {
  std::size_t classes = 0, h = 0, w = 0;
  std::vector<double> probs;  // [classes, h, w] row-major
  PixelMask coverage;

  DenseLabelMap() = default;
  DenseLabelMap(std::size_t classes_, std::size_t h_, std::size_t w_)
      : classes(classes_), h(h_), w(w_), probs(classes_ * h_ * w_, 0.0), coverage(h_, w_) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) { return probs[(c * h + y) * w + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return probs[(c * h + y) * w + x];
  }
};

/// Pixel rectangle, max-exclusive: x in [x_min, x_max), y in [y_min, y_max).
struct Rect {
  int x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  int width() const { return x_max - x_min; }
  int height() const { return y_max - y_min; }
  bool empty() const { return width() <= 0 || height() <= 0; }
  bool operator==(const Rect&) const = default;
};

enum class AnnotationKind { bbox, image_level };

struct WeakAnnotation {
  AnnotationKind kind = AnnotationKind::image_level;
  int label_id = 0;
  Rect rect;  // meaningful only for bbox
};

}  // namespace hierseg
