#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace hierseg {

// All recoverable failures surface as Error with a message naming the
// offending field or dimension.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

/// Dense N-dimensional array of f64, row-major.
struct TensorBuffer {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  TensorBuffer() = default;
  TensorBuffer(std::vector<std::size_t> s, std::vector<double> d);

  static TensorBuffer zeros(std::vector<std::size_t> shape);
  static TensorBuffer full(std::vector<std::size_t> shape, double value);
  static TensorBuffer scalar(double value);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const;

  bool same_shape(const TensorBuffer& other) const { return shape == other.shape; }
  bool all_finite() const;
};

}  // namespace hierseg
