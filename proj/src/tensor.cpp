#include "hierseg/tensor.hpp"

#include <cmath>
#include <sstream>

namespace hierseg {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

TensorBuffer::TensorBuffer(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (shape_numel(shape) != data.size()) {
    throw Error("tensor: shape " + shape_str(shape) + " does not match data length " +
                std::to_string(data.size()));
  }
}

TensorBuffer TensorBuffer::zeros(std::vector<std::size_t> shape) {
  std::size_t n = shape_numel(shape);
  return TensorBuffer(std::move(shape), std::vector<double>(n, 0.0));
}

TensorBuffer TensorBuffer::full(std::vector<std::size_t> shape, double value) {
  std::size_t n = shape_numel(shape);
  return TensorBuffer(std::move(shape), std::vector<double>(n, value));
}

TensorBuffer TensorBuffer::scalar(double value) {
  return TensorBuffer({1}, {value});
}

std::size_t TensorBuffer::dim(std::size_t i) const {
  if (i >= shape.size()) {
    throw Error("tensor: dim index " + std::to_string(i) + " out of rank " +
                std::to_string(shape.size()));
  }
  return shape[i];
}

bool TensorBuffer::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace hierseg
