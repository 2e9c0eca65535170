#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "hierseg/tensor.hpp"

namespace hierseg {

/// Named parameter tensors with a stable insertion order.
class ParamSet {
 public:
  void add(const std::string& name, TensorBuffer tensor);
  bool has(const std::string& name) const { return tensors_.count(name) != 0; }
  TensorBuffer& at(const std::string& name);
  const TensorBuffer& at(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }
  std::size_t total_elements() const;

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, TensorBuffer> tensors_;
};

}  // namespace hierseg
