#include "hierseg/params.hpp"

namespace hierseg {

void ParamSet::add(const std::string& name, TensorBuffer tensor) {
  if (has(name)) throw Error("params: duplicate parameter name '" + name + "'");
  order_.push_back(name);
  tensors_.emplace(name, std::move(tensor));
}

TensorBuffer& ParamSet::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error("params: unknown parameter '" + name + "'");
  return it->second;
}

const TensorBuffer& ParamSet::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error("params: unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& name : order_) n += tensors_.at(name).size();
  return n;
}

}  // namespace hierseg
