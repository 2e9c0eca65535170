#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hierseg/params.hpp"
#include "hierseg/tensor.hpp"

namespace hierseg {

// Named-tensor container, little-endian throughout:
//   magic "HSEG" | version u32 | tensor count u32
//   per entry: name length u32 | name bytes | rank u32 | dims u64 each | f64 payload
struct NamedTensor {
  std::string name;
  TensorBuffer tensor;
};

void write_tensor_file(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensor_file(const std::string& path);

void save_checkpoint(const std::string& path, const ParamSet& params);
ParamSet load_checkpoint(const std::string& path);

}  // namespace hierseg
