#pragma once

#include <string>
#include <unordered_map>

#include "hierseg/params.hpp"

namespace hierseg {

struct SgdState {
  std::unordered_map<std::string, TensorBuffer> velocity;
};

/// Momentum SGD with decay folded into the gradient:
///   v <- momentum*v + grad + weight_decay*param
///   param <- param - lr*v
/// Parameters without an entry in `grads` are left untouched.
void sgd_step(ParamSet& params,
              const std::unordered_map<std::string, TensorBuffer>& grads,
              SgdState& state, double lr, double momentum, double weight_decay);

}  // namespace hierseg
