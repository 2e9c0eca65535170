#include "hierseg/optim.hpp"

namespace hierseg {

void sgd_step(ParamSet& params,
              const std::unordered_map<std::string, TensorBuffer>& grads,
              SgdState& state, double lr, double momentum, double weight_decay) {
  for (const std::string& name : params.names()) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    TensorBuffer& p = params.at(name);
    const TensorBuffer& g = git->second;
    if (!g.same_shape(p)) {
      throw Error("sgd_step: gradient shape " + shape_str(g.shape) + " != param shape " +
                  shape_str(p.shape) + " for '" + name + "'");
    }
    TensorBuffer& v = state.velocity.try_emplace(name, TensorBuffer::zeros(p.shape)).first->second;
    if (!v.same_shape(p)) {
      throw Error("sgd_step: velocity shape " + shape_str(v.shape) + " != param shape " +
                  shape_str(p.shape) + " for '" + name + "'");
    }
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      v.data[i] = momentum * v.data[i] + g.data[i] + weight_decay * p.data[i];
      p.data[i] -= lr * v.data[i];
    }
  }
}

}  // namespace hierseg
