#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hierseg/tensor.hpp"

namespace hierseg {

using NodeId = std::uint32_t;

class Tape;

/// Propagates the node's grad buffer into the grads of its inputs.
using BackwardFn = std::function<void(Tape&, NodeId)>;

struct TapeNode {
  TensorBuffer value;
  TensorBuffer grad;  // same shape as value, allocated by backward()
  std::vector<NodeId> inputs;
  BackwardFn backward;
  bool requires_grad = false;
};

// Eager forward evaluation; every op records how to push gradients back.
// backward() replays the records in exact reverse order, so a single tape
// holds one training step (all batch samples plus the combined loss).
class Tape {
 public:
  /// Leaf that never receives a gradient (images, fixed targets).
  NodeId constant(TensorBuffer value);

  /// Leaf that accumulates a gradient (network parameters).
  NodeId param(TensorBuffer value);

  /// Record a custom op. `fn` may be null for non-differentiable outputs.
  NodeId record(std::vector<NodeId> inputs, TensorBuffer value, BackwardFn fn);

  const TensorBuffer& value(NodeId id) const { return node(id).value; }
  const TensorBuffer& grad(NodeId id) const;
  TensorBuffer& grad_mut(NodeId id) { return nodes_[check(id)].grad; }
  bool requires_grad(NodeId id) const { return node(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Built-in ops. Shapes are NCHW; spatial padding is always "same" (zeros).
  NodeId conv2d(NodeId input, NodeId kernel, NodeId bias, int stride = 1);
  NodeId relu(NodeId input);
  NodeId upsample_bilinear(NodeId input, int factor);
  NodeId softmax_channels(NodeId input);

  // Scalar plumbing for combining loss terms.
  NodeId add(std::vector<NodeId> terms);
  NodeId scale(NodeId input, double factor);
  NodeId sum_squares(NodeId input);
  NodeId sum_all(NodeId input);

  /// Seeds d(loss)=1 and walks the tape backwards. `loss` must be scalar.
  void backward(NodeId loss);

 private:
  const TapeNode& node(NodeId id) const { return nodes_[check(id)]; }
  std::size_t check(NodeId id) const;

  std::vector<TapeNode> nodes_;
};

}  // namespace hierseg
