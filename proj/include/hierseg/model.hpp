#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hierseg/labels.hpp"
#include "hierseg/params.hpp"
#include "hierseg/tape.hpp"
#include "hierseg/taxonomy.hpp"

namespace hierseg {

struct HierNetConfig {
  std::vector<int> channels = {8, 12};  // feature extractor stage widths
  int adapt_width = 8;                  // per-classifier adaptation block width
  int downsample = 4;                   // power of two; realized by strided stages
  std::uint64_t seed = 1;

  void validate() const;
};

/// Parameter nodes registered on one tape; shared by every sample recorded
/// on that tape so batch gradients accumulate.
struct TapeBinding {
  std::vector<std::pair<std::string, NodeId>> params;
  std::vector<NodeId> weight_nodes;  // conv kernels only, for L2

  NodeId at(const std::string& name) const;
};

/// Softmax heads of one forward pass. `logits` is the full-resolution
/// pre-softmax field (after upsampling).
struct HeadNodes {
  NodeId logits = 0;
  NodeId softmax = 0;
};

struct SegOutput {
  HeadNodes root;
  std::vector<HeadNodes> subs;  // per subclassifier ordinal
  std::size_t h = 0, w = 0;
};

/// Plain value buffers of the softmax fields, for inference paths.
struct SegFields {
  TensorBuffer root;
  std::vector<TensorBuffer> subs;
};

// Toy hierarchical FCN: a shared conv/relu stack (strided stages realize the
// downsample factor), then per classifier a 1x1-relu-3x3 adaptation block,
// a 1x1 head, bilinear upsampling back to input resolution, and softmax.
class HierNet {
 public:
  static HierNet build(const HierNetConfig& cfg, const Taxonomy& taxonomy);

  /// Wrap an existing parameter set (e.g. from a checkpoint).
  static HierNet from_params(const HierNetConfig& cfg, const Taxonomy& taxonomy,
                             ParamSet params);

  const ParamSet& params() const { return params_; }
  ParamSet& params() { return params_; }
  const HierNetConfig& config() const { return cfg_; }

  TapeBinding bind(Tape& tape) const;
  SegOutput forward(Tape& tape, const TapeBinding& binding, const TensorBuffer& image) const;

  /// Forward on a scratch tape; returns the softmax field values.
  SegFields infer(const TensorBuffer& image) const;

 private:
  HierNet(HierNetConfig cfg, int num_subs) : cfg_(std::move(cfg)), num_subs_(num_subs) {}

  HierNetConfig cfg_;
  int num_subs_ = 0;
  std::vector<std::string> classifier_names_;  // "root" then owning-root names
  std::vector<int> head_classes_;              // classes per classifier
  std::vector<int> stage_strides_;
  ParamSet params_;
};

/// Hierarchical inference rule: root argmax picks the classifier; if that
/// root class owns a subclassifier its argmax picks the leaf. Returns leaf
/// class indices as enumerated by the taxonomy.
SparseLabelMap predict(const SegFields& fields, const Taxonomy& taxonomy);
SparseLabelMap predict(const Tape& tape, const SegOutput& output, const Taxonomy& taxonomy);

}  // namespace hierseg
