#pragma once

#include <vector>

#include "hierseg/labels.hpp"
#include "hierseg/tape.hpp"
#include "hierseg/taxonomy.hpp"

namespace hierseg {

enum class SupervisionKind { per_pixel, bbox, image_level };

const char* supervision_kind_name(SupervisionKind kind);
SupervisionKind supervision_kind_from_name(const std::string& name);

struct LossConfig {
  double lambda = 0.1;          // coefficient on every subclassifier term
  double weight_decay = 0.00017;

  void validate() const;
};

struct SubLossTerm {
  double dense_loss = 0.0;  // per-pixel samples, mean over covered pixels
  std::size_t dense_pixels = 0;
  double weak_loss = 0.0;  // weak samples, mean over condition-passing pixels
  std::size_t weak_pixels = 0;
};

struct LossBreakdown {
  double root_loss = 0.0;
  std::size_t root_pixels = 0;
  bool root_term_empty = true;  // no per-pixel sample contributed
  std::vector<SubLossTerm> sub;
  double reg_loss = 0.0;
  double total = 0.0;
};

/// One CCE term on the tape plus the number of pixels it pooled.
struct CceTerm {
  NodeId node;
  std::size_t pixels = 0;
};

// Softmax fields may be [n,H,W] or [1,n,H,W].

/// Mean over non-void pixels of -log sigma at the labeled class.
CceTerm sparse_cce(Tape& tape, NodeId softmax_field, const SparseLabelMap& gt);

/// Mean over masked pixels of -sum_c y_c log sigma_c. The mask must be a
/// subset of the gt coverage; an empty mask yields 0 with zero gradient.
CceTerm dense_cce(Tape& tape, NodeId softmax_field, const DenseLabelMap& gt,
                  const PixelMask& mask);

/// Pixels where (1) the pseudo ground truth carries mass for this
/// subclassifier and (2) the root argmax equals the subclassifier's owning
/// root class. Ties in the argmax go to the lowest class index.
PixelMask weak_condition_mask(const TensorBuffer& root_softmax, const DenseLabelMap& pseudo_gt,
                              const ClassifierId& sub, const Taxonomy& taxonomy);

/// One batch sample as the loss sees it: softmax nodes on the shared tape
/// plus the ground truth prepared by the data pipeline.
struct LossSample {
  SupervisionKind kind = SupervisionKind::per_pixel;
  NodeId root_softmax = 0;
  std::vector<NodeId> sub_softmax;           // per subclassifier ordinal
  const SparseLabelMap* root_gt = nullptr;   // root-class indices; per_pixel only
  const std::vector<DenseLabelMap>* sub_gt = nullptr;  // per subclassifier ordinal
};

struct TotalLossResult {
  LossBreakdown breakdown;
  NodeId total;  // scalar node; backward() through it populates gradients
};

/// Hierarchical loss over a batch: sparse CCE at the root (per-pixel samples
/// only), dense CCE at subclassifiers for per-pixel samples, conditional
/// dense CCE for weak samples, plus L2 on the given weight nodes. Each term
/// pools its participating pixels across the whole batch and divides once.
TotalLossResult total_loss(Tape& tape, const std::vector<LossSample>& batch,
                           const std::vector<NodeId>& weight_nodes, const Taxonomy& taxonomy,
                           const LossConfig& cfg);

}  // namespace hierseg
