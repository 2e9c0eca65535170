#include "hierseg/hierloss.hpp"

#include <cmath>

namespace hierseg {

namespace {

struct FieldView {
  std::size_t channels, h, w;
};

FieldView field_view(const TensorBuffer& t, const char* op) {
  if (t.rank() == 3) return {t.shape[0], t.shape[1], t.shape[2]};
  if (t.rank() == 4 && t.shape[0] == 1) return {t.shape[1], t.shape[2], t.shape[3]};
  throw Error(std::string(op) + ": softmax field must be [n,H,W] or [1,n,H,W], got " +
              shape_str(t.shape));
}

/// Unnormalized sum of -log sigma at the labeled class over non-void pixels.
CceTerm sparse_cce_sum(Tape& tape, NodeId softmax_field, const SparseLabelMap& gt) {
  const TensorBuffer& sm = tape.value(softmax_field);
  const FieldView v = field_view(sm, "sparse_cce");
  if (gt.h != v.h || gt.w != v.w) {
    throw Error("sparse_cce: gt size " + std::to_string(gt.h) + "x" + std::to_string(gt.w) +
                " != field size " + std::to_string(v.h) + "x" + std::to_string(v.w));
  }
  const std::size_t hw = v.h * v.w;
  double acc = 0.0;
  std::size_t pixels = 0;
  for (std::size_t p = 0; p < hw; ++p) {
    const int label = gt.labels[p];
    if (label == kVoidLabel) continue;
    if (label < 0 || static_cast<std::size_t>(label) >= v.channels) {
      throw Error("sparse_cce: gt index " + std::to_string(label) + " >= class count " +
                  std::to_string(v.channels));
    }
    acc -= std::log(sm.data[static_cast<std::size_t>(label) * hw + p]);
    ++pixels;
  }
  auto labels = gt.labels;
  auto bw = [softmax_field, labels, v](Tape& t, NodeId self) {
    if (!t.requires_grad(softmax_field)) return;
    const double go = t.grad(self).data[0];
    const TensorBuffer& sm = t.value(softmax_field);
    TensorBuffer& gx = t.grad_mut(softmax_field);
    const std::size_t hw = v.h * v.w;
    for (std::size_t p = 0; p < hw; ++p) {
      const int label = labels[p];
      if (label == kVoidLabel) continue;
      const std::size_t i = static_cast<std::size_t>(label) * hw + p;
      gx.data[i] -= go / sm.data[i];
    }
  };
  return {tape.record({softmax_field}, TensorBuffer::scalar(acc), std::move(bw)), pixels};
}

/// Unnormalized sum of -sum_c y_c log sigma_c over masked pixels.
CceTerm dense_cce_sum(Tape& tape, NodeId softmax_field, const DenseLabelMap& gt,
                      const PixelMask& mask) {
  const TensorBuffer& sm = tape.value(softmax_field);
  const FieldView v = field_view(sm, "dense_cce");
  if (gt.classes != v.channels || gt.h != v.h || gt.w != v.w) {
    throw Error("dense_cce: gt shape [" + std::to_string(gt.classes) + "," +
                std::to_string(gt.h) + "," + std::to_string(gt.w) + "] != field shape [" +
                std::to_string(v.channels) + "," + std::to_string(v.h) + "," +
                std::to_string(v.w) + "]");
  }
  if (mask.h != gt.h || mask.w != gt.w) {
    throw Error("dense_cce: mask size != gt size");
  }
  const std::size_t hw = v.h * v.w;
  double acc = 0.0;
  std::size_t pixels = 0;
  for (std::size_t p = 0; p < hw; ++p) {
    if (!mask.mask[p]) continue;
    if (!gt.coverage.mask[p]) {
      throw Error("dense_cce: mask selects pixel " + std::to_string(p) +
                  " outside gt coverage");
    }
    ++pixels;
    for (std::size_t c = 0; c < v.channels; ++c) {
      const double y = gt.probs[c * hw + p];
      if (y == 0.0) continue;
      acc -= y * std::log(sm.data[c * hw + p]);
    }
  }
  auto probs = gt.probs;
  auto m = mask.mask;
  auto bw = [softmax_field, probs, m, v](Tape& t, NodeId self) {
    if (!t.requires_grad(softmax_field)) return;
    const double go = t.grad(self).data[0];
    const TensorBuffer& sm = t.value(softmax_field);
    TensorBuffer& gx = t.grad_mut(softmax_field);
    const std::size_t hw = v.h * v.w;
    for (std::size_t p = 0; p < hw; ++p) {
      if (!m[p]) continue;
      for (std::size_t c = 0; c < v.channels; ++c) {
        const double y = probs[c * hw + p];
        if (y == 0.0) continue;
        gx.data[c * hw + p] -= go * y / sm.data[c * hw + p];
      }
    }
  };
  return {tape.record({softmax_field}, TensorBuffer::scalar(acc), std::move(bw)), pixels};
}

}  // namespace

const char* supervision_kind_name(SupervisionKind kind) {
  switch (kind) {
    case SupervisionKind::per_pixel: return "per_pixel";
    case SupervisionKind::bbox: return "bbox";
    case SupervisionKind::image_level: return "image_level";
  }
  return "?";
}

SupervisionKind supervision_kind_from_name(const std::string& name) {
  if (name == "per_pixel") return SupervisionKind::per_pixel;
  if (name == "bbox") return SupervisionKind::bbox;
  if (name == "image_level") return SupervisionKind::image_level;
  throw Error("unknown supervision kind '" + name + "'");
}

void LossConfig::validate() const {
  if (lambda < 0.0) throw Error("loss config: lambda must be >= 0");
  if (weight_decay < 0.0) throw Error("loss config: weight_decay must be >= 0");
}

CceTerm sparse_cce(Tape& tape, NodeId softmax_field, const SparseLabelMap& gt) {
  CceTerm sum = sparse_cce_sum(tape, softmax_field, gt);
  if (sum.pixels == 0) return {tape.constant(TensorBuffer::scalar(0.0)), 0};
  return {tape.scale(sum.node, 1.0 / static_cast<double>(sum.pixels)), sum.pixels};
}

CceTerm dense_cce(Tape& tape, NodeId softmax_field, const DenseLabelMap& gt,
                  const PixelMask& mask) {
  CceTerm sum = dense_cce_sum(tape, softmax_field, gt, mask);
  if (sum.pixels == 0) return {tape.constant(TensorBuffer::scalar(0.0)), 0};
  return {tape.scale(sum.node, 1.0 / static_cast<double>(sum.pixels)), sum.pixels};
}

PixelMask weak_condition_mask(const TensorBuffer& root_softmax, const DenseLabelMap& pseudo_gt,
                              const ClassifierId& sub, const Taxonomy& taxonomy) {
  if (sub.is_root) throw Error("weak_condition_mask: classifier must be a subclassifier");
  if (taxonomy.sub_ordinal_of_root(sub.root_class) < 0) {
    throw Error("weak_condition_mask: root class '" + taxonomy.root_name(sub.root_class) +
                "' owns no subclassifier");
  }
  const FieldView v = field_view(root_softmax, "weak_condition_mask");
  if (v.channels != static_cast<std::size_t>(taxonomy.num_roots())) {
    throw Error("weak_condition_mask: root field has " + std::to_string(v.channels) +
                " channels but the taxonomy has " + std::to_string(taxonomy.num_roots()) +
                " root classes");
  }
  if (v.h != pseudo_gt.h || v.w != pseudo_gt.w) {
    throw Error("weak_condition_mask: field size != pseudo gt size");
  }
  const std::size_t hw = v.h * v.w;
  PixelMask out(v.h, v.w);
  for (std::size_t p = 0; p < hw; ++p) {
    if (!pseudo_gt.coverage.mask[p]) continue;
    double mass = 0.0;
    for (std::size_t c = 0; c < pseudo_gt.classes; ++c) mass += pseudo_gt.probs[c * hw + p];
    if (mass <= 0.0) continue;
    std::size_t argmax = 0;
    double best = root_softmax.data[p];
    for (std::size_t c = 1; c < v.channels; ++c) {
      const double s = root_softmax.data[c * hw + p];
      if (s > best) {
        best = s;
        argmax = c;
      }
    }
    if (argmax == static_cast<std::size_t>(sub.root_class)) out.mask[p] = 1;
  }
  return out;
}

TotalLossResult total_loss(Tape& tape, const std::vector<LossSample>& batch,
                           const std::vector<NodeId>& weight_nodes, const Taxonomy& taxonomy,
                           const LossConfig& cfg) {
  cfg.validate();
  if (batch.empty()) throw Error("total_loss: batch must contain at least one sample");
  const int num_subs = taxonomy.num_subclassifiers();

  LossBreakdown breakdown;
  breakdown.sub.resize(num_subs);

  const NodeId zero = tape.constant(TensorBuffer::scalar(0.0));
  auto pooled = [&](const std::vector<NodeId>& terms, std::size_t pixels) -> NodeId {
    if (pixels == 0 || terms.empty()) return zero;
    NodeId sum = terms.size() == 1 ? terms[0] : tape.add(terms);
    return tape.scale(sum, 1.0 / static_cast<double>(pixels));
  };

  // Root: sparse CCE over per-pixel samples only.
  std::vector<NodeId> root_terms;
  std::size_t root_pixels = 0;
  for (const LossSample& s : batch) {
    if (s.kind != SupervisionKind::per_pixel) continue;
    if (!s.root_gt) throw Error("total_loss: per-pixel sample without root ground truth");
    CceTerm term = sparse_cce_sum(tape, s.root_softmax, *s.root_gt);
    if (term.pixels == 0) continue;
    root_terms.push_back(term.node);
    root_pixels += term.pixels;
  }
  const NodeId root_node = pooled(root_terms, root_pixels);
  breakdown.root_pixels = root_pixels;
  breakdown.root_term_empty = root_pixels == 0;

  // Subclassifiers: unconditional dense CCE for per-pixel samples,
  // condition-masked dense CCE for weak samples.
  std::vector<NodeId> sub_nodes;
  for (int sc = 0; sc < num_subs; ++sc) {
    const ClassifierId sub_id = ClassifierId::sub(taxonomy.sub_owner_root(sc));
    std::vector<NodeId> dense_terms, weak_terms;
    std::size_t dense_pixels = 0, weak_pixels = 0;
    for (const LossSample& s : batch) {
      if (!s.sub_gt || static_cast<int>(s.sub_gt->size()) != num_subs) {
        throw Error("total_loss: sample lacks per-subclassifier ground truth");
      }
      if (static_cast<int>(s.sub_softmax.size()) != num_subs) {
        throw Error("total_loss: sample lacks per-subclassifier softmax fields");
      }
      const DenseLabelMap& gt = (*s.sub_gt)[sc];
      if (s.kind == SupervisionKind::per_pixel) {
        CceTerm term = dense_cce_sum(tape, s.sub_softmax[sc], gt, gt.coverage);
        if (term.pixels == 0) continue;
        dense_terms.push_back(term.node);
        dense_pixels += term.pixels;
      } else {
        const PixelMask mask =
            weak_condition_mask(tape.value(s.root_softmax), gt, sub_id, taxonomy);
        CceTerm term = dense_cce_sum(tape, s.sub_softmax[sc], gt, mask);
        if (term.pixels == 0) continue;
        weak_terms.push_back(term.node);
        weak_pixels += term.pixels;
      }
    }
    const NodeId dense_node = pooled(dense_terms, dense_pixels);
    const NodeId weak_node = pooled(weak_terms, weak_pixels);
    breakdown.sub[sc].dense_pixels = dense_pixels;
    breakdown.sub[sc].weak_pixels = weak_pixels;
    breakdown.sub[sc].dense_loss = tape.value(dense_node).data[0];
    breakdown.sub[sc].weak_loss = tape.value(weak_node).data[0];
    sub_nodes.push_back(dense_node);
    sub_nodes.push_back(weak_node);
  }
  const NodeId sub_scaled =
      sub_nodes.empty() ? zero : tape.scale(tape.add(sub_nodes), cfg.lambda);

  // L2 on weights (not biases), differentiated on the tape.
  NodeId reg_node = zero;
  if (cfg.weight_decay > 0.0 && !weight_nodes.empty()) {
    std::vector<NodeId> sq;
    sq.reserve(weight_nodes.size());
    for (NodeId w : weight_nodes) sq.push_back(tape.sum_squares(w));
    reg_node = tape.scale(tape.add(sq), cfg.weight_decay);
  }

  const NodeId total = tape.add({root_node, sub_scaled, reg_node});
  breakdown.root_loss = tape.value(root_node).data[0];
  breakdown.reg_loss = tape.value(reg_node).data[0];
  breakdown.total = tape.value(total).data[0];
  return {std::move(breakdown), total};
}

}  // namespace hierseg
