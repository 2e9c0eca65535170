#include "hierseg/pseudo_gt.hpp"

#include "hierseg/checkpoint.hpp"

namespace hierseg {

/// labels.hpp helper lives here to keep that header inline-only.
std::size_t PixelMask::count() const {
  std::size_t n = 0;
  for (std::uint8_t v : mask) n += v != 0;
  return n;
}

DenseLabelMap vote_dense_gt(const std::vector<WeakAnnotation>& annotations, std::size_t h,
                            std::size_t w, const ClassifierId& target, const Taxonomy& taxonomy) {
  if (target.is_root) {
    throw Error("vote_dense_gt: target must be a subclassifier, not the root");
  }
  const int ordinal = taxonomy.sub_ordinal_of_root(target.root_class);
  if (ordinal < 0) {
    throw Error("vote_dense_gt: root class '" + taxonomy.root_name(target.root_class) +
                "' owns no subclassifier");
  }
  const std::size_t n = static_cast<std::size_t>(taxonomy.sub_class_count(ordinal));

  std::vector<std::uint32_t> votes(n * h * w, 0);
  for (const WeakAnnotation& ann : annotations) {
    if (ann.kind == AnnotationKind::bbox) {
      if (ann.rect.empty()) {
        throw Error("vote_dense_gt: degenerate rectangle for label id " +
                    std::to_string(ann.label_id));
      }
      if (ann.rect.x_min < 0 || ann.rect.y_min < 0 ||
          ann.rect.x_max > static_cast<int>(w) || ann.rect.y_max > static_cast<int>(h)) {
        throw Error("vote_dense_gt: rectangle out of image bounds for label id " +
                    std::to_string(ann.label_id));
      }
    }
    const LabelNode node = taxonomy.node_of_label(ann.label_id);
    if (!node.is_subclass() || node.root_index != target.root_class) continue;
    const std::size_t c = static_cast<std::size_t>(node.sub_index);
    const std::size_t y0 = ann.kind == AnnotationKind::bbox ? ann.rect.y_min : 0;
    const std::size_t y1 = ann.kind == AnnotationKind::bbox ? ann.rect.y_max : h;
    const std::size_t x0 = ann.kind == AnnotationKind::bbox ? ann.rect.x_min : 0;
    const std::size_t x1 = ann.kind == AnnotationKind::bbox ? ann.rect.x_max : w;
    for (std::size_t y = y0; y < y1; ++y) {
      for (std::size_t x = x0; x < x1; ++x) {
        ++votes[(c * h + y) * w + x];
      }
    }
  }

  DenseLabelMap out(n, h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      std::uint64_t total = 0;
      for (std::size_t c = 0; c < n; ++c) total += votes[(c * h + y) * w + x];
      if (total == 0) continue;
      out.coverage.set(y, x, true);
      for (std::size_t c = 0; c < n; ++c) {
        out.at(c, y, x) = static_cast<double>(votes[(c * h + y) * w + x]) /
                          static_cast<double>(total);
      }
    }
  }
  return out;
}

DenseLabelMap densify_sparse(const SparseLabelMap& sparse, const ClassifierId& target,
                             const Taxonomy& taxonomy) {
  if (target.is_root) {
    throw Error("densify_sparse: target must be a subclassifier, not the root");
  }
  const int ordinal = taxonomy.sub_ordinal_of_root(target.root_class);
  if (ordinal < 0) {
    throw Error("densify_sparse: root class '" + taxonomy.root_name(target.root_class) +
                "' owns no subclassifier");
  }
  const std::size_t n = static_cast<std::size_t>(taxonomy.sub_class_count(ordinal));

  DenseLabelMap out(n, sparse.h, sparse.w);
  for (std::size_t y = 0; y < sparse.h; ++y) {
    for (std::size_t x = 0; x < sparse.w; ++x) {
      const int id = sparse.at(y, x);
      if (id == kVoidLabel) continue;
      const LabelNode node = taxonomy.node_of_label(id);
      if (!node.is_subclass() || node.root_index != target.root_class) continue;
      out.at(static_cast<std::size_t>(node.sub_index), y, x) = 1.0;
      out.coverage.set(y, x, true);
    }
  }
  return out;
}

SparseLabelMap sparse_root_gt(const SparseLabelMap& sparse, const Taxonomy& taxonomy) {
  SparseLabelMap out(sparse.h, sparse.w);
  for (std::size_t i = 0; i < sparse.labels.size(); ++i) {
    const int id = sparse.labels[i];
    out.labels[i] = id == kVoidLabel ? kVoidLabel : taxonomy.project_label_to_root(id);
  }
  return out;
}

void write_dense_gt(const std::string& path, const DenseLabelMap& map) {
  TensorBuffer probs({map.classes, map.h, map.w}, map.probs);
  TensorBuffer cov = TensorBuffer::zeros({map.h, map.w});
  for (std::size_t i = 0; i < map.coverage.mask.size(); ++i) {
    cov.data[i] = map.coverage.mask[i] ? 1.0 : 0.0;
  }
  write_tensor_file(path, {{"probs", std::move(probs)}, {"coverage", std::move(cov)}});
}

DenseLabelMap read_dense_gt(const std::string& path) {
  auto tensors = read_tensor_file(path);
  if (tensors.size() != 2 || tensors[0].name != "probs" || tensors[1].name != "coverage") {
    throw Error("dense gt: '" + path + "' is not a probs+coverage container");
  }
  const TensorBuffer& probs = tensors[0].tensor;
  const TensorBuffer& cov = tensors[1].tensor;
  if (probs.rank() != 3 || cov.rank() != 2 || probs.shape[1] != cov.shape[0] ||
      probs.shape[2] != cov.shape[1]) {
    throw Error("dense gt: inconsistent shapes in '" + path + "'");
  }
  DenseLabelMap out(probs.shape[0], probs.shape[1], probs.shape[2]);
  out.probs = probs.data;
  for (std::size_t i = 0; i < cov.data.size(); ++i) {
    out.coverage.mask[i] = cov.data[i] != 0.0 ? 1 : 0;
  }
  return out;
}

}  // namespace hierseg
