#pragma once

#include <string>
#include <vector>

#include "hierseg/labels.hpp"
#include "hierseg/taxonomy.hpp"

namespace hierseg {

/// Dense pseudo ground truth for one subclassifier by vote counting: each
/// bbox votes inside its rectangle, each image-level label votes everywhere,
/// then counts are normalized per pixel. Annotations mapping to another
/// subclassifier (or to no subclassifier at all) are ignored; malformed
/// rectangles are rejected.
DenseLabelMap vote_dense_gt(const std::vector<WeakAnnotation>& annotations, std::size_t h,
                            std::size_t w, const ClassifierId& target, const Taxonomy& taxonomy);

/// One-hot dense labels for the pixels of `sparse` that map to a subclass of
/// the given subclassifier; everything else stays uncovered.
DenseLabelMap densify_sparse(const SparseLabelMap& sparse, const ClassifierId& target,
                             const Taxonomy& taxonomy);

/// Project every labeled pixel to its root class; void stays void.
SparseLabelMap sparse_root_gt(const SparseLabelMap& sparse, const Taxonomy& taxonomy);

// Dense GT files: the named-tensor container with a "probs" [n,H,W] entry
// and a "coverage" [H,W] entry of 0/1 values.
void write_dense_gt(const std::string& path, const DenseLabelMap& map);
DenseLabelMap read_dense_gt(const std::string& path);

}  // namespace hierseg
