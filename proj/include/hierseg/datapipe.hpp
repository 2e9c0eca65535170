#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "hierseg/hierloss.hpp"
#include "hierseg/labels.hpp"
#include "hierseg/rng.hpp"
#include "hierseg/taxonomy.hpp"
#include "hierseg/tensor.hpp"

namespace hierseg {

/// One dataset image with exactly one supervision payload.
struct SampleRecord {
  std::string image_id;
  TensorBuffer image;  // [3,H,W] in [0,1]
  SupervisionKind kind = SupervisionKind::per_pixel;
  SparseLabelMap sparse_gt;                 // per_pixel only
  std::vector<WeakAnnotation> annotations;  // bbox / image_level only
};

struct AnnotationRecord {
  std::string image_id;
  std::size_t h = 0, w = 0;
  std::vector<WeakAnnotation> annotations;
};

std::vector<AnnotationRecord> read_annotations_jsonl(const std::string& path);

// Pure resize helpers; images interpolate bilinearly, label masks use
// nearest neighbor. Both follow the align-corners-false convention.
TensorBuffer resize_bilinear(const TensorBuffer& image, std::size_t out_h, std::size_t out_w);
SparseLabelMap resize_nearest(const SparseLabelMap& mask, std::size_t out_h, std::size_t out_w);

struct FitCropResult {
  TensorBuffer image;
  std::vector<WeakAnnotation> annotations;
  SparseLabelMap mask;  // empty (h==0) when no mask was supplied
  double scale_x = 1.0, scale_y = 1.0;
  std::size_t off_x = 0, off_y = 0;
};

/// Upscale so the image tightly covers the target aspect ratio, then take a
/// random crop of exactly (target_h, target_w). Boxes are rescaled and
/// clipped; boxes reduced to zero area are dropped; image-level labels pass
/// through.
FitCropResult fit_and_crop(const TensorBuffer& image,
                           const std::vector<WeakAnnotation>& annotations,
                           const SparseLabelMap* mask, std::size_t target_h,
                           std::size_t target_w, Rng& rng);

/// On-disk dataset produced by synth_generate: manifest.json + images/ plus
/// masks/ or annotations.jsonl. Loaded samples are cached in memory.
class Dataset {
 public:
  static Dataset open(const std::string& dir);

  const std::string& dir() const { return dir_; }
  SupervisionKind mode() const { return mode_; }
  std::size_t size() const { return ids_.size(); }
  const std::string& image_id(std::size_t index) const { return ids_.at(index); }
  const SampleRecord& sample(std::size_t index) const;

 private:
  std::string dir_;
  SupervisionKind mode_ = SupervisionKind::per_pixel;
  std::vector<std::string> ids_;
  std::vector<std::vector<WeakAnnotation>> annotations_;  // weak modes
  mutable std::unordered_map<std::size_t, SampleRecord> cache_;
};

struct BatchSpec {
  int per_pixel = 1;
  int bbox = 2;
  int image_level = 1;
  std::size_t crop_h = 64, crop_w = 64;

  void validate() const;
  int count(SupervisionKind kind) const;
};

/// A batch sample with the ground truth the hierarchical loss consumes:
/// root sparse GT for per-pixel samples, per-subclassifier dense GT for
/// everything (densified for per-pixel, voted pseudo GT for weak).
struct PreparedSample {
  std::string image_id;
  SupervisionKind kind = SupervisionKind::per_pixel;
  TensorBuffer image;
  SparseLabelMap leaf_gt;              // per_pixel only (leaf ids, for metrics)
  SparseLabelMap root_gt;              // per_pixel only (root indices)
  std::vector<DenseLabelMap> sub_gt;   // per subclassifier ordinal
};

PreparedSample prepare_sample(const SampleRecord& rec, const Taxonomy& taxonomy,
                              std::size_t crop_h, std::size_t crop_w, Rng& rng);

// Draws each dataset without replacement, reshuffling per epoch; the three
// cursors advance independently. Fully deterministic for a fixed seed.
class BatchSampler {
 public:
  BatchSampler(const Dataset* per_pixel, const Dataset* bbox, const Dataset* image_level,
               BatchSpec spec, const Taxonomy* taxonomy, std::uint64_t seed);

  std::vector<PreparedSample> next();

  /// Steps that make one pass over the primary dataset (the first kind with
  /// a nonzero count, in per_pixel, bbox, image_level order).
  std::size_t steps_per_epoch() const;
  std::size_t epochs_completed(SupervisionKind kind) const;

 private:
  struct Cursor {
    const Dataset* ds = nullptr;
    std::vector<std::size_t> order;
    std::size_t pos = 0;
    std::size_t epochs = 0;
    Rng rng{0};
  };

  Cursor& cursor(SupervisionKind kind);
  const Cursor& cursor(SupervisionKind kind) const;
  void draw(SupervisionKind kind, int count, std::vector<PreparedSample>& out);

  BatchSpec spec_;
  const Taxonomy* taxonomy_;
  Cursor per_pixel_, bbox_, image_level_;
  Rng crop_rng_{0};
};

}  // namespace hierseg
