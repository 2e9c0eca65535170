#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "hierseg/labels.hpp"

namespace hierseg {

/// Per-class vote weights for street-scene likelihood ranking.
struct VoteWeights {
  std::map<std::string, int> weights;

  /// The documented default table: context-specific classes vote more.
  static VoteWeights defaults();
  static VoteWeights parse(const std::string& json_text);

  void validate() const;  // all weights >= 1
};

struct ImageLabel {
  std::string cls;
  AnnotationKind kind = AnnotationKind::bbox;
};

/// Sum of vote weights over all labels; unknown classes score 0 and are
/// counted through `unknown_labels` when given.
long score_image(const std::vector<ImageLabel>& labels, const VoteWeights& weights,
                 std::size_t* unknown_labels = nullptr);

struct ScoredImage {
  std::string id;
  long score = 0;
};

struct MiningResult {
  std::vector<ScoredImage> bbox_subset;         // score desc, id asc
  std::vector<ScoredImage> image_level_subset;  // disjoint from bbox_subset
  std::size_t images_seen = 0;
  std::size_t labels_seen = 0;
  std::size_t unknown_labels = 0;
  std::size_t skipped_lines = 0;
  std::vector<std::string> errors;  // first few skip reasons
};

/// Streams Open-Images-style CSV metadata (header required, rows grouped by
/// image_id) and selects the top-k_bbox images by bbox votes, then the top
/// k_image by image-level votes from the remainder. Bounded top-K memory;
/// ties break by image id ascending; zero-score images are never selected.
/// Malformed or out-of-group lines are skipped and reported.
MiningResult mine(std::istream& metadata_csv, const VoteWeights& weights, std::size_t k_bbox,
                  std::size_t k_image);

}  // namespace hierseg
