#pragma once

#include <cstdint>
#include <vector>

#include "hierseg/labels.hpp"

namespace hierseg {

// Exact integer confusion counts; rows = ground truth, columns = prediction.
// Void ground-truth pixels are skipped.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes);

  std::size_t classes() const { return n_; }
  std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_[gt * n_ + pred]; }
  std::uint64_t total() const;

  void accumulate(const SparseLabelMap& gt, const SparseLabelMap& pred);
  void merge(const ConfusionMatrix& other);

 private:
  std::size_t n_;
  std::vector<std::uint64_t> counts_;
};

struct ClassScores {
  std::vector<double> iou;        // valid where present
  std::vector<double> acc;
  std::vector<bool> present;      // class has ground-truth pixels
  std::size_t excluded = 0;       // classes absent from ground truth
};

ClassScores per_class_scores(const ConfusionMatrix& cm);

/// Means over classes present in ground truth; absent classes are excluded.
double miou(const ConfusionMatrix& cm);
double macc(const ConfusionMatrix& cm);

struct EpochMetrics {
  double miou = 0.0;
  double macc = 0.0;
  double subclass_miou = 0.0;  // mean IoU over leaf classes owned by subclassifiers
  std::vector<double> per_class_iou;
  std::vector<double> per_class_acc;
  std::vector<bool> present;
};

/// Arithmetic mean of the last `last_n` entries, per metric.
EpochMetrics epoch_average(const std::vector<EpochMetrics>& history, std::size_t last_n);

}  // namespace hierseg
