#include "hierseg/metrics.hpp"

namespace hierseg {

ConfusionMatrix::ConfusionMatrix(std::size_t classes)
    : n_(classes), counts_(classes * classes, 0) {
  if (classes < 1) throw Error("confusion matrix: need at least one class");
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (std::uint64_t c : counts_) t += c;
  return t;
}

void ConfusionMatrix::accumulate(const SparseLabelMap& gt, const SparseLabelMap& pred) {
  if (gt.h != pred.h || gt.w != pred.w) {
    throw Error("confusion matrix: gt " + std::to_string(gt.h) + "x" + std::to_string(gt.w) +
                " != pred " + std::to_string(pred.h) + "x" + std::to_string(pred.w));
  }
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const int g = gt.labels[i];
    if (g == kVoidLabel) continue;
    const int p = pred.labels[i];
    if (g < 0 || static_cast<std::size_t>(g) >= n_) {
      throw Error("confusion matrix: gt label " + std::to_string(g) + " out of range");
    }
    if (p < 0 || static_cast<std::size_t>(p) >= n_) {
      throw Error("confusion matrix: prediction " + std::to_string(p) +
                  " out of range (void predictions are not allowed)");
    }
    ++counts_[static_cast<std::size_t>(g) * n_ + static_cast<std::size_t>(p)];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.n_ != n_) throw Error("confusion matrix: merge size mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

ClassScores per_class_scores(const ConfusionMatrix& cm) {
  const std::size_t n = cm.classes();
  ClassScores s;
  s.iou.assign(n, 0.0);
  s.acc.assign(n, 0.0);
  s.present.assign(n, false);
  for (std::size_t c = 0; c < n; ++c) {
    std::uint64_t tp = cm.at(c, c), row = 0, col = 0;
    for (std::size_t k = 0; k < n; ++k) {
      row += cm.at(c, k);
      col += cm.at(k, c);
    }
    if (row == 0) {
      ++s.excluded;
      continue;
    }
    s.present[c] = true;
    const std::uint64_t denom = row + col - tp;  // TP + FN + FP
    s.iou[c] = denom == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(denom);
    s.acc[c] = static_cast<double>(tp) / static_cast<double>(row);
  }
  return s;
}

namespace {

double present_mean(const std::vector<double>& values, const std::vector<bool>& present) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < values.size(); ++c) {
    if (!present[c]) continue;
    sum += values[c];
    ++count;
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

}  // namespace

double miou(const ConfusionMatrix& cm) {
  const ClassScores s = per_class_scores(cm);
  return present_mean(s.iou, s.present);
}

double macc(const ConfusionMatrix& cm) {
  const ClassScores s = per_class_scores(cm);
  return present_mean(s.acc, s.present);
}

EpochMetrics epoch_average(const std::vector<EpochMetrics>& history, std::size_t last_n) {
  if (history.size() < last_n || last_n == 0) {
    throw Error("epoch_average: need at least " + std::to_string(last_n) +
                " recorded epochs, have " + std::to_string(history.size()));
  }
  const std::size_t start = history.size() - last_n;
  EpochMetrics avg;
  avg.per_class_iou.assign(history[start].per_class_iou.size(), 0.0);
  avg.per_class_acc.assign(history[start].per_class_acc.size(), 0.0);
  avg.present = history.back().present;
  for (std::size_t e = start; e < history.size(); ++e) {
    const EpochMetrics& m = history[e];
    avg.miou += m.miou;
    avg.macc += m.macc;
    avg.subclass_miou += m.subclass_miou;
    for (std::size_t c = 0; c < avg.per_class_iou.size(); ++c) {
      avg.per_class_iou[c] += m.per_class_iou[c];
      avg.per_class_acc[c] += m.per_class_acc[c];
    }
  }
  const double k = static_cast<double>(last_n);
  avg.miou /= k;
  avg.macc /= k;
  avg.subclass_miou /= k;
  for (std::size_t c = 0; c < avg.per_class_iou.size(); ++c) {
    avg.per_class_iou[c] /= k;
    avg.per_class_acc[c] /= k;
  }
  return avg;
}

}  // namespace hierseg
