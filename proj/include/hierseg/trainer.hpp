#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "hierseg/config.hpp"
#include "hierseg/metrics.hpp"

namespace hierseg {

/// Full-dataset evaluation over leaf classes, including the subclass-only
/// mIoU aggregate.
EpochMetrics evaluate_dataset(const HierNet& net, const Dataset& val, const Taxonomy& taxonomy);

/// Metrics report JSON (per-class IoU/Acc, means, excluded classes, history).
std::string metrics_report_json(const Taxonomy& taxonomy, const EpochMetrics& averaged,
                                const std::vector<EpochMetrics>& history,
                                std::size_t epochs_averaged);

/// Aligned-column text table of the same report.
std::string metrics_report_table(const Taxonomy& taxonomy, const EpochMetrics& averaged);

struct TrainOutcome {
  std::vector<EpochMetrics> history;
  EpochMetrics averaged;  // mean of the last three epochs (fewer if shorter)
  std::string checkpoint_path;
  std::string report_path;
};

/// Runs the full training loop: heterogeneous batches, hierarchical loss,
/// momentum SGD with the halving schedule, per-epoch evaluation, and the
/// last-three-epochs averaged report. Writes checkpoint, training log,
/// effective config, run manifest and report into cfg.out_dir, which is
/// locked for the duration of the run.
TrainOutcome run_training(const ExperimentConfig& cfg, std::ostream* progress,
                          const std::string& resume_checkpoint = "");

}  // namespace hierseg
