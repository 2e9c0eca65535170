#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hierseg/datapipe.hpp"
#include "hierseg/hierloss.hpp"
#include "hierseg/model.hpp"

namespace hierseg {

struct OptimizerConfig {
  double lr = 0.02;
  double momentum = 0.9;
  int epochs = 26;
  int halvings = 3;  // learning rate halved this many times, evenly spaced

  void validate() const;
};

/// Learning rate for a 0-based epoch: halved `halvings` times at evenly
/// spaced epoch boundaries.
double lr_at_epoch(const OptimizerConfig& cfg, int epoch);

/// Epochs (0-based) whose start introduces a halved rate.
std::vector<int> lr_boundaries(const OptimizerConfig& cfg);

struct ExperimentConfig {
  std::string taxonomy_path;
  std::uint64_t seed = 1;
  std::string out_dir;
  HierNetConfig model;
  LossConfig loss;
  BatchSpec batch;
  OptimizerConfig optimizer;
  std::string per_pixel_dir, bbox_dir, image_level_dir, val_dir;

  static ExperimentConfig parse(const std::string& json_text);
  static ExperimentConfig load_file(const std::string& path);

  /// Effective config with every default resolved; reloading it reproduces
  /// the run.
  std::string serialize() const;

  /// `check_paths` additionally requires every referenced path to exist.
  void validate(bool check_paths) const;
};

}  // namespace hierseg
