#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hierseg/hierloss.hpp"
#include "hierseg/image_io.hpp"
#include "hierseg/labels.hpp"

namespace hierseg {

// Synthetic street-scene stand-in: sky-gradient background over a textured
// road band, with vehicle rectangles (wheels, window strip) and human
// silhouettes (head + body) as the object classes. Fill color picks the
// subclass; the silhouette cues the root class.
//
// Leaf label ids: 0 background, 1 road, 2 car, 3 bus, 4 truck,
//                 5 person, 6 rider.

extern const char* const kSynthTaxonomyJson;
extern const std::vector<std::string> kSynthClassNames;

struct SceneInstance {
  int leaf_label = 0;
  Rect visible_box;
  std::size_t visible_pixels = 0;
};

struct SynthScene {
  RgbImage image;
  SparseLabelMap mask;                      // leaf labels, fully labeled
  std::vector<SceneInstance> instances;     // visible objects, draw order
  std::vector<int> present_object_classes;  // sorted unique instance labels
};

/// Deterministic scene for (seed, index). `domain_shift` in [0,1] moves the
/// background/road palette and noise level, modeling the weak-dataset gap.
SynthScene synth_scene(std::uint64_t seed, std::size_t index, std::size_t h, std::size_t w,
                       double domain_shift);

struct SynthConfig {
  int count = 16;
  SupervisionKind mode = SupervisionKind::per_pixel;
  std::uint64_t seed = 1;
  std::size_t height = 64, width = 64;  // exact for per_pixel, base for weak
  bool vary_size = true;                // weak modes draw sizes around the base
  double domain_shift = 0.0;

  void validate() const;
};

/// Writes images/, masks/ or annotations.jsonl, manifest.json and a copy of
/// the synthetic taxonomy into `out_dir`. Byte-deterministic for a fixed
/// config.
void synth_generate(const std::string& out_dir, const SynthConfig& cfg);

}  // namespace hierseg
