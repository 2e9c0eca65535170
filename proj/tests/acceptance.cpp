// Acceptance suite: one pass/fail line per criterion, non-zero exit on any
// failure. Criteria 1-4 and 6-7 are exact property/oracle checks; criterion 5
// runs the directional training experiment; criterion 8 drives the CLI.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "hierseg/checkpoint.hpp"
#include "hierseg/config.hpp"
#include "hierseg/datapipe.hpp"
#include "hierseg/metrics.hpp"
#include "hierseg/miner.hpp"
#include "hierseg/model.hpp"
#include "hierseg/optim.hpp"
#include "hierseg/pseudo_gt.hpp"
#include "hierseg/rng.hpp"
#include "hierseg/synth.hpp"
#include "hierseg/trainer.hpp"

using namespace hierseg;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// ---------------------------------------------------------------------------
// shared helpers

const Taxonomy& synth_taxonomy() {
  static const Taxonomy tax = Taxonomy::load(kSynthTaxonomyJson);
  return tax;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw Error("acceptance: cannot read " + p.string());
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

TensorBuffer random_image(Rng& rng, std::size_t h, std::size_t w) {
  TensorBuffer t = TensorBuffer::zeros({3, h, w});
  for (double& v : t.data) v = rng.uniform(0.0, 1.0);
  return t;
}

/// Ground truth for one fixed toy batch: a per-pixel sample plus a bbox and
/// an image-level weak sample on the synthetic label space.
struct ToyBatchGt {
  SparseLabelMap root_gt;
  std::vector<DenseLabelMap> pp_sub;
  std::vector<DenseLabelMap> bbox_sub;
  std::vector<DenseLabelMap> il_sub;
  TensorBuffer pp_image, bbox_image, il_image;
};

ToyBatchGt make_toy_batch(std::uint64_t seed, std::size_t h, std::size_t w) {
  const Taxonomy& tax = synth_taxonomy();
  Rng rng(seed);
  ToyBatchGt out;
  out.pp_image = random_image(rng, h, w);
  out.bbox_image = random_image(rng, h, w);
  out.il_image = random_image(rng, h, w);

  SparseLabelMap dataset_gt(h, w);
  for (std::size_t p = 0; p < h * w; ++p) {
    dataset_gt.labels[p] =
        rng.uniform() < 0.1 ? kVoidLabel : static_cast<int>(rng.uniform_int(7));
  }
  out.root_gt = sparse_root_gt(dataset_gt, tax);
  for (int sc = 0; sc < tax.num_subclassifiers(); ++sc) {
    const ClassifierId sub = ClassifierId::sub(tax.sub_owner_root(sc));
    out.pp_sub.push_back(densify_sparse(dataset_gt, sub, tax));
  }

  const int iw = static_cast<int>(w), ih = static_cast<int>(h);
  const std::vector<WeakAnnotation> bbox_anns = {
      {AnnotationKind::bbox, 2, {0, 0, iw / 2 + 1, ih / 2 + 1}},    // car
      {AnnotationKind::bbox, 4, {iw / 4, ih / 4, iw - 1, ih - 1}},  // truck
      {AnnotationKind::bbox, 5, {iw / 2, 0, iw, ih / 2 + 2}},       // person
  };
  const std::vector<WeakAnnotation> il_anns = {
      {AnnotationKind::image_level, 3, {}},  // bus
      {AnnotationKind::image_level, 6, {}},  // rider
  };
  for (int sc = 0; sc < tax.num_subclassifiers(); ++sc) {
    const ClassifierId sub = ClassifierId::sub(tax.sub_owner_root(sc));
    out.bbox_sub.push_back(vote_dense_gt(bbox_anns, h, w, sub, tax));
    out.il_sub.push_back(vote_dense_gt(il_anns, h, w, sub, tax));
  }
  return out;
}

/// Forward + hierarchical loss of the fixed toy batch for a parameter set.
double toy_batch_loss(const HierNetConfig& model_cfg, const ParamSet& params,
                      const ToyBatchGt& gt, const LossConfig& loss_cfg,
                      Tape* keep_tape = nullptr, TapeBinding* keep_binding = nullptr,
                      std::vector<SegOutput>* keep_outputs = nullptr) {
  const Taxonomy& tax = synth_taxonomy();
  const HierNet net = HierNet::from_params(model_cfg, tax, params);
  Tape local_tape;
  Tape& tape = keep_tape ? *keep_tape : local_tape;
  TapeBinding binding = net.bind(tape);

  std::vector<SegOutput> outputs;
  outputs.push_back(net.forward(tape, binding, gt.pp_image));
  outputs.push_back(net.forward(tape, binding, gt.bbox_image));
  outputs.push_back(net.forward(tape, binding, gt.il_image));

  std::vector<LossSample> batch(3);
  batch[0].kind = SupervisionKind::per_pixel;
  batch[0].root_gt = &gt.root_gt;
  batch[0].sub_gt = &gt.pp_sub;
  batch[1].kind = SupervisionKind::bbox;
  batch[1].sub_gt = &gt.bbox_sub;
  batch[2].kind = SupervisionKind::image_level;
  batch[2].sub_gt = &gt.il_sub;
  for (std::size_t i = 0; i < 3; ++i) {
    batch[i].root_softmax = outputs[i].root.softmax;
    for (const HeadNodes& hn : outputs[i].subs) batch[i].sub_softmax.push_back(hn.softmax);
  }
  const TotalLossResult res = total_loss(tape, batch, binding.weight_nodes, tax, loss_cfg);
  if (keep_tape) {
    tape.backward(res.total);
    *keep_binding = binding;
    *keep_outputs = outputs;
  }
  return tape.value(res.total).data[0];
}

// ---------------------------------------------------------------------------
// criterion 1: finite-difference oracle over every parameter

bool criterion_gradient_oracle(std::string& detail) {
  const auto t0 = Clock::now();
  HierNetConfig model_cfg;
  model_cfg.channels = {4, 6};
  model_cfg.adapt_width = 4;
  model_cfg.downsample = 4;
  model_cfg.seed = 2024;
  LossConfig loss_cfg;
  loss_cfg.lambda = 0.1;
  loss_cfg.weight_decay = 0.00017;

  const ToyBatchGt gt = make_toy_batch(51, 8, 8);
  const HierNet net = HierNet::build(model_cfg, synth_taxonomy());
  const ParamSet& params = net.params();

  Tape tape;
  TapeBinding binding;
  std::vector<SegOutput> outputs;
  toy_batch_loss(model_cfg, params, gt, loss_cfg, &tape, &binding, &outputs);

  const double eps = 1e-5;
  double max_rel = 0.0;
  std::size_t checked = 0;
  for (const auto& [name, node] : binding.params) {
    const TensorBuffer& analytic = tape.grad(node);
    for (std::size_t i = 0; i < analytic.data.size(); ++i) {
      auto eval = [&](double delta) {
        ParamSet shifted;
        for (const std::string& n : params.names()) shifted.add(n, params.at(n));
        shifted.at(name).data[i] += delta;
        return toy_batch_loss(model_cfg, shifted, gt, loss_cfg);
      };
      const double fd = (eval(eps) - eval(-eps)) / (2 * eps);
      const double a = analytic.data[i];
      const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
      max_rel = std::max(max_rel, rel);
      ++checked;
    }
  }
  const double elapsed = seconds_since(t0);
  std::ostringstream os;
  os << checked << " params, max rel err " << max_rel << ", " << elapsed << "s";
  detail = os.str();
  return max_rel < 1e-4 && elapsed < 60.0;
}

// ---------------------------------------------------------------------------
// criterion 2: brute-force voting oracle, 1000 randomized images

DenseLabelMap vote_oracle(const std::vector<WeakAnnotation>& annotations, std::size_t h,
                          std::size_t w, const ClassifierId& target, const Taxonomy& tax) {
  const int ordinal = tax.sub_ordinal_of_root(target.root_class);
  const std::size_t n = static_cast<std::size_t>(tax.sub_class_count(ordinal));
  DenseLabelMap out(n, h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      std::vector<long> counter(n, 0);
      long total = 0;
      for (const WeakAnnotation& ann : annotations) {
        const LabelNode node = tax.node_of_label(ann.label_id);
        if (!node.is_subclass() || node.root_index != target.root_class) continue;
        bool inside = true;
        if (ann.kind == AnnotationKind::bbox) {
          inside = static_cast<int>(x) >= ann.rect.x_min &&
                   static_cast<int>(x) < ann.rect.x_max &&
                   static_cast<int>(y) >= ann.rect.y_min &&
                   static_cast<int>(y) < ann.rect.y_max;
        }
        if (!inside) continue;
        ++counter[static_cast<std::size_t>(node.sub_index)];
        ++total;
      }
      if (total == 0) continue;
      out.coverage.set(y, x, true);
      for (std::size_t c = 0; c < n; ++c) {
        out.at(c, y, x) = static_cast<double>(counter[c]) / static_cast<double>(total);
      }
    }
  }
  return out;
}

bool criterion_voting_oracle(std::string& detail) {
  const Taxonomy& tax = synth_taxonomy();
  Rng rng(1002);
  double max_diff = 0.0, max_norm_err = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t h = 3 + rng.uniform_int(14), w = 3 + rng.uniform_int(14);
    std::vector<WeakAnnotation> anns;
    const std::size_t count = rng.uniform_int(8);
    for (std::size_t i = 0; i < count; ++i) {
      const int label = 2 + static_cast<int>(rng.uniform_int(5));
      if (rng.uniform() < 0.6) {
        const int x0 = static_cast<int>(rng.uniform_int(w - 1));
        const int y0 = static_cast<int>(rng.uniform_int(h - 1));
        const int x1 = x0 + 1 + static_cast<int>(rng.uniform_int(w - x0 - 1));
        const int y1 = y0 + 1 + static_cast<int>(rng.uniform_int(h - y0 - 1));
        anns.push_back({AnnotationKind::bbox, label, {x0, y0, x1, y1}});
      } else {
        anns.push_back({AnnotationKind::image_level, label, {}});
      }
    }
    for (int sc = 0; sc < tax.num_subclassifiers(); ++sc) {
      const ClassifierId sub = ClassifierId::sub(tax.sub_owner_root(sc));
      const DenseLabelMap got = vote_dense_gt(anns, h, w, sub, tax);
      const DenseLabelMap want = vote_oracle(anns, h, w, sub, tax);
      if (got.coverage.mask != want.coverage.mask) {
        detail = "coverage mismatch at trial " + std::to_string(trial);
        return false;
      }
      for (std::size_t i = 0; i < got.probs.size(); ++i) {
        max_diff = std::max(max_diff, std::abs(got.probs[i] - want.probs[i]));
      }
      const std::size_t hw = h * w;
      for (std::size_t p = 0; p < hw; ++p) {
        if (!got.coverage.mask[p]) continue;
        double sum = 0.0;
        for (std::size_t c = 0; c < got.classes; ++c) sum += got.probs[c * hw + p];
        max_norm_err = std::max(max_norm_err, std::abs(sum - 1.0));
      }
    }
  }
  std::ostringstream os;
  os << "1000 images, max |got-oracle| " << max_diff << ", max |sum-1| " << max_norm_err;
  detail = os.str();
  return max_diff <= 1e-12 && max_norm_err < 1e-9;
}

// ---------------------------------------------------------------------------
// criterion 3: exact zero gradients at masked pixels and at the root head
// for weak-only batches

bool criterion_masking_exactness(std::string& detail) {
  const Taxonomy& tax = synth_taxonomy();
  HierNetConfig model_cfg;
  model_cfg.channels = {4, 6};
  model_cfg.adapt_width = 4;
  model_cfg.downsample = 4;
  LossConfig loss_cfg;
  loss_cfg.lambda = 0.1;
  loss_cfg.weight_decay = 0.00017;

  Rng rng(1003);
  std::size_t masked_pixels_checked = 0, root_params_checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    model_cfg.seed = 5000 + static_cast<std::uint64_t>(trial);
    const HierNet net = HierNet::build(model_cfg, tax);
    const std::size_t h = 8, w = 8;

    // weak-only batch: one bbox sample, one image-level sample
    std::vector<std::vector<WeakAnnotation>> anns(2);
    const int x0 = static_cast<int>(rng.uniform_int(4));
    const int y0 = static_cast<int>(rng.uniform_int(4));
    anns[0].push_back({AnnotationKind::bbox, 2 + static_cast<int>(rng.uniform_int(3)),
                       {x0, y0, x0 + 2 + static_cast<int>(rng.uniform_int(3)),
                        y0 + 2 + static_cast<int>(rng.uniform_int(3))}});
    if (rng.uniform() < 0.7) {
      anns[0].push_back({AnnotationKind::bbox, 5, {1, 1, 6, 6}});
    }
    anns[1].push_back(
        {AnnotationKind::image_level, 2 + static_cast<int>(rng.uniform_int(5)), {}});

    Tape tape;
    const TapeBinding binding = net.bind(tape);
    std::vector<SegOutput> outputs;
    std::vector<std::vector<DenseLabelMap>> sub_gts(2);
    std::vector<LossSample> batch(2);
    for (std::size_t i = 0; i < 2; ++i) {
      Rng img_rng(rng.next_u64());
      outputs.push_back(net.forward(tape, binding, random_image(img_rng, h, w)));
      for (int sc = 0; sc < tax.num_subclassifiers(); ++sc) {
        sub_gts[i].push_back(
            vote_dense_gt(anns[i], h, w, ClassifierId::sub(tax.sub_owner_root(sc)), tax));
      }
      batch[i].kind = i == 0 ? SupervisionKind::bbox : SupervisionKind::image_level;
      batch[i].root_softmax = outputs[i].root.softmax;
      for (const HeadNodes& hn : outputs[i].subs) batch[i].sub_softmax.push_back(hn.softmax);
      batch[i].sub_gt = &sub_gts[i];
    }
    const TotalLossResult res = total_loss(tape, batch, binding.weight_nodes, tax, loss_cfg);
    tape.backward(res.total);

    // condition-failing pixels must carry exactly zero logits gradients
    for (std::size_t i = 0; i < 2; ++i) {
      for (int sc = 0; sc < tax.num_subclassifiers(); ++sc) {
        const ClassifierId sub = ClassifierId::sub(tax.sub_owner_root(sc));
        const PixelMask mask = weak_condition_mask(tape.value(outputs[i].root.softmax),
                                                   sub_gts[i][static_cast<std::size_t>(sc)],
                                                   sub, tax);
        const TensorBuffer& grad =
            tape.grad(outputs[i].subs[static_cast<std::size_t>(sc)].logits);
        const std::size_t channels = grad.shape[1], hw = h * w;
        for (std::size_t p = 0; p < hw; ++p) {
          if (mask.mask[p]) continue;
          for (std::size_t c = 0; c < channels; ++c) {
            if (grad.data[c * hw + p] != 0.0) {
              detail = "nonzero masked logits grad at trial " + std::to_string(trial);
              return false;
            }
          }
          ++masked_pixels_checked;
        }
      }
    }
    // Root-head parameters receive nothing from weak-only batches. Weights
    // still carry the batch-independent L2 term, exactly 2*theta*decay in the
    // tape's own operation order; biases are not regularized and must be 0.
    for (const auto& [name, node] : binding.params) {
      if (name.find(".root.") == std::string::npos && name.rfind("head.root", 0) != 0) {
        continue;
      }
      const bool is_weight = name.ends_with(".weight");
      const TensorBuffer& g = tape.grad(node);
      const TensorBuffer& v = tape.value(node);
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        const double want = is_weight ? 2.0 * v.data[i] * loss_cfg.weight_decay : 0.0;
        if (g.data[i] != want) {
          detail = "root-head grad of " + name + " has a data contribution at trial " +
                   std::to_string(trial);
          return false;
        }
      }
      root_params_checked += g.data.size();
    }
  }
  std::ostringstream os;
  os << "100 batches, " << masked_pixels_checked << " masked pixels exactly zero, "
     << root_params_checked << " root-head params free of data gradients";
  detail = os.str();
  return masked_pixels_checked > 0 && root_params_checked > 0;
}

// ---------------------------------------------------------------------------
// criterion 4: dense CCE on one-hot labels reduces to sparse CCE

bool criterion_reduction_identity(std::string& detail) {
  Rng rng(1004);
  double max_diff = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.uniform_int(5), h = 2 + rng.uniform_int(5),
                      w = 2 + rng.uniform_int(5), hw = h * w;
    TensorBuffer field = TensorBuffer::zeros({n, h, w});
    for (std::size_t p = 0; p < hw; ++p) {
      double sum = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        field.data[c * hw + p] = rng.uniform(0.02, 1.0);
        sum += field.data[c * hw + p];
      }
      for (std::size_t c = 0; c < n; ++c) field.data[c * hw + p] /= sum;
    }
    SparseLabelMap sparse(h, w);
    DenseLabelMap dense(n, h, w);
    PixelMask mask(h, w);
    for (std::size_t p = 0; p < hw; ++p) {
      if (rng.uniform() < 0.25) {
        sparse.labels[p] = kVoidLabel;
        continue;
      }
      const int cls = static_cast<int>(rng.uniform_int(n));
      sparse.labels[p] = cls;
      dense.probs[static_cast<std::size_t>(cls) * hw + p] = 1.0;
      dense.coverage.mask[p] = 1;
      mask.mask[p] = 1;
    }
    Tape tape;
    const NodeId sm = tape.constant(field);
    const CceTerm s = sparse_cce(tape, sm, sparse);
    const CceTerm d = dense_cce(tape, sm, dense, mask);
    max_diff = std::max(max_diff,
                        std::abs(tape.value(s.node).data[0] - tape.value(d.node).data[0]));
  }
  detail = "1000 fields, max |dense-sparse| " + std::to_string(max_diff);
  return max_diff < 1e-12;
}

// ---------------------------------------------------------------------------
// criterion 5: directional reproduction of the weak-supervision gains

double run_experiment(const fs::path& base, int seed, int bbox_count,
                      const fs::path& out_dir) {
  ExperimentConfig cfg;
  cfg.taxonomy_path = (base / "val" / "taxonomy.json").string();
  cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.model.channels = {8, 12};
  cfg.model.adapt_width = 8;
  cfg.model.downsample = 4;
  cfg.model.seed = cfg.seed;
  cfg.loss.lambda = 0.1;
  cfg.loss.weight_decay = 0.00017;
  cfg.batch.per_pixel = 1;
  cfg.batch.bbox = bbox_count > 0 ? 2 : 0;
  cfg.batch.image_level = 0;
  cfg.batch.crop_h = 48;
  cfg.batch.crop_w = 48;
  cfg.optimizer.lr = 0.02;
  cfg.optimizer.momentum = 0.9;
  cfg.optimizer.epochs = 400;
  cfg.optimizer.halvings = 3;
  cfg.out_dir = out_dir.string();
  cfg.per_pixel_dir = (base / ("pp_" + std::to_string(seed))).string();
  if (bbox_count > 0) {
    cfg.bbox_dir =
        (base / ("bb_" + std::to_string(seed) + "_" + std::to_string(bbox_count))).string();
  }
  cfg.val_dir = (base / "val").string();
  return run_training(cfg, nullptr).averaged.subclass_miou;
}

bool criterion_directional(std::string& detail) {
  const auto t0 = Clock::now();
  constexpr int kSeeds = 5;
  // Tiny per-pixel sets leave subclass color boundaries badly estimated;
  // the bbox sets supply the missing instances, mirroring the reported
  // gains. Sizes and schedule fit the whole sweep in a few CPU minutes.
  constexpr int kPerPixelImages = 3;
  constexpr int kSmall = 6;
  constexpr int kLarge = 128;

  TempDir base("hierseg_acc_directional");
  {
    SynthConfig val_cfg;
    val_cfg.count = 32;
    val_cfg.mode = SupervisionKind::per_pixel;
    val_cfg.seed = 9999;
    val_cfg.height = 48;
    val_cfg.width = 48;
    synth_generate((base.path / "val").string(), val_cfg);
  }
  for (int seed = 1; seed <= kSeeds; ++seed) {
    SynthConfig pp_cfg;
    pp_cfg.count = kPerPixelImages;
    pp_cfg.mode = SupervisionKind::per_pixel;
    pp_cfg.seed = 1000 + static_cast<std::uint64_t>(seed);
    pp_cfg.height = 48;
    pp_cfg.width = 48;
    synth_generate((base.path / ("pp_" + std::to_string(seed))).string(), pp_cfg);
    for (int count : {kSmall, kLarge}) {
      SynthConfig bb_cfg;
      bb_cfg.count = count;
      bb_cfg.mode = SupervisionKind::bbox;
      bb_cfg.seed = 2000 + static_cast<std::uint64_t>(seed);  // small is a prefix of large
      bb_cfg.height = 48;
      bb_cfg.width = 48;
      synth_generate(
          (base.path / ("bb_" + std::to_string(seed) + "_" + std::to_string(count)))
              .string(),
          bb_cfg);
    }
  }

  double mean_zero = 0.0, mean_small = 0.0, mean_large = 0.0;
  std::ostringstream per_seed;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const double zero =
        run_experiment(base.path, seed, 0, base.path / ("run0_" + std::to_string(seed)));
    const double small = run_experiment(base.path, seed, kSmall,
                                        base.path / ("runS_" + std::to_string(seed)));
    const double large = run_experiment(base.path, seed, kLarge,
                                        base.path / ("runL_" + std::to_string(seed)));
    mean_zero += zero;
    mean_small += small;
    mean_large += large;
    per_seed << " s" << seed << ":[" << zero * 100 << "," << small * 100 << ","
             << large * 100 << "]";
  }
  mean_zero = mean_zero / kSeeds * 100.0;
  mean_small = mean_small / kSeeds * 100.0;
  mean_large = mean_large / kSeeds * 100.0;

  const double gain = mean_large - mean_zero;
  std::ostringstream os;
  os << "subclass mIoU means: none " << mean_zero << ", small " << mean_small << ", large "
     << mean_large << " (gain " << gain << " pts);" << per_seed.str() << "; "
     << seconds_since(t0) << "s";
  detail = os.str();
  return gain >= 2.0 && mean_large > mean_zero && mean_small <= mean_large;
}

// ---------------------------------------------------------------------------
// criterion 6: streaming mining equals full-sort selection

bool criterion_mining_oracle(std::string& detail) {
  VoteWeights weights;
  weights.weights = {{"traffic_light", 3}, {"license_plate", 3}, {"traffic_sign", 2},
                     {"car", 1},           {"person", 1},        {"truck", 1}};
  const std::vector<std::string> classes = {
      "traffic_light", "license_plate", "traffic_sign", "car", "person", "truck", "banana"};
  Rng rng(1006);
  struct Image {
    std::string id;
    std::vector<ImageLabel> labels;
  };
  std::vector<Image> images(2500);
  std::size_t rows = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "im%06zu", i);
    images[i].id = buf;
    const std::size_t n = rng.uniform_int(8);
    for (std::size_t k = 0; k < n; ++k) {
      images[i].labels.push_back(
          {classes[rng.uniform_int(classes.size())],
           rng.uniform() < 0.5 ? AnnotationKind::bbox : AnnotationKind::image_level});
      ++rows;
    }
  }
  auto to_csv = [&] {
    std::ostringstream os;
    os << "image_id,class,kind\n";
    for (const Image& img : images) {
      for (const ImageLabel& label : img.labels) {
        os << img.id << "," << label.cls << ","
           << (label.kind == AnnotationKind::bbox ? "bbox" : "image_level") << "\n";
      }
    }
    return os.str();
  };

  auto oracle = [&](const VoteWeights& w, std::size_t kb, std::size_t ki) {
    struct Row {
      std::string id;
      long bs = 0, is = 0;
    };
    std::vector<Row> rowsv;
    for (const Image& img : images) {
      Row r;
      r.id = img.id;
      for (const ImageLabel& label : img.labels) {
        auto it = w.weights.find(label.cls);
        const long wt = it == w.weights.end() ? 0 : it->second;
        (label.kind == AnnotationKind::bbox ? r.bs : r.is) += wt;
      }
      rowsv.push_back(r);
    }
    auto by_bbox = rowsv;
    std::sort(by_bbox.begin(), by_bbox.end(), [](const Row& a, const Row& b) {
      return a.bs != b.bs ? a.bs > b.bs : a.id < b.id;
    });
    std::vector<std::string> bids;
    for (const Row& r : by_bbox) {
      if (bids.size() >= kb || r.bs <= 0) break;
      bids.push_back(r.id);
    }
    std::set<std::string> taken(bids.begin(), bids.end());
    auto by_image = rowsv;
    std::sort(by_image.begin(), by_image.end(), [](const Row& a, const Row& b) {
      return a.is != b.is ? a.is > b.is : a.id < b.id;
    });
    std::vector<std::string> iids;
    for (const Row& r : by_image) {
      if (iids.size() >= ki) break;
      if (r.is <= 0 || taken.count(r.id)) continue;
      iids.push_back(r.id);
    }
    return std::pair{bids, iids};
  };

  auto ids_of = [](const std::vector<ScoredImage>& v) {
    std::vector<std::string> out;
    for (const ScoredImage& s : v) out.push_back(s.id);
    return out;
  };

  for (const auto& [kb, ki] : std::vector<std::pair<std::size_t, std::size_t>>{
           {100, 100}, {400, 150}, {0, 50}}) {
    std::istringstream csv(to_csv());
    const MiningResult got = mine(csv, weights, kb, ki);
    const auto [want_b, want_i] = oracle(weights, kb, ki);
    if (ids_of(got.bbox_subset) != want_b || ids_of(got.image_level_subset) != want_i) {
      detail = "streaming != full sort at k=(" + std::to_string(kb) + "," +
               std::to_string(ki) + ")";
      return false;
    }
    std::set<std::string> bset(want_b.begin(), want_b.end());
    for (const ScoredImage& s : got.image_level_subset) {
      if (bset.count(s.id)) {
        detail = "subsets overlap";
        return false;
      }
    }
  }

  VoteWeights doubled = weights;
  for (auto& [cls, w] : doubled.weights) w *= 2;
  std::istringstream csv1(to_csv()), csv2(to_csv());
  const MiningResult a = mine(csv1, weights, 120, 120);
  const MiningResult b = mine(csv2, doubled, 120, 120);
  auto ids = [](const std::vector<ScoredImage>& v) {
    std::vector<std::string> out;
    for (const ScoredImage& s : v) out.push_back(s.id);
    return out;
  };
  if (ids(a.bbox_subset) != ids(b.bbox_subset) ||
      ids(a.image_level_subset) != ids(b.image_level_subset)) {
    detail = "selection changed under uniform weight scaling";
    return false;
  }
  detail = std::to_string(rows) + " label rows over 2500 images, all selections exact";
  return true;
}

// ---------------------------------------------------------------------------
// criterion 7: metrics oracle

bool criterion_metrics_oracle(std::string& detail) {
  SparseLabelMap gt(1, 8), pred(1, 8);
  gt.labels = {0, 0, 0, 0, 1, 1, 1, 1};
  pred.labels = {0, 0, 0, 1, 1, 1, 1, 1};
  ConfusionMatrix cm(2);
  cm.accumulate(gt, pred);
  if (cm.at(0, 0) != 3 || cm.at(0, 1) != 1 || cm.at(1, 0) != 0 || cm.at(1, 1) != 4) {
    detail = "confusion counts wrong";
    return false;
  }
  const double miou_got = miou(cm), macc_got = macc(cm);
  const double miou_want = (3.0 / 4.0 + 4.0 / 5.0) / 2.0;  // 0.775
  const double macc_want = (3.0 / 4.0 + 1.0) / 2.0;        // 0.875
  if (miou_got != miou_want || macc_got != macc_want) {
    detail = "miou/macc mismatch";
    return false;
  }

  Rng rng(1007);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t h = 8, w = 8;
    SparseLabelMap g(h, w), p(h, w);
    for (std::size_t i = 0; i < h * w; ++i) {
      g.labels[i] = rng.uniform() < 0.1 ? kVoidLabel : static_cast<int>(rng.uniform_int(4));
      p.labels[i] = static_cast<int>(rng.uniform_int(4));
    }
    const std::size_t split = 1 + rng.uniform_int(h - 1);
    auto rows = [&](const SparseLabelMap& m, std::size_t y0, std::size_t y1) {
      SparseLabelMap out(y1 - y0, m.w);
      std::copy(m.labels.begin() + static_cast<long>(y0 * m.w),
                m.labels.begin() + static_cast<long>(y1 * m.w), out.labels.begin());
      return out;
    };
    ConfusionMatrix whole(4), parts(4), rest(4);
    whole.accumulate(g, p);
    parts.accumulate(rows(g, 0, split), rows(p, 0, split));
    rest.accumulate(rows(g, split, h), rows(p, split, h));
    parts.merge(rest);
    for (std::size_t a = 0; a < 4; ++a) {
      for (std::size_t b = 0; b < 4; ++b) {
        if (whole.at(a, b) != parts.at(a, b)) {
          detail = "additivity violated";
          return false;
        }
      }
    }
  }
  detail = "miou 0.775 and macc 0.875 exact; additivity over 50 random splits";
  return true;
}

// ---------------------------------------------------------------------------
// criterion 8: training determinism through the CLI

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HIERSEG_BIN) + " " + args + " >/dev/null 2>&1";
  return std::system(cmd.c_str());
}

bool criterion_determinism(std::string& detail) {
  TempDir dir("hierseg_acc_determinism");
  const std::string base = dir.path.string();
  if (run_cli("synth --out " + base + "/pp --mode per_pixel --count 3 --seed 61 "
              "--height 32 --width 32") != 0 ||
      run_cli("synth --out " + base + "/bb --mode bbox --count 4 --seed 62 "
              "--height 32 --width 32") != 0 ||
      run_cli("synth --out " + base + "/val --mode per_pixel --count 3 --seed 63 "
              "--height 32 --width 32") != 0) {
    detail = "synth failed";
    return false;
  }
  {
    std::ofstream os(dir.path / "config.json");
    os << R"({
  "taxonomy": ")" << base << R"(/pp/taxonomy.json",
  "seed": 17,
  "out_dir": ")" << base << R"(/run_a",
  "model": {"channels": [6, 8], "adapt_width": 6, "downsample": 4},
  "batch": {"per_pixel": 1, "bbox": 1, "image_level": 0, "crop": [32, 32]},
  "optimizer": {"lr": 0.05, "momentum": 0.9, "epochs": 3, "halvings": 1},
  "datasets": {"per_pixel": ")" << base << R"(/pp", "bbox": ")" << base
       << R"(/bb", "val": ")" << base << R"(/val"}
})";
  }
  if (run_cli("train --config " + base + "/config.json") != 0) {
    detail = "first training run failed";
    return false;
  }
  if (run_cli("train --config " + base + "/config.json --out " + base + "/run_b") != 0) {
    detail = "second training run failed";
    return false;
  }
  const bool ckpt_same =
      slurp(dir.path / "run_a/final.ckpt") == slurp(dir.path / "run_b/final.ckpt");
  const bool report_same =
      slurp(dir.path / "run_a/report.json") == slurp(dir.path / "run_b/report.json");
  detail = std::string("checkpoints ") + (ckpt_same ? "identical" : "DIFFER") +
           ", reports " + (report_same ? "identical" : "DIFFER");
  return ckpt_same && report_same;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<bool(std::string&)> fn;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient oracle (finite differences, full hierarchical loss)",
       criterion_gradient_oracle},
      {2, "voting oracle (brute-force pseudo ground truth)", criterion_voting_oracle},
      {3, "masking exactness (conditional loss and root isolation)",
       criterion_masking_exactness},
      {4, "reduction identity (dense CCE on one-hot equals sparse CCE)",
       criterion_reduction_identity},
      {5, "directional reproduction (weak supervision gains on synthetic data)",
       criterion_directional},
      {6, "mining oracle (streaming top-k equals full sort)", criterion_mining_oracle},
      {7, "metrics oracle (hand-computed confusion matrix)", criterion_metrics_oracle},
      {8, "determinism (bit-identical checkpoints and reports)", criterion_determinism},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    std::string detail;
    bool ok = false;
    try {
      ok = c.fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << c.id << ": " << c.name
              << " -- " << detail << "\n"
              << std::flush;
    if (!ok) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
