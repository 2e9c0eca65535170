#include "hierseg/trainer.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "hierseg/checkpoint.hpp"
#include "hierseg/optim.hpp"

namespace hierseg {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

EpochMetrics evaluate_dataset(const HierNet& net, const Dataset& val,
                              const Taxonomy& taxonomy) {
  if (val.mode() != SupervisionKind::per_pixel) {
    throw Error("evaluate: validation dataset must be per_pixel labeled");
  }
  ConfusionMatrix cm(static_cast<std::size_t>(taxonomy.leaf_count()));
  for (std::size_t i = 0; i < val.size(); ++i) {
    const SampleRecord& rec = val.sample(i);
    const SegFields fields = net.infer(rec.image);
    const SparseLabelMap pred = predict(fields, taxonomy);
    SparseLabelMap leaf_gt(rec.sparse_gt.h, rec.sparse_gt.w);
    for (std::size_t p = 0; p < rec.sparse_gt.labels.size(); ++p) {
      const int id = rec.sparse_gt.labels[p];
      leaf_gt.labels[p] = id == kVoidLabel ? kVoidLabel : taxonomy.leaf_of_label(id);
    }
    cm.accumulate(leaf_gt, pred);
  }

  const ClassScores scores = per_class_scores(cm);
  EpochMetrics m;
  m.per_class_iou = scores.iou;
  m.per_class_acc = scores.acc;
  m.present = scores.present;
  double iou_sum = 0.0, acc_sum = 0.0, sub_iou_sum = 0.0;
  std::size_t n_present = 0, n_sub = 0;
  for (int leaf = 0; leaf < taxonomy.leaf_count(); ++leaf) {
    if (!scores.present[leaf]) continue;
    iou_sum += scores.iou[leaf];
    acc_sum += scores.acc[leaf];
    ++n_present;
    if (taxonomy.node_of_leaf(leaf).is_subclass()) {
      sub_iou_sum += scores.iou[leaf];
      ++n_sub;
    }
  }
  m.miou = n_present ? iou_sum / n_present : 0.0;
  m.macc = n_present ? acc_sum / n_present : 0.0;
  m.subclass_miou = n_sub ? sub_iou_sum / n_sub : 0.0;
  return m;
}

std::string metrics_report_json(const Taxonomy& taxonomy, const EpochMetrics& averaged,
                                const std::vector<EpochMetrics>& history,
                                std::size_t epochs_averaged) {
  json j;
  j["miou"] = averaged.miou;
  j["macc"] = averaged.macc;
  j["subclass_miou"] = averaged.subclass_miou;
  j["epochs_averaged"] = epochs_averaged;
  j["classes"] = json::array();
  json excluded = json::array();
  for (int leaf = 0; leaf < taxonomy.leaf_count(); ++leaf) {
    if (!averaged.present[leaf]) {
      excluded.push_back(taxonomy.leaf_name(leaf));
      continue;
    }
    j["classes"].push_back({{"name", taxonomy.leaf_name(leaf)},
                            {"iou", averaged.per_class_iou[leaf]},
                            {"acc", averaged.per_class_acc[leaf]},
                            {"subclass", taxonomy.node_of_leaf(leaf).is_subclass()}});
  }
  j["excluded"] = excluded;
  j["history"] = json::array();
  for (std::size_t e = 0; e < history.size(); ++e) {
    j["history"].push_back({{"epoch", e + 1},
                            {"miou", history[e].miou},
                            {"macc", history[e].macc},
                            {"subclass_miou", history[e].subclass_miou}});
  }
  return j.dump(2) + "\n";
}

std::string metrics_report_table(const Taxonomy& taxonomy, const EpochMetrics& averaged) {
  std::ostringstream os;
  os << std::left << std::setw(14) << "class" << std::right << std::setw(8) << "IoU"
     << std::setw(8) << "Acc" << "\n";
  os << std::string(30, '-') << "\n";
  os << std::fixed << std::setprecision(3);
  for (int leaf = 0; leaf < taxonomy.leaf_count(); ++leaf) {
    os << std::left << std::setw(14) << taxonomy.leaf_name(leaf) << std::right;
    if (averaged.present[leaf]) {
      os << std::setw(8) << averaged.per_class_iou[leaf] << std::setw(8)
         << averaged.per_class_acc[leaf];
    } else {
      os << std::setw(8) << "-" << std::setw(8) << "-";
    }
    os << "\n";
  }
  os << std::string(30, '-') << "\n";
  os << std::left << std::setw(14) << "mIoU" << std::right << std::setw(8) << averaged.miou
     << "\n";
  os << std::left << std::setw(14) << "mAcc" << std::right << std::setw(8) << averaged.macc
     << "\n";
  os << std::left << std::setw(14) << "subcls mIoU" << std::right << std::setw(8)
     << averaged.subclass_miou << "\n";
  return os.str();
}

namespace {

/// Exclusive ownership of the run directory.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : path_(dir / ".lock") {
    if (fs::exists(path_)) {
      throw Error("train: output directory '" + dir.string() +
                  "' is locked by another run (stale? remove " + path_.string() + ")");
    }
    std::ofstream lock(path_);
    lock << "locked\n";
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  fs::path path_;
};

json breakdown_to_json(const LossBreakdown& bd, const Taxonomy& taxonomy) {
  json subs = json::array();
  for (std::size_t sc = 0; sc < bd.sub.size(); ++sc) {
    subs.push_back({{"name", taxonomy.root_name(taxonomy.sub_owner_root(
                                static_cast<int>(sc)))},
                    {"dense_loss", bd.sub[sc].dense_loss},
                    {"dense_pixels", bd.sub[sc].dense_pixels},
                    {"weak_loss", bd.sub[sc].weak_loss},
                    {"weak_pixels", bd.sub[sc].weak_pixels}});
  }
  return {{"root_loss", bd.root_loss},
          {"root_pixels", bd.root_pixels},
          {"root_term_empty", bd.root_term_empty},
          {"subs", subs},
          {"reg_loss", bd.reg_loss},
          {"total", bd.total}};
}

}  // namespace

TrainOutcome run_training(const ExperimentConfig& cfg, std::ostream* progress,
                          const std::string& resume_checkpoint) {
  cfg.validate(true);
  if (cfg.out_dir.empty()) throw Error("train: out_dir is required");
  if (cfg.val_dir.empty()) throw Error("train: datasets.val is required");
  fs::create_directories(cfg.out_dir);
  RunLock lock(cfg.out_dir);

  const Taxonomy taxonomy = Taxonomy::load_file(cfg.taxonomy_path);

  std::optional<Dataset> pp, bb, il;
  if (cfg.batch.per_pixel > 0) pp = Dataset::open(cfg.per_pixel_dir);
  if (cfg.batch.bbox > 0) bb = Dataset::open(cfg.bbox_dir);
  if (cfg.batch.image_level > 0) il = Dataset::open(cfg.image_level_dir);
  const Dataset val = Dataset::open(cfg.val_dir);

  HierNet net = resume_checkpoint.empty()
                    ? HierNet::build(cfg.model, taxonomy)
                    : HierNet::from_params(cfg.model, taxonomy,
                                           load_checkpoint(resume_checkpoint));

  BatchSampler sampler(pp ? &*pp : nullptr, bb ? &*bb : nullptr, il ? &*il : nullptr,
                       cfg.batch, &taxonomy, cfg.seed);
  const std::size_t steps_per_epoch = sampler.steps_per_epoch();

  // Effective config and schedule, written before the loop so a crashed run
  // is still reproducible.
  {
    std::ofstream os(fs::path(cfg.out_dir) / "config.json", std::ios::trunc);
    os << cfg.serialize();
  }
  {
    json manifest;
    manifest["steps_per_epoch"] = steps_per_epoch;
    manifest["lr_halving_epochs"] = lr_boundaries(cfg.optimizer);
    json schedule = json::array();
    for (int e = 0; e < cfg.optimizer.epochs; ++e) {
      schedule.push_back(lr_at_epoch(cfg.optimizer, e));
    }
    manifest["lr_by_epoch"] = schedule;
    std::ofstream os(fs::path(cfg.out_dir) / "run_manifest.json", std::ios::trunc);
    os << manifest.dump(2) << "\n";
  }

  std::ofstream log(fs::path(cfg.out_dir) / "training_log.jsonl", std::ios::trunc);
  if (!log) throw Error("train: cannot write training log in '" + cfg.out_dir + "'");

  SgdState sgd_state;
  TrainOutcome outcome;
  std::size_t global_step = 0;
  for (int epoch = 0; epoch < cfg.optimizer.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg.optimizer, epoch);
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const std::vector<PreparedSample> batch = sampler.next();

      Tape tape;
      const TapeBinding binding = net.bind(tape);
      std::vector<SegOutput> outputs;
      std::vector<LossSample> loss_batch;
      outputs.reserve(batch.size());
      for (const PreparedSample& sample : batch) {
        outputs.push_back(net.forward(tape, binding, sample.image));
      }
      for (std::size_t i = 0; i < batch.size(); ++i) {
        LossSample ls;
        ls.kind = batch[i].kind;
        ls.root_softmax = outputs[i].root.softmax;
        for (const HeadNodes& hn : outputs[i].subs) ls.sub_softmax.push_back(hn.softmax);
        ls.root_gt = batch[i].kind == SupervisionKind::per_pixel ? &batch[i].root_gt : nullptr;
        ls.sub_gt = &batch[i].sub_gt;
        loss_batch.push_back(std::move(ls));
      }

      const TotalLossResult loss =
          total_loss(tape, loss_batch, binding.weight_nodes, taxonomy, cfg.loss);
      if (!tape.value(loss.total).all_finite()) {
        throw Error("train: non-finite loss at step " + std::to_string(global_step));
      }
      tape.backward(loss.total);

      std::unordered_map<std::string, TensorBuffer> grads;
      for (const auto& [name, node] : binding.params) {
        grads.emplace(name, tape.grad(node));
      }
      // Decay is differentiated inside the loss, so none is applied here.
      sgd_step(net.params(), grads, sgd_state, lr, cfg.optimizer.momentum, 0.0);

      json entry = breakdown_to_json(loss.breakdown, taxonomy);
      entry["step"] = global_step;
      entry["epoch"] = epoch + 1;
      entry["lr"] = lr;
      log << entry.dump() << "\n";
      ++global_step;
    }

    outcome.history.push_back(evaluate_dataset(net, val, taxonomy));
    save_checkpoint((fs::path(cfg.out_dir) / "last.ckpt").string(), net.params());
    if (progress) {
      const EpochMetrics& m = outcome.history.back();
      *progress << "epoch " << (epoch + 1) << "/" << cfg.optimizer.epochs << " lr " << lr
                << " miou " << m.miou << " subclass_miou " << m.subclass_miou << "\n";
    }
  }

  const std::size_t avg_n = std::min<std::size_t>(3, outcome.history.size());
  outcome.averaged = epoch_average(outcome.history, avg_n);
  outcome.checkpoint_path = (fs::path(cfg.out_dir) / "final.ckpt").string();
  save_checkpoint(outcome.checkpoint_path, net.params());
  outcome.report_path = (fs::path(cfg.out_dir) / "report.json").string();
  {
    std::ofstream os(outcome.report_path, std::ios::trunc);
    os << metrics_report_json(taxonomy, outcome.averaged, outcome.history, avg_n);
  }
  return outcome;
}

}  // namespace hierseg
