#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "hierseg/checkpoint.hpp"
#include "hierseg/config.hpp"
#include "hierseg/miner.hpp"
#include "hierseg/pseudo_gt.hpp"
#include "hierseg/synth.hpp"
#include "hierseg/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace hierseg;

namespace {

bool verbose_logging() {
  const char* lvl = std::getenv("HIERSEG_LOG");
  return lvl == nullptr || std::string(lvl) != "quiet";
}

int cmd_synth(const std::string& out_dir, const std::string& mode, int count,
              std::uint64_t seed, std::size_t height, std::size_t width, double domain_shift,
              bool fixed_size, bool as_json) {
  SynthConfig cfg;
  cfg.count = count;
  cfg.mode = supervision_kind_from_name(mode);
  cfg.seed = seed;
  cfg.height = height;
  cfg.width = width;
  cfg.domain_shift = domain_shift;
  cfg.vary_size = !fixed_size;
  synth_generate(out_dir, cfg);
  if (as_json) {
    json j{{"out_dir", out_dir}, {"mode", mode}, {"count", count}, {"seed", seed}};
    std::cout << j.dump() << "\n";
  } else if (verbose_logging()) {
    std::cerr << "wrote " << count << " " << mode << " images to " << out_dir << "\n";
  }
  return 0;
}

int cmd_generate_gt(const std::string& dataset_dir, const std::string& taxonomy_path,
                    const std::string& out_dir, bool as_json) {
  const Taxonomy taxonomy = Taxonomy::load_file(taxonomy_path);
  const auto records =
      read_annotations_jsonl((fs::path(dataset_dir) / "annotations.jsonl").string());
  fs::create_directories(out_dir);
  std::size_t files = 0;
  for (const AnnotationRecord& rec : records) {
    for (int sc = 0; sc < taxonomy.num_subclassifiers(); ++sc) {
      const int root = taxonomy.sub_owner_root(sc);
      const DenseLabelMap gt =
          vote_dense_gt(rec.annotations, rec.h, rec.w, ClassifierId::sub(root), taxonomy);
      const std::string path =
          (fs::path(out_dir) / (rec.image_id + "." + taxonomy.root_name(root) + ".dgt"))
              .string();
      write_dense_gt(path, gt);
      ++files;
    }
  }
  if (as_json) {
    json j{{"out_dir", out_dir}, {"images", records.size()}, {"files", files}};
    std::cout << j.dump() << "\n";
  } else if (verbose_logging()) {
    std::cerr << "wrote " << files << " dense gt files to " << out_dir << "\n";
  }
  return 0;
}

int cmd_mine(const std::string& meta_path, const std::string& weights_path,
             std::size_t k_bbox, std::size_t k_image, const std::string& out_dir,
             bool as_json) {
  VoteWeights weights = VoteWeights::defaults();
  if (!weights_path.empty()) {
    std::ifstream is(weights_path);
    if (!is) throw Error("mine: cannot open weights file '" + weights_path + "'");
    std::ostringstream buf;
    buf << is.rdbuf();
    weights = VoteWeights::parse(buf.str());
  }
  std::ifstream meta(meta_path);
  if (!meta) throw Error("mine: cannot open metadata file '" + meta_path + "'");
  const MiningResult result = mine(meta, weights, k_bbox, k_image);

  fs::create_directories(out_dir);
  auto write_ids = [&](const std::string& name, const std::vector<ScoredImage>& subset) {
    std::ofstream os(fs::path(out_dir) / name, std::ios::trunc);
    for (const ScoredImage& s : subset) os << s.id << "\n";
  };
  write_ids("bbox_ids.txt", result.bbox_subset);
  write_ids("image_level_ids.txt", result.image_level_subset);

  json summary{{"images_seen", result.images_seen},
               {"labels_seen", result.labels_seen},
               {"unknown_labels", result.unknown_labels},
               {"skipped_lines", result.skipped_lines},
               {"bbox_selected", result.bbox_subset.size()},
               {"image_level_selected", result.image_level_subset.size()},
               {"errors", result.errors}};
  {
    std::ofstream os(fs::path(out_dir) / "summary.json", std::ios::trunc);
    os << summary.dump(2) << "\n";
  }
  if (as_json) {
    std::cout << summary.dump() << "\n";
  } else if (verbose_logging()) {
    std::cerr << "selected " << result.bbox_subset.size() << " bbox / "
              << result.image_level_subset.size() << " image-level images ("
              << result.skipped_lines << " lines skipped)\n";
  }
  return 0;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed_override,
              const std::string& out_override, const std::string& resume, bool as_json) {
  ExperimentConfig cfg = ExperimentConfig::load_file(config_path);
  if (seed_override) {
    cfg.seed = *seed_override;
    cfg.model.seed = *seed_override;
  }
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (!resume.empty() && !fs::exists(resume)) {
    throw Error("train: resume checkpoint '" + resume + "' not found");
  }
  std::ostream* progress = verbose_logging() ? &std::cerr : nullptr;
  const TrainOutcome outcome = run_training(cfg, progress, resume);
  if (as_json) {
    json j{{"checkpoint", outcome.checkpoint_path},
           {"report", outcome.report_path},
           {"miou", outcome.averaged.miou},
           {"macc", outcome.averaged.macc},
           {"subclass_miou", outcome.averaged.subclass_miou},
           {"epochs", outcome.history.size()}};
    std::cout << j.dump() << "\n";
  } else if (verbose_logging()) {
    std::cerr << "done: miou " << outcome.averaged.miou << " subclass_miou "
              << outcome.averaged.subclass_miou << " -> " << outcome.report_path << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint,
             const std::string& dataset_override, bool as_json) {
  const ExperimentConfig cfg = ExperimentConfig::load_file(config_path);
  const Taxonomy taxonomy = Taxonomy::load_file(cfg.taxonomy_path);
  const std::string val_dir = dataset_override.empty() ? cfg.val_dir : dataset_override;
  if (val_dir.empty()) throw Error("eval: no dataset given (config datasets.val or --dataset)");
  const Dataset val = Dataset::open(val_dir);
  const HierNet net = HierNet::from_params(cfg.model, taxonomy, load_checkpoint(checkpoint));
  const EpochMetrics m = evaluate_dataset(net, val, taxonomy);
  if (as_json) {
    std::cout << metrics_report_json(taxonomy, m, {m}, 1);
  } else {
    std::cout << metrics_report_table(taxonomy, m);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierseg: hierarchical segmentation training on mixed supervision"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_out, synth_mode = "per_pixel";
  int synth_count = 16;
  std::uint64_t synth_seed = 1;
  std::size_t synth_h = 64, synth_w = 64;
  double synth_shift = 0.0;
  bool synth_fixed = false, synth_json = false;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--mode", synth_mode, "per_pixel | bbox | image_level");
  synth->add_option("--count", synth_count, "number of images");
  synth->add_option("--seed", synth_seed, "rng seed");
  synth->add_option("--height", synth_h, "base image height");
  synth->add_option("--width", synth_w, "base image width");
  synth->add_option("--domain-shift", synth_shift, "palette shift for weak modes [0,1]");
  synth->add_flag("--fixed-size", synth_fixed, "disable size variation for weak modes");
  synth->add_flag("--json", synth_json, "machine-readable stdout");

  // generate-gt
  auto* gen = app.add_subcommand("generate-gt", "offline dense pseudo ground truth");
  std::string gen_dataset, gen_taxonomy, gen_out;
  bool gen_json = false;
  gen->add_option("--dataset", gen_dataset, "weak dataset directory")->required();
  gen->add_option("--taxonomy", gen_taxonomy, "taxonomy config file")->required();
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_flag("--json", gen_json, "machine-readable stdout");

  // mine
  auto* mine_cmd = app.add_subcommand("mine", "rank and select weakly labeled images");
  std::string mine_meta, mine_weights, mine_out;
  std::size_t mine_k_bbox = 0, mine_k_image = 0;
  bool mine_json = false;
  mine_cmd->add_option("--meta", mine_meta, "metadata csv")->required();
  mine_cmd->add_option("--weights", mine_weights, "vote weights json (default table if omitted)");
  mine_cmd->add_option("--k-bbox", mine_k_bbox, "bbox subset size")->required();
  mine_cmd->add_option("--k-image", mine_k_image, "image-level subset size")->required();
  mine_cmd->add_option("--out", mine_out, "output directory")->required();
  mine_cmd->add_flag("--json", mine_json, "machine-readable stdout");

  // train
  auto* train = app.add_subcommand("train", "run the training loop");
  std::string train_config, train_out, train_resume;
  std::optional<std::uint64_t> train_seed;
  bool train_json = false;
  train->add_option("--config", train_config, "experiment config json")->required();
  train->add_option("--seed", train_seed, "override config seed");
  train->add_option("--out", train_out, "override output directory");
  train->add_option("--resume", train_resume, "checkpoint to resume from");
  train->add_flag("--json", train_json, "machine-readable stdout");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_config, eval_ckpt, eval_dataset;
  bool eval_json = false;
  eval->add_option("--config", eval_config, "experiment config json")->required();
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--dataset", eval_dataset, "per_pixel dataset (default: config val)");
  eval->add_flag("--json", eval_json, "machine-readable stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      return cmd_synth(synth_out, synth_mode, synth_count, synth_seed, synth_h, synth_w,
                       synth_shift, synth_fixed, synth_json);
    }
    if (gen->parsed()) return cmd_generate_gt(gen_dataset, gen_taxonomy, gen_out, gen_json);
    if (mine_cmd->parsed()) {
      return cmd_mine(mine_meta, mine_weights, mine_k_bbox, mine_k_image, mine_out, mine_json);
    }
    if (train->parsed()) {
      return cmd_train(train_config, train_seed, train_out, train_resume, train_json);
    }
    if (eval->parsed()) return cmd_eval(eval_config, eval_ckpt, eval_dataset, eval_json);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
