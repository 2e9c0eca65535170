#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

#include "hierseg/config.hpp"
#include "hierseg/datapipe.hpp"
#include "hierseg/pseudo_gt.hpp"
#include "hierseg/synth.hpp"

using namespace hierseg;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout only
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(HIERSEG_BIN) + " " + args + " 2>/dev/null";
  RunResult res;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) {
    res.output.append(buf, n);
  }
  res.exit_code = pclose(pipe) / 256;
  return res;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

/// Writes the datasets and config for a small but real training run.
std::string write_experiment(const fs::path& dir, int pp_count, int bbox_count,
                             int val_count, int epochs) {
  const std::string base = dir.string();
  run("synth --out " + base + "/pp --mode per_pixel --count " + std::to_string(pp_count) +
      " --seed 21 --height 32 --width 32");
  run("synth --out " + base + "/bb --mode bbox --count " + std::to_string(bbox_count) +
      " --seed 22 --height 32 --width 32");
  run("synth --out " + base + "/val --mode per_pixel --count " + std::to_string(val_count) +
      " --seed 23 --height 32 --width 32");
  json cfg;
  cfg["taxonomy"] = base + "/pp/taxonomy.json";
  cfg["seed"] = 7;
  cfg["out_dir"] = base + "/run";
  cfg["model"] = {{"channels", {6, 8}}, {"adapt_width", 6}, {"downsample", 4}};
  cfg["loss"] = {{"lambda", 0.1}, {"weight_decay", 0.00017}};
  cfg["batch"] = {{"per_pixel", 1}, {"bbox", 1}, {"image_level", 0}, {"crop", {32, 32}}};
  cfg["optimizer"] = {{"lr", 0.05}, {"momentum", 0.9}, {"epochs", epochs}, {"halvings", 1}};
  cfg["datasets"] = {{"per_pixel", base + "/pp"},
                     {"bbox", base + "/bb"},
                     {"image_level", ""},
                     {"val", base + "/val"}};
  const std::string cfg_path = base + "/config.json";
  std::ofstream os(cfg_path);
  os << cfg.dump(2);
  return cfg_path;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("learning rate halves three times over four near-equal spans") {
  OptimizerConfig opt;
  opt.lr = 0.02;
  opt.epochs = 26;
  opt.halvings = 3;
  std::vector<double> distinct;
  for (int e = 0; e < opt.epochs; ++e) {
    const double lr = lr_at_epoch(opt, e);
    if (distinct.empty() || distinct.back() != lr) distinct.push_back(lr);
  }
  CHECK(distinct == std::vector<double>{0.02, 0.01, 0.005, 0.0025});
  CHECK(lr_boundaries(opt) == std::vector<int>{7, 13, 20});

  OptimizerConfig flat;
  flat.halvings = 0;
  for (int e = 0; e < flat.epochs; ++e) CHECK(lr_at_epoch(flat, e) == flat.lr);
}

TEST_CASE("config parsing resolves defaults and validates fields") {
  const ExperimentConfig cfg = ExperimentConfig::parse(R"({"taxonomy": "t.json"})");
  CHECK(cfg.batch.per_pixel == 1);
  CHECK(cfg.batch.bbox == 2);
  CHECK(cfg.batch.image_level == 1);
  CHECK(cfg.loss.lambda == 0.1);
  CHECK(cfg.loss.weight_decay == 0.00017);
  CHECK(cfg.optimizer.momentum == 0.9);
  const ExperimentConfig again = ExperimentConfig::parse(cfg.serialize());
  CHECK(again.serialize() == cfg.serialize());

  CHECK_THROWS_AS(ExperimentConfig::parse(R"({"optimizer": {"lr": -1}})").validate(false),
                  Error);
  CHECK_THROWS_AS(ExperimentConfig::parse(R"({"optimizer": {"epochs": 0}})").validate(false),
                  Error);
  CHECK_THROWS_AS(ExperimentConfig::parse("not json"), Error);
}

TEST_CASE("synth emits a self-describing dataset that the reader accepts") {
  TempDir dir("hierseg_cli_synth");
  const RunResult res = run("synth --out " + dir.path.string() +
                            " --mode image_level --count 3 --seed 5 --height 32 --width 32 "
                            "--json");
  CHECK(res.exit_code == 0);
  const json j = json::parse(res.output);
  CHECK(j.at("count") == 3);
  const Dataset ds = Dataset::open(dir.path.string());
  CHECK(ds.size() == 3);
  CHECK(ds.mode() == SupervisionKind::image_level);
  CHECK(fs::exists(dir.path / "taxonomy.json"));
}

TEST_CASE("generate-gt output matches in-process voting byte for byte") {
  TempDir dir("hierseg_cli_gengt");
  run("synth --out " + dir.path.string() +
      "/bb --mode bbox --count 4 --seed 31 --height 32 --width 32");
  const RunResult res =
      run("generate-gt --dataset " + dir.path.string() + "/bb --taxonomy " +
          dir.path.string() + "/bb/taxonomy.json --out " + dir.path.string() + "/gt --json");
  CHECK(res.exit_code == 0);
  CHECK(json::parse(res.output).at("files") == 8);  // 4 images x 2 subclassifiers

  const Taxonomy tax = Taxonomy::load_file((dir.path / "bb/taxonomy.json").string());
  const auto records =
      read_annotations_jsonl((dir.path / "bb/annotations.jsonl").string());
  for (const AnnotationRecord& rec : records) {
    for (int sc = 0; sc < tax.num_subclassifiers(); ++sc) {
      const int root = tax.sub_owner_root(sc);
      const DenseLabelMap gt =
          vote_dense_gt(rec.annotations, rec.h, rec.w, ClassifierId::sub(root), tax);
      const fs::path onthefly = dir.path / "onthefly.dgt";
      write_dense_gt(onthefly.string(), gt);
      const fs::path offline =
          dir.path / "gt" / (rec.image_id + "." + tax.root_name(root) + ".dgt");
      REQUIRE(fs::exists(offline));
      CHECK(slurp(onthefly) == slurp(offline));
    }
  }
}

TEST_CASE("mine reproduces the frozen golden selection") {
  TempDir dir("hierseg_cli_mine");
  {
    std::ofstream meta(dir.path / "meta.csv");
    meta << "image_id,class,kind,x_min,y_min,x_max,y_max,confidence\n"
            "a,car,bbox,1,1,5,5,0.9\n"
            "a,traffic_light,bbox,2,2,3,3,0.8\n"
            "b,car,image_level,,,,,\n"
            "b,person,image_level,,,,,\n"
            "c,license_plate,bbox,0,0,2,2,1.0\n"
            "c,car,image_level,,,,,\n"
            "d,banana,image_level,,,,,\n";
  }
  const RunResult res = run("mine --meta " + (dir.path / "meta.csv").string() +
                            " --k-bbox 1 --k-image 2 --out " + (dir.path / "out").string() +
                            " --json");
  CHECK(res.exit_code == 0);
  // bbox scores: a = 1+3 = 4, c = 3 -> top1 = a
  // image-level scores: b = 2, c = 1, a = 0 -> top2 from remainder = b, c
  CHECK(slurp(dir.path / "out/bbox_ids.txt") == "a\n");
  CHECK(slurp(dir.path / "out/image_level_ids.txt") == "b\nc\n");
  const json summary = json::parse(slurp(dir.path / "out/summary.json"));
  CHECK(summary.at("images_seen") == 4);
  CHECK(summary.at("unknown_labels") == 1);
}

TEST_CASE("train produces a checkpoint, logs, reports, and is rerun-identical") {
  TempDir dir("hierseg_cli_train");
  const std::string cfg_path = write_experiment(dir.path, 3, 4, 3, 2);

  const RunResult first = run("train --config " + cfg_path + " --json");
  REQUIRE(first.exit_code == 0);
  const json out = json::parse(first.output);
  CHECK(out.at("epochs") == 2);

  const fs::path run_dir = dir.path / "run";
  for (const char* name : {"final.ckpt", "last.ckpt", "report.json", "config.json",
                           "run_manifest.json", "training_log.jsonl"}) {
    CHECK(fs::exists(run_dir / name));
  }
  CHECK_FALSE(fs::exists(run_dir / ".lock"));  // released after the run

  const json report = json::parse(slurp(run_dir / "report.json"));
  CHECK(report.contains("miou"));
  CHECK(report.contains("subclass_miou"));
  CHECK(report.at("history").size() == 2);

  // the training log carries the per-step loss breakdown
  std::istringstream log(slurp(run_dir / "training_log.jsonl"));
  std::string line;
  std::size_t steps = 0;
  while (std::getline(log, line)) {
    const json entry = json::parse(line);
    CHECK(entry.contains("root_loss"));
    CHECK(entry.at("subs").size() == 2);
    ++steps;
  }
  CHECK(steps == 6);  // 3 per-pixel images, 1 per batch, 2 epochs

  // determinism: a rerun into a fresh directory is byte-identical
  const std::string ckpt = slurp(run_dir / "final.ckpt");
  const std::string rep = slurp(run_dir / "report.json");
  const RunResult second =
      run("train --config " + cfg_path + " --out " + (dir.path / "run2").string());
  REQUIRE(second.exit_code == 0);
  CHECK(slurp(dir.path / "run2/final.ckpt") == ckpt);
  CHECK(slurp(dir.path / "run2/report.json") == rep);

  // a different seed must change the checkpoint
  const RunResult third = run("train --config " + cfg_path + " --seed 8 --out " +
                              (dir.path / "run3").string());
  REQUIRE(third.exit_code == 0);
  CHECK(slurp(dir.path / "run3/final.ckpt") != ckpt);
}

TEST_CASE("the effective config reproduces the run when reloaded") {
  TempDir dir("hierseg_cli_roundtrip");
  const std::string cfg_path = write_experiment(dir.path, 2, 2, 2, 1);
  REQUIRE(run("train --config " + cfg_path).exit_code == 0);
  const std::string report = slurp(dir.path / "run/report.json");
  // reload the effective config written next to the outputs
  const RunResult again = run("train --config " + (dir.path / "run/config.json").string() +
                              " --out " + (dir.path / "replay").string());
  REQUIRE(again.exit_code == 0);
  CHECK(slurp(dir.path / "replay/report.json") == report);
}

TEST_CASE("eval on a trained checkpoint emits a well-formed report for all classes") {
  TempDir dir("hierseg_cli_eval");
  const std::string cfg_path = write_experiment(dir.path, 2, 2, 2, 1);
  REQUIRE(run("train --config " + cfg_path).exit_code == 0);
  const RunResult res = run("eval --config " + cfg_path + " --checkpoint " +
                            (dir.path / "run/final.ckpt").string() + " --json");
  REQUIRE(res.exit_code == 0);
  const json report = json::parse(res.output);
  // every leaf class is either scored or explicitly excluded
  CHECK(report.at("classes").size() + report.at("excluded").size() == 7);
  const RunResult table = run("eval --config " + cfg_path + " --checkpoint " +
                              (dir.path / "run/final.ckpt").string());
  CHECK(table.exit_code == 0);
  CHECK(table.output.find("mIoU") != std::string::npos);
}

TEST_CASE("a locked output directory rejects a second writer") {
  TempDir dir("hierseg_cli_lock");
  const std::string cfg_path = write_experiment(dir.path, 2, 2, 2, 1);
  fs::create_directories(dir.path / "run");
  std::ofstream(dir.path / "run/.lock") << "locked\n";
  CHECK(run("train --config " + cfg_path).exit_code != 0);
}

TEST_CASE("error paths exit non-zero") {
  TempDir dir("hierseg_cli_errors");
  CHECK(run("train --config /nonexistent/config.json").exit_code != 0);
  CHECK(run("mine --meta /nonexistent.csv --k-bbox 1 --k-image 1 --out " +
            (dir.path / "m").string())
            .exit_code != 0);
  const std::string cfg_path = write_experiment(dir.path, 2, 2, 2, 1);
  CHECK(run("train --config " + cfg_path + " --resume /nonexistent.ckpt").exit_code != 0);
  CHECK(run("eval --config " + cfg_path + " --checkpoint /nonexistent.ckpt").exit_code != 0);
}

}  // TEST_SUITE
