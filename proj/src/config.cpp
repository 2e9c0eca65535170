#include "hierseg/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace hierseg {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

void OptimizerConfig::validate() const {
  if (lr <= 0.0) throw Error("optimizer config: lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw Error("optimizer config: momentum must be in [0,1)");
  }
  if (epochs < 1) throw Error("optimizer config: epochs must be >= 1");
  if (halvings < 0) throw Error("optimizer config: halvings must be >= 0");
}

double lr_at_epoch(const OptimizerConfig& cfg, int epoch) {
  const int spans = cfg.halvings + 1;
  const int k = static_cast<int>(
      static_cast<long>(epoch) * spans / std::max(1, cfg.epochs));
  double lr = cfg.lr;
  for (int i = 0; i < std::min(k, cfg.halvings); ++i) lr *= 0.5;
  return lr;
}

std::vector<int> lr_boundaries(const OptimizerConfig& cfg) {
  std::vector<int> out;
  for (int e = 1; e < cfg.epochs; ++e) {
    if (lr_at_epoch(cfg, e) != lr_at_epoch(cfg, e - 1)) out.push_back(e);
  }
  return out;
}

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(std::string("config: invalid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  cfg.taxonomy_path = get_or<std::string>(j, "taxonomy", "");
  cfg.seed = get_or<std::uint64_t>(j, "seed", 1);
  cfg.out_dir = get_or<std::string>(j, "out_dir", "");

  if (j.contains("model")) {
    const json& m = j.at("model");
    cfg.model.channels = get_or<std::vector<int>>(m, "channels", cfg.model.channels);
    cfg.model.adapt_width = get_or<int>(m, "adapt_width", cfg.model.adapt_width);
    cfg.model.downsample = get_or<int>(m, "downsample", cfg.model.downsample);
  }
  cfg.model.seed = cfg.seed;

  if (j.contains("loss")) {
    const json& l = j.at("loss");
    cfg.loss.lambda = get_or<double>(l, "lambda", cfg.loss.lambda);
    cfg.loss.weight_decay = get_or<double>(l, "weight_decay", cfg.loss.weight_decay);
  }

  if (j.contains("batch")) {
    const json& b = j.at("batch");
    cfg.batch.per_pixel = get_or<int>(b, "per_pixel", cfg.batch.per_pixel);
    cfg.batch.bbox = get_or<int>(b, "bbox", cfg.batch.bbox);
    cfg.batch.image_level = get_or<int>(b, "image_level", cfg.batch.image_level);
    if (b.contains("crop")) {
      const auto crop = b.at("crop").get<std::vector<std::size_t>>();
      if (crop.size() != 2) throw Error("config: batch.crop must be [H,W]");
      cfg.batch.crop_h = crop[0];
      cfg.batch.crop_w = crop[1];
    }
  }

  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    cfg.optimizer.lr = get_or<double>(o, "lr", cfg.optimizer.lr);
    cfg.optimizer.momentum = get_or<double>(o, "momentum", cfg.optimizer.momentum);
    cfg.optimizer.epochs = get_or<int>(o, "epochs", cfg.optimizer.epochs);
    cfg.optimizer.halvings = get_or<int>(o, "halvings", cfg.optimizer.halvings);
  }

  if (j.contains("datasets")) {
    const json& d = j.at("datasets");
    cfg.per_pixel_dir = get_or<std::string>(d, "per_pixel", "");
    cfg.bbox_dir = get_or<std::string>(d, "bbox", "");
    cfg.image_level_dir = get_or<std::string>(d, "image_level", "");
    cfg.val_dir = get_or<std::string>(d, "val", "");
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse(buf.str());
}

std::string ExperimentConfig::serialize() const {
  json j;
  j["taxonomy"] = taxonomy_path;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  j["model"] = {{"channels", model.channels},
                {"adapt_width", model.adapt_width},
                {"downsample", model.downsample}};
  j["loss"] = {{"lambda", loss.lambda}, {"weight_decay", loss.weight_decay}};
  j["batch"] = {{"per_pixel", batch.per_pixel},
                {"bbox", batch.bbox},
                {"image_level", batch.image_level},
                {"crop", {batch.crop_h, batch.crop_w}}};
  j["optimizer"] = {{"lr", optimizer.lr},
                    {"momentum", optimizer.momentum},
                    {"epochs", optimizer.epochs},
                    {"halvings", optimizer.halvings}};
  j["datasets"] = {{"per_pixel", per_pixel_dir},
                   {"bbox", bbox_dir},
                   {"image_level", image_level_dir},
                   {"val", val_dir}};
  return j.dump(2) + "\n";
}

void ExperimentConfig::validate(bool check_paths) const {
  model.validate();
  loss.validate();
  batch.validate();
  optimizer.validate();
  if (taxonomy_path.empty()) throw Error("config: taxonomy path is required");
  if (!check_paths) return;
  auto need = [](const std::string& what, const std::string& path) {
    if (path.empty()) throw Error("config: " + what + " path is required");
    if (!fs::exists(path)) throw Error("config: " + what + " path '" + path + "' not found");
  };
  need("taxonomy", taxonomy_path);
  if (batch.per_pixel > 0) need("per_pixel dataset", per_pixel_dir);
  if (batch.bbox > 0) need("bbox dataset", bbox_dir);
  if (batch.image_level > 0) need("image_level dataset", image_level_dir);
}

}  // namespace hierseg
