#include "hierseg/miner.hpp"

#include <algorithm>
#include <istream>
#include <queue>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace hierseg {

VoteWeights VoteWeights::defaults() {
  // Context-specific classes cast more votes than classes that also appear
  // outside street scenes.
  VoteWeights w;
  w.weights = {
      {"license_plate", 3}, {"traffic_light", 3}, {"traffic_sign", 2}, {"bicycle", 1},
      {"boat", 1},          {"bus", 1},           {"car", 1},          {"caravan", 1},
      {"motorcycle", 1},    {"person", 1},        {"rider", 1},        {"trailer", 1},
      {"train", 1},         {"truck", 1},
  };
  return w;
}

VoteWeights VoteWeights::parse(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("vote weights: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error("vote weights: expected an object of class -> weight");
  VoteWeights w;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_number_integer()) {
      throw Error("vote weights: weight of '" + it.key() + "' must be an integer");
    }
    w.weights[it.key()] = it.value().get<int>();
  }
  w.validate();
  return w;
}

void VoteWeights::validate() const {
  for (const auto& [cls, weight] : weights) {
    if (weight < 1) {
      throw Error("vote weights: weight of '" + cls + "' must be >= 1, got " +
                  std::to_string(weight));
    }
  }
}

long score_image(const std::vector<ImageLabel>& labels, const VoteWeights& weights,
                 std::size_t* unknown_labels) {
  long score = 0;
  for (const ImageLabel& label : labels) {
    auto it = weights.weights.find(label.cls);
    if (it == weights.weights.end()) {
      if (unknown_labels) ++*unknown_labels;
      continue;
    }
    score += it->second;
  }
  return score;
}

namespace {

// Min-heap keeping the best K: worst candidate on top, ready to evict.
struct WorseThan {
  bool operator()(const ScoredImage& a, const ScoredImage& b) const {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  }
};

using TopK = std::priority_queue<ScoredImage, std::vector<ScoredImage>, WorseThan>;

void push_topk(TopK& heap, std::size_t capacity, ScoredImage candidate) {
  if (capacity == 0 || candidate.score <= 0) return;
  heap.push(std::move(candidate));
  if (heap.size() > capacity) heap.pop();
}

std::vector<ScoredImage> drain_best_first(TopK& heap) {
  std::vector<ScoredImage> out(heap.size());
  for (std::size_t i = heap.size(); i-- > 0;) {
    out[i] = heap.top();
    heap.pop();
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

MiningResult mine(std::istream& metadata_csv, const VoteWeights& weights, std::size_t k_bbox,
                  std::size_t k_image) {
  weights.validate();
  MiningResult result;

  std::string line;
  if (!std::getline(metadata_csv, line)) throw Error("mine: metadata stream is empty");
  const std::vector<std::string> header = split_csv(line);
  long id_col = -1, class_col = -1, kind_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "image_id") id_col = static_cast<long>(i);
    if (header[i] == "class") class_col = static_cast<long>(i);
    if (header[i] == "kind") kind_col = static_cast<long>(i);
  }
  if (id_col < 0 || class_col < 0 || kind_col < 0) {
    throw Error("mine: header must contain image_id, class and kind columns");
  }
  const std::size_t min_cols =
      static_cast<std::size_t>(std::max({id_col, class_col, kind_col})) + 1;

  TopK bbox_heap, image_heap;
  // k_bbox + k_image image-level candidates suffice: at most k_bbox of them
  // can be claimed by the bbox subset.
  const std::size_t image_capacity = k_image == 0 ? 0 : k_image + k_bbox;

  std::unordered_set<std::string> finished_ids;
  std::string current_id;
  std::vector<ImageLabel> current_labels;
  bool skipping_group = false;

  auto report_skip = [&](std::size_t lineno, const std::string& why) {
    ++result.skipped_lines;
    if (result.errors.size() < 20) {
      result.errors.push_back("line " + std::to_string(lineno) + ": " + why);
    }
  };

  auto finish_group = [&]() {
    if (current_id.empty()) return;
    ++result.images_seen;
    finished_ids.insert(current_id);
    std::vector<ImageLabel> bbox_labels, image_labels;
    for (ImageLabel& label : current_labels) {
      (label.kind == AnnotationKind::bbox ? bbox_labels : image_labels)
          .push_back(std::move(label));
    }
    push_topk(bbox_heap, k_bbox,
              {current_id, score_image(bbox_labels, weights, &result.unknown_labels)});
    push_topk(image_heap, image_capacity,
              {current_id, score_image(image_labels, weights, &result.unknown_labels)});
    current_labels.clear();
  };

  std::size_t lineno = 1;
  while (std::getline(metadata_csv, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> fields = split_csv(line);
    if (fields.size() < min_cols) {
      report_skip(lineno, "expected at least " + std::to_string(min_cols) + " columns");
      continue;
    }
    const std::string& id = fields[static_cast<std::size_t>(id_col)];
    const std::string& cls = fields[static_cast<std::size_t>(class_col)];
    const std::string& kind = fields[static_cast<std::size_t>(kind_col)];
    if (id.empty() || cls.empty()) {
      report_skip(lineno, "empty image_id or class");
      continue;
    }
    if (id != current_id) {
      finish_group();
      current_id = id;
      skipping_group = finished_ids.count(id) != 0;
      if (skipping_group) current_id.clear();
    }
    if (skipping_group) {
      report_skip(lineno, "image_id '" + id + "' reappears out of group order");
      continue;
    }
    ImageLabel label;
    label.cls = cls;
    if (kind == "bbox") {
      label.kind = AnnotationKind::bbox;
    } else if (kind == "image_level") {
      label.kind = AnnotationKind::image_level;
    } else {
      report_skip(lineno, "unknown kind '" + kind + "'");
      continue;
    }
    ++result.labels_seen;
    current_labels.push_back(std::move(label));
  }
  finish_group();

  result.bbox_subset = drain_best_first(bbox_heap);
  std::unordered_set<std::string> taken;
  for (const ScoredImage& s : result.bbox_subset) taken.insert(s.id);
  for (ScoredImage& s : drain_best_first(image_heap)) {
    if (result.image_level_subset.size() >= k_image) break;
    if (taken.count(s.id)) continue;
    result.image_level_subset.push_back(std::move(s));
  }
  return result;
}

}  // namespace hierseg
