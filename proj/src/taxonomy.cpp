#include "hierseg/taxonomy.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace hierseg {

namespace {

using json = nlohmann::ordered_json;

std::map<int, LabelNode> parse_label_map(const json& j, const std::string& map_name,
                                         const std::vector<std::string>& root_names,
                                         const std::vector<std::vector<std::string>>& sub_names) {
  if (!j.is_object()) {
    throw Error("taxonomy: label map '" + map_name + "' must be an object");
  }
  // Resolve a node reference: "root", "sub" (if unambiguous) or "root/sub".
  auto resolve = [&](const std::string& ref) -> LabelNode {
    auto slash = ref.find('/');
    if (slash != std::string::npos) {
      const std::string root = ref.substr(0, slash), sub = ref.substr(slash + 1);
      for (int r = 0; r < static_cast<int>(root_names.size()); ++r) {
        if (root_names[r] != root) continue;
        for (int s = 0; s < static_cast<int>(sub_names[r].size()); ++s) {
          if (sub_names[r][s] == sub) return {r, s};
        }
        throw Error("taxonomy: unknown subclass '" + sub + "' of root '" + root + "'");
      }
      throw Error("taxonomy: unknown root class '" + root + "'");
    }
    LabelNode found{-1, -1};
    int hits = 0;
    for (int r = 0; r < static_cast<int>(root_names.size()); ++r) {
      if (root_names[r] == ref) {
        found = {r, -1};
        ++hits;
      }
      for (int s = 0; s < static_cast<int>(sub_names[r].size()); ++s) {
        if (sub_names[r][s] == ref) {
          found = {r, s};
          ++hits;
        }
      }
    }
    if (hits == 0) throw Error("taxonomy: label map references unknown class '" + ref + "'");
    if (hits > 1) {
      throw Error("taxonomy: class name '" + ref +
                  "' is ambiguous across classifiers; use the root/sub form");
    }
    return found;
  };

  std::map<int, LabelNode> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    int id = 0;
    try {
      std::size_t pos = 0;
      id = std::stoi(it.key(), &pos);
      if (pos != it.key().size()) throw std::invalid_argument(it.key());
    } catch (const std::exception&) {
      throw Error("taxonomy: label map key '" + it.key() + "' is not an integer id");
    }
    if (!it.value().is_string()) {
      throw Error("taxonomy: label map value for id " + std::to_string(id) +
                  " must be a class name string");
    }
    if (out.count(id)) {
      throw Error("taxonomy: duplicate label id " + std::to_string(id) + " in map '" +
                  map_name + "'");
    }
    out.emplace(id, resolve(it.value().get<std::string>()));
  }
  return out;
}

}  // namespace

Taxonomy Taxonomy::load(const std::string& config_text) {
  json j;
  try {
    j = json::parse(config_text);
  } catch (const json::exception& e) {
    throw Error(std::string("taxonomy: config is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("roots") || !j["roots"].is_array()) {
    throw Error("taxonomy: config must be an object with a 'roots' array");
  }

  Taxonomy tax;
  std::set<std::string> root_seen;
  for (const auto& entry : j["roots"]) {
    std::string name;
    std::vector<std::string> subs;
    if (entry.is_string()) {
      name = entry.get<std::string>();
    } else if (entry.is_object()) {
      if (!entry.contains("name") || !entry["name"].is_string()) {
        throw Error("taxonomy: each root entry needs a string 'name'");
      }
      name = entry["name"].get<std::string>();
      if (entry.contains("subclasses")) {
        if (!entry["subclasses"].is_array()) {
          throw Error("taxonomy: 'subclasses' of root '" + name + "' must be an array");
        }
        std::set<std::string> sub_seen;
        for (const auto& s : entry["subclasses"]) {
          if (!s.is_string()) {
            // A nested object here would mean a third hierarchy level.
            throw Error("taxonomy: subclasses of '" + name +
                        "' must be plain names; nested classifiers are not supported");
          }
          const std::string sub = s.get<std::string>();
          if (!sub_seen.insert(sub).second) {
            throw Error("taxonomy: duplicate subclass name '" + sub + "' under root '" +
                        name + "'");
          }
          subs.push_back(sub);
        }
      }
    } else {
      throw Error("taxonomy: root entries must be strings or objects");
    }
    if (!root_seen.insert(name).second) {
      throw Error("taxonomy: duplicate root class name '" + name + "'");
    }
    tax.root_names_.push_back(name);
    tax.sub_names_.push_back(std::move(subs));
  }
  if (tax.root_names_.empty()) throw Error("taxonomy: at least one root class required");

  tax.root_to_sub_.assign(tax.root_names_.size(), -1);
  for (int r = 0; r < tax.num_roots(); ++r) {
    if (!tax.sub_names_[r].empty()) {
      tax.root_to_sub_[r] = static_cast<int>(tax.sub_owner_roots_.size());
      tax.sub_owner_roots_.push_back(r);
    }
  }

  // Leaf enumeration.
  tax.leaf_index_.resize(tax.num_roots());
  for (int r = 0; r < tax.num_roots(); ++r) {
    tax.leaf_index_[r].assign(tax.sub_names_[r].size() + 1, -1);
    if (tax.sub_names_[r].empty()) {
      tax.leaf_index_[r][0] = static_cast<int>(tax.leaves_.size());
      tax.leaves_.push_back({r, -1});
    } else {
      for (int s = 0; s < static_cast<int>(tax.sub_names_[r].size()); ++s) {
        tax.leaf_index_[r][s + 1] = static_cast<int>(tax.leaves_.size());
        tax.leaves_.push_back({r, s});
      }
    }
  }

  if (j.contains("labels")) {
    tax.labels_ = parse_label_map(j["labels"], "labels", tax.root_names_, tax.sub_names_);
  }
  if (j.contains("label_maps")) {
    if (!j["label_maps"].is_object()) throw Error("taxonomy: 'label_maps' must be an object");
    for (auto it = j["label_maps"].begin(); it != j["label_maps"].end(); ++it) {
      tax.extra_maps_[it.key()] =
          parse_label_map(it.value(), it.key(), tax.root_names_, tax.sub_names_);
    }
  }
  return tax;
}

Taxonomy Taxonomy::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("taxonomy: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return load(buf.str());
}

std::string Taxonomy::serialize() const {
  json j;
  j["roots"] = json::array();
  for (int r = 0; r < num_roots(); ++r) {
    json entry;
    entry["name"] = root_names_[r];
    if (!sub_names_[r].empty()) entry["subclasses"] = sub_names_[r];
    j["roots"].push_back(entry);
  }
  auto dump_map = [&](const std::map<int, LabelNode>& m) {
    json out = json::object();
    for (const auto& [id, node] : m) {
      std::string ref = node.is_subclass()
                            ? root_names_[node.root_index] + "/" +
                                  sub_names_[node.root_index][node.sub_index]
                            : root_names_[node.root_index];
      out[std::to_string(id)] = ref;
    }
    return out;
  };
  if (!labels_.empty()) j["labels"] = dump_map(labels_);
  if (!extra_maps_.empty()) {
    j["label_maps"] = json::object();
    for (const auto& [name, m] : extra_maps_) j["label_maps"][name] = dump_map(m);
  }
  return j.dump(2) + "\n";
}

const std::string& Taxonomy::root_name(int root) const {
  if (root < 0 || root >= num_roots()) {
    throw Error("taxonomy: root index " + std::to_string(root) + " out of range");
  }
  return root_names_[root];
}

int Taxonomy::root_index(const std::string& name) const {
  for (int r = 0; r < num_roots(); ++r) {
    if (root_names_[r] == name) return r;
  }
  return -1;
}

int Taxonomy::sub_owner_root(int ordinal) const {
  if (ordinal < 0 || ordinal >= num_subclassifiers()) {
    throw Error("taxonomy: subclassifier ordinal " + std::to_string(ordinal) + " out of range");
  }
  return sub_owner_roots_[ordinal];
}

int Taxonomy::sub_ordinal_of_root(int root) const {
  if (root < 0 || root >= num_roots()) {
    throw Error("taxonomy: root index " + std::to_string(root) + " out of range");
  }
  return root_to_sub_[root];
}

int Taxonomy::sub_class_count(int ordinal) const {
  return static_cast<int>(sub_names_[sub_owner_root(ordinal)].size());
}

const std::string& Taxonomy::sub_class_name(int ordinal, int sub_index) const {
  const auto& names = sub_names_[sub_owner_root(ordinal)];
  if (sub_index < 0 || sub_index >= static_cast<int>(names.size())) {
    throw Error("taxonomy: subclass index " + std::to_string(sub_index) + " out of range");
  }
  return names[sub_index];
}

bool Taxonomy::has_label(int id) const { return labels_.count(id) != 0; }

LabelNode Taxonomy::node_of_label(int id) const {
  auto it = labels_.find(id);
  if (it == labels_.end()) {
    throw Error("taxonomy: dataset label id " + std::to_string(id) + " is not mapped");
  }
  return it->second;
}

LabelNode Taxonomy::node_of_label(int id, const std::string& map_name) const {
  auto mit = extra_maps_.find(map_name);
  if (mit == extra_maps_.end()) {
    throw Error("taxonomy: no label map named '" + map_name + "'");
  }
  auto it = mit->second.find(id);
  if (it == mit->second.end()) {
    throw Error("taxonomy: label id " + std::to_string(id) + " is not mapped in '" +
                map_name + "'");
  }
  return it->second;
}

std::vector<std::string> Taxonomy::label_map_names() const {
  std::vector<std::string> names;
  for (const auto& [name, map] : extra_maps_) names.push_back(name);
  return names;
}

int Taxonomy::project_to_root(const LabelNode& node) const {
  if (node.root_index < 0 || node.root_index >= num_roots()) {
    throw Error("taxonomy: node root index " + std::to_string(node.root_index) +
                " out of range");
  }
  if (node.is_subclass() &&
      node.sub_index >= static_cast<int>(sub_names_[node.root_index].size())) {
    throw Error("taxonomy: node subclass index " + std::to_string(node.sub_index) +
                " out of range for root '" + root_names_[node.root_index] + "'");
  }
  return node.root_index;
}

int Taxonomy::project_label_to_root(int id) const { return project_to_root(node_of_label(id)); }

std::pair<ClassifierId, int> Taxonomy::weak_label_target(int id) const {
  const LabelNode node = node_of_label(id);
  if (!node.is_subclass()) {
    throw Error("taxonomy: weak label id " + std::to_string(id) + " maps to root class '" +
                root_names_[node.root_index] + "'; weak labels must land in a subclassifier");
  }
  return {ClassifierId::sub(node.root_index), node.sub_index};
}

const LabelNode& Taxonomy::node_of_leaf(int leaf) const {
  if (leaf < 0 || leaf >= leaf_count()) {
    throw Error("taxonomy: leaf index " + std::to_string(leaf) + " out of range");
  }
  return leaves_[leaf];
}

int Taxonomy::leaf_of_node(const LabelNode& node) const {
  project_to_root(node);  // validates
  const int leaf = leaf_index_[node.root_index][node.sub_index + 1];
  if (leaf < 0) {
    throw Error("taxonomy: root class '" + root_names_[node.root_index] +
                "' owns a subclassifier and is not itself a leaf");
  }
  return leaf;
}

int Taxonomy::leaf_of_label(int id) const { return leaf_of_node(node_of_label(id)); }

std::string Taxonomy::leaf_name(int leaf) const {
  const LabelNode& node = node_of_leaf(leaf);
  return node.is_subclass() ? sub_names_[node.root_index][node.sub_index]
                            : root_names_[node.root_index];
}

bool Taxonomy::operator==(const Taxonomy& other) const {
  return root_names_ == other.root_names_ && sub_names_ == other.sub_names_ &&
         labels_ == other.labels_ && extra_maps_ == other.extra_maps_;
}

}  // namespace hierseg
