#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hierseg/tensor.hpp"

namespace hierseg {

/// Position of a dataset label inside the two-level hierarchy.
/// sub_index == -1 means the label sits on the root class itself.
struct LabelNode {
  int root_index = -1;
  int sub_index = -1;

  bool is_subclass() const { return sub_index >= 0; }
  bool operator==(const LabelNode&) const = default;
};

/// Identifies one softmax head: the root classifier or one subclassifier.
struct ClassifierId {
  bool is_root = true;
  int root_class = -1;  // owning root class when !is_root

  static ClassifierId root() { return {true, -1}; }
  static ClassifierId sub(int root_class) { return {false, root_class}; }
  bool operator==(const ClassifierId&) const = default;
};

// Two-level class hierarchy plus the dataset-label-to-node maps. Immutable
// after load; depth is fixed at two and enforced by the config schema.
class Taxonomy {
 public:
  static Taxonomy load(const std::string& config_text);
  static Taxonomy load_file(const std::string& path);
  std::string serialize() const;

  int num_roots() const { return static_cast<int>(root_names_.size()); }
  const std::string& root_name(int root) const;
  int root_index(const std::string& name) const;  // -1 if unknown

  /// Subclassifiers are numbered 0..num_subclassifiers()-1 in root order.
  int num_subclassifiers() const { return static_cast<int>(sub_owner_roots_.size()); }
  int sub_owner_root(int ordinal) const;
  int sub_ordinal_of_root(int root) const;  // -1 when the root has no subclassifier
  int sub_class_count(int ordinal) const;
  const std::string& sub_class_name(int ordinal, int sub_index) const;

  // Dataset label mapping (default map; extra named maps allowed in config).
  bool has_label(int dataset_label_id) const;
  LabelNode node_of_label(int dataset_label_id) const;
  /// Lookup in a named per-dataset map declared under "label_maps".
  LabelNode node_of_label(int dataset_label_id, const std::string& map_name) const;
  std::vector<std::string> label_map_names() const;
  int project_to_root(const LabelNode& node) const;
  int project_label_to_root(int dataset_label_id) const;

  /// Subclassifier + within-subclassifier index receiving this weak class's
  /// votes. Labels mapped to a root class are rejected.
  std::pair<ClassifierId, int> weak_label_target(int dataset_label_id) const;

  // Flat leaf enumeration: roots in order, each subclassifier-owning root
  // replaced by its subclasses.
  int leaf_count() const { return static_cast<int>(leaves_.size()); }
  const LabelNode& node_of_leaf(int leaf) const;
  int leaf_of_node(const LabelNode& node) const;
  int leaf_of_label(int dataset_label_id) const;
  std::string leaf_name(int leaf) const;

  bool operator==(const Taxonomy& other) const;

 private:
  std::vector<std::string> root_names_;
  std::vector<std::vector<std::string>> sub_names_;  // per root; empty = leaf root
  std::vector<int> sub_owner_roots_;                 // ordinal -> root index
  std::vector<int> root_to_sub_;                     // root index -> ordinal or -1
  std::map<int, LabelNode> labels_;                  // default dataset label map
  std::map<std::string, std::map<int, LabelNode>> extra_maps_;
  std::vector<LabelNode> leaves_;
  std::vector<std::vector<int>> leaf_index_;  // [root][sub_index+1] -> leaf or -1
};

}  // namespace hierseg
