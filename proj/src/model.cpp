#include "hierseg/model.hpp"

#include <cmath>

#include "hierseg/rng.hpp"

namespace hierseg {

namespace {

int log2_exact(int v) {
  int bits = 0;
  while ((1 << bits) < v) ++bits;
  return (1 << bits) == v ? bits : -1;
}

TensorBuffer he_init(Rng& rng, std::vector<std::size_t> shape, std::size_t fan_in) {
  TensorBuffer t = TensorBuffer::zeros(std::move(shape));
  const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : t.data) v = rng.normal() * scale;
  return t;
}

}  // namespace

void HierNetConfig::validate() const {
  if (channels.empty()) throw Error("model config: at least one feature stage required");
  for (int c : channels) {
    if (c < 1) throw Error("model config: stage width must be >= 1");
  }
  if (adapt_width < 1) throw Error("model config: adapt_width must be >= 1");
  const int strided = log2_exact(downsample);
  if (downsample < 1 || strided < 0) {
    throw Error("model config: downsample must be a positive power of two, got " +
                std::to_string(downsample));
  }
  if (strided > static_cast<int>(channels.size())) {
    throw Error("model config: downsample " + std::to_string(downsample) + " needs " +
                std::to_string(strided) + " strided stages but only " +
                std::to_string(channels.size()) + " are configured");
  }
}

NodeId TapeBinding::at(const std::string& name) const {
  for (const auto& [n, id] : params) {
    if (n == name) return id;
  }
  throw Error("tape binding: unknown parameter '" + name + "'");
}

HierNet HierNet::build(const HierNetConfig& cfg, const Taxonomy& taxonomy) {
  cfg.validate();
  HierNet net(cfg, taxonomy.num_subclassifiers());

  net.classifier_names_.push_back("root");
  net.head_classes_.push_back(taxonomy.num_roots());
  for (int sc = 0; sc < taxonomy.num_subclassifiers(); ++sc) {
    net.classifier_names_.push_back(taxonomy.root_name(taxonomy.sub_owner_root(sc)));
    net.head_classes_.push_back(taxonomy.sub_class_count(sc));
  }

  const int strided = log2_exact(cfg.downsample);
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    net.stage_strides_.push_back(static_cast<int>(i) < strided ? 2 : 1);
  }

  Rng rng(cfg.seed);
  std::size_t in_c = 3;
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    const std::size_t out_c = static_cast<std::size_t>(cfg.channels[i]);
    const std::string stem = "features." + std::to_string(i);
    net.params_.add(stem + ".weight", he_init(rng, {out_c, in_c, 3, 3}, in_c * 9));
    net.params_.add(stem + ".bias", TensorBuffer::zeros({out_c}));
    in_c = out_c;
  }
  const std::size_t feat_c = in_c;
  const std::size_t aw = static_cast<std::size_t>(cfg.adapt_width);
  for (std::size_t k = 0; k < net.classifier_names_.size(); ++k) {
    const std::string stem = "adapt." + net.classifier_names_[k];
    net.params_.add(stem + ".reduce.weight", he_init(rng, {aw, feat_c, 1, 1}, feat_c));
    net.params_.add(stem + ".reduce.bias", TensorBuffer::zeros({aw}));
    net.params_.add(stem + ".conv.weight", he_init(rng, {aw, aw, 3, 3}, aw * 9));
    net.params_.add(stem + ".conv.bias", TensorBuffer::zeros({aw}));
    const std::size_t n = static_cast<std::size_t>(net.head_classes_[k]);
    net.params_.add("head." + net.classifier_names_[k] + ".weight",
                    he_init(rng, {n, aw, 1, 1}, aw));
    net.params_.add("head." + net.classifier_names_[k] + ".bias", TensorBuffer::zeros({n}));
  }
  return net;
}

HierNet HierNet::from_params(const HierNetConfig& cfg, const Taxonomy& taxonomy,
                             ParamSet params) {
  HierNet net = build(cfg, taxonomy);
  for (const std::string& name : net.params_.names()) {
    if (!params.has(name)) {
      throw Error("model: checkpoint is missing parameter '" + name + "'");
    }
    const TensorBuffer& loaded = params.at(name);
    if (!loaded.same_shape(net.params_.at(name))) {
      throw Error("model: checkpoint shape " + shape_str(loaded.shape) +
                  " != expected " + shape_str(net.params_.at(name).shape) + " for '" +
                  name + "'");
    }
    net.params_.at(name) = loaded;
  }
  return net;
}

TapeBinding HierNet::bind(Tape& tape) const {
  TapeBinding binding;
  for (const std::string& name : params_.names()) {
    const NodeId id = tape.param(params_.at(name));
    binding.params.emplace_back(name, id);
    if (name.ends_with(".weight")) binding.weight_nodes.push_back(id);
  }
  return binding;
}

SegOutput HierNet::forward(Tape& tape, const TapeBinding& binding,
                           const TensorBuffer& image) const {
  if (image.rank() != 3 || image.shape[0] != 3) {
    throw Error("model forward: image must be [3,H,W], got " + shape_str(image.shape));
  }
  const std::size_t h = image.shape[1], w = image.shape[2];
  const std::size_t ds = static_cast<std::size_t>(cfg_.downsample);
  if (h % ds != 0 || w % ds != 0) {
    throw Error("model forward: image " + std::to_string(h) + "x" + std::to_string(w) +
                " not divisible by downsample factor " + std::to_string(ds));
  }

  NodeId x = tape.constant(TensorBuffer({1, 3, h, w}, image.data));
  for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
    const std::string stem = "features." + std::to_string(i);
    x = tape.conv2d(x, binding.at(stem + ".weight"), binding.at(stem + ".bias"),
                    stage_strides_[i]);
    x = tape.relu(x);
  }

  SegOutput out;
  out.h = h;
  out.w = w;
  for (std::size_t k = 0; k < classifier_names_.size(); ++k) {
    const std::string& name = classifier_names_[k];
    NodeId a = tape.conv2d(x, binding.at("adapt." + name + ".reduce.weight"),
                           binding.at("adapt." + name + ".reduce.bias"));
    a = tape.relu(a);
    a = tape.conv2d(a, binding.at("adapt." + name + ".conv.weight"),
                    binding.at("adapt." + name + ".conv.bias"));
    NodeId logits = tape.conv2d(a, binding.at("head." + name + ".weight"),
                                binding.at("head." + name + ".bias"));
    logits = tape.upsample_bilinear(logits, cfg_.downsample);
    const NodeId sm = tape.softmax_channels(logits);
    if (k == 0) {
      out.root = {logits, sm};
    } else {
      out.subs.push_back({logits, sm});
    }
  }
  return out;
}

SegFields HierNet::infer(const TensorBuffer& image) const {
  // Parameters enter as constants: requires_grad stays false everywhere and
  // no backward state is kept beyond this call.
  Tape scratch;
  TapeBinding binding;
  for (const std::string& name : params_.names()) {
    binding.params.emplace_back(name, scratch.constant(params_.at(name)));
  }
  const SegOutput out = forward(scratch, binding, image);
  SegFields fields;
  fields.root = scratch.value(out.root.softmax);
  for (const HeadNodes& hn : out.subs) fields.subs.push_back(scratch.value(hn.softmax));
  return fields;
}

namespace {

// Rank 3 or rank 4 with N=1: channel stride is hw either way.
std::size_t argmax_channel(const TensorBuffer& field, std::size_t channels, std::size_t hw,
                           std::size_t p) {
  std::size_t best = 0;
  double best_v = field.data[p];
  for (std::size_t c = 1; c < channels; ++c) {
    const double v = field.data[c * hw + p];
    if (v > best_v) {
      best_v = v;
      best = c;
    }
  }
  return best;
}

}  // namespace

SparseLabelMap predict(const SegFields& fields, const Taxonomy& taxonomy) {
  const TensorBuffer& root = fields.root;
  std::size_t rc, h, w;
  if (root.rank() == 3) {
    rc = root.shape[0];
    h = root.shape[1];
    w = root.shape[2];
  } else if (root.rank() == 4 && root.shape[0] == 1) {
    rc = root.shape[1];
    h = root.shape[2];
    w = root.shape[3];
  } else {
    throw Error("predict: root field must be [R,H,W] or [1,R,H,W]");
  }
  if (rc != static_cast<std::size_t>(taxonomy.num_roots())) {
    throw Error("predict: root field channels != taxonomy root count");
  }
  if (static_cast<int>(fields.subs.size()) != taxonomy.num_subclassifiers()) {
    throw Error("predict: subclassifier field count != taxonomy");
  }
  const std::size_t hw = h * w;
  SparseLabelMap out(h, w);
  for (std::size_t p = 0; p < hw; ++p) {
    const int r = static_cast<int>(argmax_channel(root, rc, hw, p));
    const int ordinal = taxonomy.sub_ordinal_of_root(r);
    if (ordinal < 0) {
      out.labels[p] = taxonomy.leaf_of_node({r, -1});
    } else {
      const TensorBuffer& sub = fields.subs[ordinal];
      const std::size_t n = sub.rank() == 4 ? sub.shape[1] : sub.shape[0];
      const int s = static_cast<int>(argmax_channel(sub, n, hw, p));
      out.labels[p] = taxonomy.leaf_of_node({r, s});
    }
  }
  return out;
}

SparseLabelMap predict(const Tape& tape, const SegOutput& output, const Taxonomy& taxonomy) {
  SegFields fields;
  fields.root = tape.value(output.root.softmax);
  for (const HeadNodes& hn : output.subs) fields.subs.push_back(tape.value(hn.softmax));
  return predict(fields, taxonomy);
}

}  // namespace hierseg
