#include "hierseg/datapipe.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "hierseg/image_io.hpp"
#include "hierseg/pseudo_gt.hpp"

namespace hierseg {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::vector<AnnotationRecord> read_annotations_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("datapipe: cannot open '" + path + "'");
  std::vector<AnnotationRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error("datapipe: bad JSON on line " + std::to_string(lineno) + " of '" + path +
                  "': " + e.what());
    }
    AnnotationRecord rec;
    rec.image_id = j.at("image_id").get<std::string>();
    rec.w = j.at("width").get<std::size_t>();
    rec.h = j.at("height").get<std::size_t>();
    for (const auto& a : j.at("annotations")) {
      WeakAnnotation ann;
      const std::string kind = a.at("kind").get<std::string>();
      ann.label_id = a.at("class").get<int>();
      if (kind == "bbox") {
        ann.kind = AnnotationKind::bbox;
        const auto& r = a.at("rect");
        ann.rect = {r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>(),
                    r.at(3).get<int>()};
        if (ann.rect.empty() || ann.rect.x_min < 0 || ann.rect.y_min < 0 ||
            ann.rect.x_max > static_cast<int>(rec.w) ||
            ann.rect.y_max > static_cast<int>(rec.h)) {
          throw Error("datapipe: invalid rect on line " + std::to_string(lineno) + " of '" +
                      path + "'");
        }
      } else if (kind == "image_level") {
        ann.kind = AnnotationKind::image_level;
      } else {
        throw Error("datapipe: unknown annotation kind '" + kind + "' on line " +
                    std::to_string(lineno) + " of '" + path + "'");
      }
      rec.annotations.push_back(ann);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------

TensorBuffer resize_bilinear(const TensorBuffer& image, std::size_t out_h, std::size_t out_w) {
  if (image.rank() != 3) {
    throw Error("resize: image must be [C,H,W], got " + shape_str(image.shape));
  }
  const std::size_t C = image.shape[0], H = image.shape[1], W = image.shape[2];
  if (H == out_h && W == out_w) return image;
  TensorBuffer out = TensorBuffer::zeros({C, out_h, out_w});
  const double sy = static_cast<double>(H) / out_h, sx = static_cast<double>(W) / out_w;
  for (std::size_t c = 0; c < C; ++c) {
    const double* ip = &image.data[c * H * W];
    double* op = &out.data[c * out_h * out_w];
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const double fy = (oy + 0.5) * sy - 0.5;
      const long y0 = static_cast<long>(std::floor(fy));
      const double ty = fy - y0;
      const std::size_t ylo = static_cast<std::size_t>(std::clamp<long>(y0, 0, H - 1));
      const std::size_t yhi = static_cast<std::size_t>(std::clamp<long>(y0 + 1, 0, H - 1));
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const double fx = (ox + 0.5) * sx - 0.5;
        const long x0 = static_cast<long>(std::floor(fx));
        const double tx = fx - x0;
        const std::size_t xlo = static_cast<std::size_t>(std::clamp<long>(x0, 0, W - 1));
        const std::size_t xhi = static_cast<std::size_t>(std::clamp<long>(x0 + 1, 0, W - 1));
        const double top = (1 - tx) * ip[ylo * W + xlo] + tx * ip[ylo * W + xhi];
        const double bot = (1 - tx) * ip[yhi * W + xlo] + tx * ip[yhi * W + xhi];
        op[oy * out_w + ox] = (1 - ty) * top + ty * bot;
      }
    }
  }
  return out;
}

SparseLabelMap resize_nearest(const SparseLabelMap& mask, std::size_t out_h, std::size_t out_w) {
  if (mask.h == out_h && mask.w == out_w) return mask;
  SparseLabelMap out(out_h, out_w);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const std::size_t iy = std::min(mask.h - 1, oy * mask.h / out_h);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const std::size_t ix = std::min(mask.w - 1, ox * mask.w / out_w);
      out.at(oy, ox) = mask.at(iy, ix);
    }
  }
  return out;
}

FitCropResult fit_and_crop(const TensorBuffer& image,
                           const std::vector<WeakAnnotation>& annotations,
                           const SparseLabelMap* mask, std::size_t target_h,
                           std::size_t target_w, Rng& rng) {
  if (image.rank() != 3) {
    throw Error("fit_and_crop: image must be [C,H,W], got " + shape_str(image.shape));
  }
  const std::size_t H = image.shape[1], W = image.shape[2];
  const double scale = std::max(static_cast<double>(target_h) / H,
                                static_cast<double>(target_w) / W);
  const std::size_t new_h = std::max<std::size_t>(
      target_h, static_cast<std::size_t>(std::llround(H * scale)));
  const std::size_t new_w = std::max<std::size_t>(
      target_w, static_cast<std::size_t>(std::llround(W * scale)));

  FitCropResult res;
  res.scale_y = static_cast<double>(new_h) / H;
  res.scale_x = static_cast<double>(new_w) / W;
  const TensorBuffer scaled = resize_bilinear(image, new_h, new_w);
  res.off_y = rng.uniform_int(new_h - target_h + 1);
  res.off_x = rng.uniform_int(new_w - target_w + 1);

  const std::size_t C = image.shape[0];
  res.image = TensorBuffer::zeros({C, target_h, target_w});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < target_h; ++y) {
      const double* src = &scaled.data[(c * new_h + y + res.off_y) * new_w + res.off_x];
      double* dst = &res.image.data[(c * target_h + y) * target_w];
      std::copy(src, src + target_w, dst);
    }
  }

  for (const WeakAnnotation& ann : annotations) {
    WeakAnnotation moved = ann;
    if (ann.kind == AnnotationKind::bbox) {
      const int x0 =
          std::clamp<int>(static_cast<int>(std::lround(ann.rect.x_min * res.scale_x)) -
                              static_cast<int>(res.off_x),
                          0, static_cast<int>(target_w));
      const int x1 =
          std::clamp<int>(static_cast<int>(std::lround(ann.rect.x_max * res.scale_x)) -
                              static_cast<int>(res.off_x),
                          0, static_cast<int>(target_w));
      const int y0 =
          std::clamp<int>(static_cast<int>(std::lround(ann.rect.y_min * res.scale_y)) -
                              static_cast<int>(res.off_y),
                          0, static_cast<int>(target_h));
      const int y1 =
          std::clamp<int>(static_cast<int>(std::lround(ann.rect.y_max * res.scale_y)) -
                              static_cast<int>(res.off_y),
                          0, static_cast<int>(target_h));
      moved.rect = {x0, y0, x1, y1};
      if (moved.rect.empty()) continue;
    }
    res.annotations.push_back(moved);
  }

  if (mask) {
    const SparseLabelMap scaled_mask = resize_nearest(*mask, new_h, new_w);
    res.mask = SparseLabelMap(target_h, target_w);
    for (std::size_t y = 0; y < target_h; ++y) {
      for (std::size_t x = 0; x < target_w; ++x) {
        res.mask.at(y, x) = scaled_mask.at(y + res.off_y, x + res.off_x);
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------

Dataset Dataset::open(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw Error("dataset: missing manifest.json in '" + dir + "'");
  json manifest;
  try {
    manifest = json::parse(mf);
  } catch (const json::exception& e) {
    throw Error("dataset: bad manifest in '" + dir + "': " + e.what());
  }

  Dataset ds;
  ds.dir_ = dir;
  ds.mode_ = supervision_kind_from_name(manifest.at("mode").get<std::string>());
  const int count = manifest.at("count").get<int>();
  if (ds.mode_ == SupervisionKind::per_pixel) {
    for (int i = 0; i < count; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "img_%05d", i);
      ds.ids_.emplace_back(name);
    }
  } else {
    for (AnnotationRecord& rec :
         read_annotations_jsonl((fs::path(dir) / "annotations.jsonl").string())) {
      ds.ids_.push_back(rec.image_id);
      ds.annotations_.push_back(std::move(rec.annotations));
    }
    if (static_cast<int>(ds.ids_.size()) != count) {
      throw Error("dataset: manifest count " + std::to_string(count) + " != " +
                  std::to_string(ds.ids_.size()) + " annotation records in '" + dir + "'");
    }
  }
  if (ds.ids_.empty()) throw Error("dataset: '" + dir + "' is empty");
  return ds;
}

const SampleRecord& Dataset::sample(std::size_t index) const {
  if (index >= ids_.size()) {
    throw Error("dataset: index " + std::to_string(index) + " out of range");
  }
  auto it = cache_.find(index);
  if (it != cache_.end()) return it->second;

  SampleRecord rec;
  rec.image_id = ids_[index];
  rec.kind = mode_ == SupervisionKind::per_pixel ? SupervisionKind::per_pixel : mode_;
  rec.image = image_to_tensor(
      read_ppm((fs::path(dir_) / "images" / (ids_[index] + ".ppm")).string()));
  if (mode_ == SupervisionKind::per_pixel) {
    rec.sparse_gt = read_pgm((fs::path(dir_) / "masks" / (ids_[index] + ".pgm")).string());
  } else {
    rec.annotations = annotations_[index];
  }
  return cache_.emplace(index, std::move(rec)).first->second;
}

// ---------------------------------------------------------------------------

void BatchSpec::validate() const {
  if (per_pixel < 0 || bbox < 0 || image_level < 0) {
    throw Error("batch spec: counts must be >= 0");
  }
  if (per_pixel + bbox + image_level == 0) {
    throw Error("batch spec: at least one supervision kind must be requested");
  }
  if (crop_h < 1 || crop_w < 1) throw Error("batch spec: crop size must be positive");
}

int BatchSpec::count(SupervisionKind kind) const {
  switch (kind) {
    case SupervisionKind::per_pixel: return per_pixel;
    case SupervisionKind::bbox: return bbox;
    case SupervisionKind::image_level: return image_level;
  }
  return 0;
}

PreparedSample prepare_sample(const SampleRecord& rec, const Taxonomy& taxonomy,
                              std::size_t crop_h, std::size_t crop_w, Rng& rng) {
  PreparedSample out;
  out.image_id = rec.image_id;
  out.kind = rec.kind;

  if (rec.kind == SupervisionKind::per_pixel) {
    const SparseLabelMap* mask = &rec.sparse_gt;
    if (rec.image.shape[1] == crop_h && rec.image.shape[2] == crop_w) {
      out.image = rec.image;
      out.leaf_gt = *mask;
    } else {
      FitCropResult fc = fit_and_crop(rec.image, {}, mask, crop_h, crop_w, rng);
      out.image = std::move(fc.image);
      out.leaf_gt = std::move(fc.mask);
    }
    // Dataset ids are leaf ids for the synthetic world; remap anyway so any
    // taxonomy-consistent labeling works.
    SparseLabelMap dataset_gt = out.leaf_gt;
    out.leaf_gt = SparseLabelMap(dataset_gt.h, dataset_gt.w);
    for (std::size_t i = 0; i < dataset_gt.labels.size(); ++i) {
      const int id = dataset_gt.labels[i];
      out.leaf_gt.labels[i] = id == kVoidLabel ? kVoidLabel : taxonomy.leaf_of_label(id);
    }
    out.root_gt = sparse_root_gt(dataset_gt, taxonomy);
    for (int sc = 0; sc < taxonomy.num_subclassifiers(); ++sc) {
      out.sub_gt.push_back(densify_sparse(
          dataset_gt, ClassifierId::sub(taxonomy.sub_owner_root(sc)), taxonomy));
    }
  } else {
    FitCropResult fc = fit_and_crop(rec.image, rec.annotations, nullptr, crop_h, crop_w, rng);
    out.image = std::move(fc.image);
    for (int sc = 0; sc < taxonomy.num_subclassifiers(); ++sc) {
      out.sub_gt.push_back(vote_dense_gt(fc.annotations, crop_h, crop_w,
                                         ClassifierId::sub(taxonomy.sub_owner_root(sc)),
                                         taxonomy));
    }
  }
  return out;
}

BatchSampler::BatchSampler(const Dataset* per_pixel, const Dataset* bbox,
                           const Dataset* image_level, BatchSpec spec,
                           const Taxonomy* taxonomy, std::uint64_t seed)
    : spec_(spec), taxonomy_(taxonomy), crop_rng_(seed_stream(seed, 3)) {
  spec_.validate();
  auto setup = [&](Cursor& cur, const Dataset* ds, SupervisionKind kind, std::uint64_t s) {
    cur.ds = ds;
    cur.rng = Rng(seed_stream(seed, s));
    if (spec_.count(kind) > 0) {
      if (!ds || ds->size() == 0) {
        throw Error(std::string("batch sampler: spec requests ") +
                    supervision_kind_name(kind) + " samples but no dataset is available");
      }
      if (ds->mode() != kind) {
        throw Error(std::string("batch sampler: dataset mode ") +
                    supervision_kind_name(ds->mode()) + " != requested kind " +
                    supervision_kind_name(kind));
      }
      cur.order.resize(ds->size());
      for (std::size_t i = 0; i < ds->size(); ++i) cur.order[i] = i;
      cur.rng.shuffle(cur.order);
    }
  };
  setup(per_pixel_, per_pixel, SupervisionKind::per_pixel, 0);
  setup(bbox_, bbox, SupervisionKind::bbox, 1);
  setup(image_level_, image_level, SupervisionKind::image_level, 2);
}

BatchSampler::Cursor& BatchSampler::cursor(SupervisionKind kind) {
  switch (kind) {
    case SupervisionKind::per_pixel: return per_pixel_;
    case SupervisionKind::bbox: return bbox_;
    case SupervisionKind::image_level: return image_level_;
  }
  throw Error("batch sampler: bad kind");
}

const BatchSampler::Cursor& BatchSampler::cursor(SupervisionKind kind) const {
  return const_cast<BatchSampler*>(this)->cursor(kind);
}

void BatchSampler::draw(SupervisionKind kind, int count, std::vector<PreparedSample>& out) {
  Cursor& cur = cursor(kind);
  for (int i = 0; i < count; ++i) {
    if (cur.pos >= cur.order.size()) {
      cur.pos = 0;
      ++cur.epochs;
      cur.rng.shuffle(cur.order);
    }
    const std::size_t index = cur.order[cur.pos++];
    out.push_back(prepare_sample(cur.ds->sample(index), *taxonomy_, spec_.crop_h,
                                 spec_.crop_w, crop_rng_));
  }
}

std::vector<PreparedSample> BatchSampler::next() {
  std::vector<PreparedSample> batch;
  draw(SupervisionKind::per_pixel, spec_.per_pixel, batch);
  draw(SupervisionKind::bbox, spec_.bbox, batch);
  draw(SupervisionKind::image_level, spec_.image_level, batch);
  return batch;
}

std::size_t BatchSampler::steps_per_epoch() const {
  for (SupervisionKind kind : {SupervisionKind::per_pixel, SupervisionKind::bbox,
                               SupervisionKind::image_level}) {
    const int count = spec_.count(kind);
    if (count > 0) {
      const std::size_t n = cursor(kind).ds->size();
      return (n + count - 1) / count;
    }
  }
  return 0;
}

std::size_t BatchSampler::epochs_completed(SupervisionKind kind) const {
  return cursor(kind).epochs;
}

}  // namespace hierseg
