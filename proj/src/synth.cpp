#include "hierseg/synth.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"

#include "hierseg/datapipe.hpp"
#include "hierseg/rng.hpp"

namespace hierseg {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

const char* const kSynthTaxonomyJson = R"({
  "roots": [
    {"name": "background"},
    {"name": "road"},
    {"name": "vehicle", "subclasses": ["car", "bus", "truck"]},
    {"name": "human", "subclasses": ["person", "rider"]}
  ],
  "labels": {
    "0": "background",
    "1": "road",
    "2": "vehicle/car",
    "3": "vehicle/bus",
    "4": "vehicle/truck",
    "5": "human/person",
    "6": "human/rider"
  }
}
)";

const std::vector<std::string> kSynthClassNames = {"background", "road",   "car",  "bus",
                                                   "truck",      "person", "rider"};

namespace {

constexpr int kBackground = 0, kRoad = 1, kCar = 2, kBus = 3, kTruck = 4, kPerson = 5,
              kRider = 6;

struct Color {
  double r, g, b;
};

std::uint8_t clamp_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

void put_pixel(RgbImage& img, SparseLabelMap& mask, std::vector<int>& ids, std::size_t y,
               std::size_t x, const Color& c, int label, int instance) {
  std::uint8_t* px = img.at(y, x);
  px[0] = clamp_byte(c.r);
  px[1] = clamp_byte(c.g);
  px[2] = clamp_byte(c.b);
  mask.at(y, x) = label;
  ids[y * mask.w + x] = instance;
}

Color jitter(Rng& rng, const Color& base, double amp) {
  return {base.r + rng.uniform(-amp, amp), base.g + rng.uniform(-amp, amp),
          base.b + rng.uniform(-amp, amp)};
}

void draw_vehicle(Rng& rng, RgbImage& img, SparseLabelMap& mask, std::vector<int>& ids,
                  int label, int instance, std::size_t road_top) {
  const std::size_t h = img.h, w = img.w;
  const std::size_t bw = std::min<std::size_t>(w - 2, 12 + rng.uniform_int(17));
  const std::size_t bh = std::min<std::size_t>(h - 2, 7 + rng.uniform_int(10));
  const std::size_t x0 = rng.uniform_int(w - bw);
  const std::size_t y_lo = road_top > bh / 2 ? road_top - bh / 2 : 0;
  const std::size_t y_hi = h - bh;
  const std::size_t y0 = y_lo >= y_hi ? y_hi : y_lo + rng.uniform_int(y_hi - y_lo + 1);

  Color base = label == kCar    ? Color{205, 60, 55}
               : label == kBus  ? Color{60, 175, 70}
                                : Color{65, 90, 205};
  const Color body = jitter(rng, base, 90.0);
  const Color window{185, 205, 228};
  const Color wheel{30, 30, 34};
  const Color highlight{235, 235, 240};

  for (std::size_t y = y0; y < y0 + bh; ++y) {
    for (std::size_t x = x0; x < x0 + bw; ++x) {
      Color c = body;
      if (y == y0) {
        c = highlight;
      } else if (y < y0 + 1 + bh / 3 && x > x0 + bw / 5 && x < x0 + bw - bw / 5) {
        c = window;
      }
      put_pixel(img, mask, ids, y, x, c, label, instance);
    }
  }
  // wheels fill the bottom body rows, inset from the corners
  const std::size_t wr = std::max<std::size_t>(1, bh / 4);
  for (std::size_t y = y0 + bh - wr; y < std::min(h, y0 + bh); ++y) {
    for (std::size_t dx = 0; dx < wr * 2 && x0 + bw / 6 + dx < w; ++dx) {
      put_pixel(img, mask, ids, y, x0 + bw / 6 + dx, wheel, label, instance);
      const std::size_t xr = x0 + bw - bw / 6 - wr * 2 + dx;
      if (xr < w) put_pixel(img, mask, ids, y, xr, wheel, label, instance);
    }
  }
}

void draw_human(Rng& rng, RgbImage& img, SparseLabelMap& mask, std::vector<int>& ids,
                int label, int instance, std::size_t road_top) {
  const std::size_t h = img.h, w = img.w;
  const std::size_t hh = std::min<std::size_t>(h - 2, 12 + rng.uniform_int(13));
  const std::size_t hw = std::max<std::size_t>(4, hh / 3 + rng.uniform_int(3));
  const std::size_t x0 = rng.uniform_int(w - hw);
  const std::size_t y_lo = road_top > hh ? road_top - hh : 0;
  const std::size_t y_hi = h - hh;
  const std::size_t y0 = y_lo >= y_hi ? y_hi : y_lo + rng.uniform_int(y_hi - y_lo + 1);

  Color base = label == kPerson ? Color{230, 195, 60} : Color{45, 200, 205};
  const Color body = jitter(rng, base, 90.0);
  const Color head{242, 214, 185};

  const double head_r = std::max(1.5, hh / 5.0);
  const double cx = x0 + hw / 2.0;
  const double head_cy = y0 + head_r;
  // head circle
  for (std::size_t y = y0; y < y0 + hh && y < h; ++y) {
    for (std::size_t x = x0; x < x0 + hw && x < w; ++x) {
      const double dy = (y + 0.5) - head_cy, dx = (x + 0.5) - cx;
      if (dy * dy + dx * dx <= head_r * head_r) {
        put_pixel(img, mask, ids, y, x, head, label, instance);
      }
    }
  }
  // body ellipse below the head
  const double body_ry = (hh - 2.0 * head_r) / 2.0;
  const double body_cy = y0 + 2.0 * head_r + body_ry;
  const double body_rx = hw / 2.0;
  for (std::size_t y = y0; y < y0 + hh && y < h; ++y) {
    for (std::size_t x = x0; x < x0 + hw && x < w; ++x) {
      const double dy = ((y + 0.5) - body_cy) / body_ry;
      const double dx = ((x + 0.5) - cx) / body_rx;
      if (dy * dy + dx * dx <= 1.0) {
        put_pixel(img, mask, ids, y, x, body, label, instance);
      }
    }
  }
}

}  // namespace

SynthScene synth_scene(std::uint64_t seed, std::size_t index, std::size_t h, std::size_t w,
                       double domain_shift) {
  if (h < 16 || w < 16) throw Error("synth: image dims must be at least 16x16");
  Rng rng(seed_stream(seed, index));

  SynthScene scene;
  scene.image = RgbImage(h, w);
  scene.mask = SparseLabelMap(h, w, kBackground);
  std::vector<int> ids(h * w, -1);

  const Color sky_base{72 + 40 * domain_shift, 96 - 25 * domain_shift,
                       134 + 20 * domain_shift};
  const Color road_base{92 + 25 * domain_shift, 90 + 15 * domain_shift,
                        96 - 10 * domain_shift};
  const double noise_amp = 6.0 * (1.0 + domain_shift);
  const std::size_t road_top = static_cast<std::size_t>(h * rng.uniform(0.50, 0.65));

  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      Color c;
      int label;
      if (y < road_top) {
        const double t = static_cast<double>(y) / h;
        c = {sky_base.r + 35 * t, sky_base.g + 30 * t, sky_base.b + 20 * t};
        label = kBackground;
      } else {
        c = road_base;
        if ((y - road_top) % 9 < 2 && (x + y) % 17 < 8) {
          c = {c.r + 26, c.g + 26, c.b + 22};  // lane stripe texture
        }
        label = kRoad;
      }
      c.r += rng.uniform(-noise_amp, noise_amp);
      c.g += rng.uniform(-noise_amp, noise_amp);
      c.b += rng.uniform(-noise_amp, noise_amp);
      put_pixel(scene.image, scene.mask, ids, y, x, c, label, -1);
    }
  }

  const std::size_t n_obj = 2 + rng.uniform_int(4);
  std::vector<int> labels;
  for (std::size_t i = 0; i < n_obj; ++i) {
    const bool vehicle = rng.uniform() < 0.55;
    int label;
    if (vehicle) {
      label = kCar + static_cast<int>(rng.uniform_int(3));
      draw_vehicle(rng, scene.image, scene.mask, ids, label, static_cast<int>(i), road_top);
    } else {
      label = kPerson + static_cast<int>(rng.uniform_int(2));
      draw_human(rng, scene.image, scene.mask, ids, label, static_cast<int>(i), road_top);
    }
    labels.push_back(label);
  }

  // Visible extents per instance after z-order overdraw.
  std::vector<Rect> boxes(n_obj, Rect{static_cast<int>(w), static_cast<int>(h), 0, 0});
  std::vector<std::size_t> counts(n_obj, 0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const int id = ids[y * w + x];
      if (id < 0) continue;
      Rect& r = boxes[id];
      r.x_min = std::min(r.x_min, static_cast<int>(x));
      r.y_min = std::min(r.y_min, static_cast<int>(y));
      r.x_max = std::max(r.x_max, static_cast<int>(x) + 1);
      r.y_max = std::max(r.y_max, static_cast<int>(y) + 1);
      ++counts[id];
    }
  }
  std::set<int> present;
  for (std::size_t i = 0; i < n_obj; ++i) {
    if (counts[i] == 0) continue;  // fully occluded
    scene.instances.push_back({labels[i], boxes[i], counts[i]});
    present.insert(labels[i]);
  }
  scene.present_object_classes.assign(present.begin(), present.end());
  return scene;
}

void SynthConfig::validate() const {
  if (count < 1) throw Error("synth: count must be >= 1");
  if (height < 16 || width < 16) throw Error("synth: base dims must be at least 16x16");
}

void synth_generate(const std::string& out_dir, const SynthConfig& cfg) {
  cfg.validate();
  fs::create_directories(fs::path(out_dir) / "images");
  const bool per_pixel = cfg.mode == SupervisionKind::per_pixel;
  if (per_pixel) fs::create_directories(fs::path(out_dir) / "masks");

  std::ofstream jsonl;
  if (!per_pixel) {
    jsonl.open(fs::path(out_dir) / "annotations.jsonl", std::ios::trunc);
    if (!jsonl) throw Error("synth: cannot write annotations.jsonl in '" + out_dir + "'");
  }

  Rng size_rng(seed_stream(cfg.seed, 0xA11CE));
  for (int i = 0; i < cfg.count; ++i) {
    std::size_t h = cfg.height, w = cfg.width;
    if (!per_pixel && cfg.vary_size) {
      h = static_cast<std::size_t>(cfg.height * size_rng.uniform(0.75, 1.25));
      w = static_cast<std::size_t>(cfg.width * size_rng.uniform(0.75, 1.5));
      h = std::max<std::size_t>(16, h);
      w = std::max<std::size_t>(16, w);
    }
    const SynthScene scene = synth_scene(cfg.seed, static_cast<std::size_t>(i), h, w,
                                         per_pixel ? 0.0 : cfg.domain_shift);
    char name[32];
    std::snprintf(name, sizeof(name), "img_%05d", i);
    write_ppm((fs::path(out_dir) / "images" / (std::string(name) + ".ppm")).string(),
              scene.image);
    if (per_pixel) {
      write_pgm((fs::path(out_dir) / "masks" / (std::string(name) + ".pgm")).string(),
                scene.mask);
    } else {
      json rec;
      rec["image_id"] = name;
      rec["width"] = w;
      rec["height"] = h;
      rec["annotations"] = json::array();
      if (cfg.mode == SupervisionKind::bbox) {
        for (const SceneInstance& inst : scene.instances) {
          rec["annotations"].push_back(
              {{"kind", "bbox"},
               {"class", inst.leaf_label},
               {"rect", {inst.visible_box.x_min, inst.visible_box.y_min,
                         inst.visible_box.x_max, inst.visible_box.y_max}}});
        }
      } else {
        for (int cls : scene.present_object_classes) {
          rec["annotations"].push_back({{"kind", "image_level"}, {"class", cls}});
        }
      }
      jsonl << rec.dump() << "\n";
    }
  }

  json manifest;
  manifest["mode"] = supervision_kind_name(cfg.mode);
  manifest["count"] = cfg.count;
  manifest["seed"] = cfg.seed;
  manifest["base_height"] = cfg.height;
  manifest["base_width"] = cfg.width;
  manifest["vary_size"] = cfg.vary_size && !per_pixel;
  manifest["domain_shift"] = per_pixel ? 0.0 : cfg.domain_shift;
  manifest["classes"] = kSynthClassNames;
  std::ofstream mo(fs::path(out_dir) / "manifest.json", std::ios::trunc);
  mo << manifest.dump(2) << "\n";
  if (!mo) throw Error("synth: cannot write manifest.json in '" + out_dir + "'");

  std::ofstream to(fs::path(out_dir) / "taxonomy.json", std::ios::trunc);
  to << kSynthTaxonomyJson;
  if (!to) throw Error("synth: cannot write taxonomy.json in '" + out_dir + "'");
}

}  // namespace hierseg
