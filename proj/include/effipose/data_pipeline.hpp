#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "effipose/model_builder.hpp"

namespace effipose {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Planar RGB image with float samples in [0, 255].
struct Image {
  int h = 0, w = 0;
  std::vector<float> data;  // 3 x h x w

  Image() = default;
  Image(int height, int width, float fill = 0) : h(height), w(width), data(3ull * height * width, fill) {}

  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * h + y) * w + x]; }
  float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * h + y) * w + x]; }
};

// ---------------------------------------------------------------------------
// Binary PPM (P6, maxval 255).

inline Image read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open image " + path);
  auto token = [&]() {
    std::string t;
    char ch;
    while (is.get(ch)) {
      if (ch == '#') {
        std::string rest;
        std::getline(is, rest);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(ch);
    }
    return t;
  };
  if (token() != "P6") throw DataError(path + ": only binary PPM (P6) is supported");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw DataError(path + ": malformed PPM header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw DataError(path + ": unsupported PPM geometry/maxval");
  std::vector<unsigned char> raw(3ull * w * h);
  if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw DataError(path + ": truncated pixel data");
  Image img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = raw[(static_cast<std::size_t>(y) * w + x) * 3 + c];
  return img;
}

inline void write_ppm(const std::string& path, const Image& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write image " + path);
  os << "P6\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> raw(3ull * img.w * img.h);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(std::round(img.at(c, y, x)), 0.0f, 255.0f);
        raw[(static_cast<std::size_t>(y) * img.w + x) * 3 + c] = static_cast<unsigned char>(v);
      }
  os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

// ---------------------------------------------------------------------------
// Annotation CSV: image_path, center_x, center_y, scale, head_x1, head_y1,
// head_x2, head_y2, then x, y, v per keypoint. '#' starts a comment.

struct DatasetRecord {
  std::string image_path;  // resolved against the annotation file's directory
  KeypointAnnotation annotation;
};

enum class Split { train, val };

struct DatasetIndex {
  std::vector<DatasetRecord> records;
  Split split = Split::train;
  std::vector<std::string> rejected;  // "line N: reason"
};

inline constexpr int kAnnotationKeypoints = 16;

inline DatasetRecord parse_annotation_line(const std::string& line, int lineno) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(" \t\r");
    const auto z = item.find_last_not_of(" \t\r");
    f.push_back(a == std::string::npos ? "" : item.substr(a, z - a + 1));
  }
  const std::size_t expected = 8 + 3 * kAnnotationKeypoints;
  if (f.size() != expected)
    throw DataError("annotation line " + std::to_string(lineno) + ": expected " +
                    std::to_string(expected) + " fields, got " + std::to_string(f.size()));
  auto num = [&](std::size_t i) {
    try {
      std::size_t used = 0;
      const double v = std::stod(f[i], &used);
      if (used != f[i].size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw DataError("annotation line " + std::to_string(lineno) + ", field " +
                      std::to_string(i + 1) + ": bad number '" + f[i] + "'");
    }
  };
  DatasetRecord r;
  r.image_path = f[0];
  auto& a = r.annotation;
  a.image_id = f[0];
  a.center_x = num(1);
  a.center_y = num(2);
  a.scale = num(3);
  a.head = {num(4), num(5), num(6), num(7)};
  for (int k = 0; k < kAnnotationKeypoints; ++k) {
    Keypoint kp{num(8 + 3 * k), num(9 + 3 * k), num(10 + 3 * k) > 0};
    a.keypoints.push_back(kp);
  }
  if (!(a.scale > 0))
    throw DataError("annotation line " + std::to_string(lineno) + ": scale must be positive");
  return r;
}

inline std::string format_annotation(const DatasetRecord& r) {
  std::ostringstream os;
  os << std::setprecision(9);
  const auto& a = r.annotation;
  os << r.image_path << "," << a.center_x << "," << a.center_y << "," << a.scale << ","
     << a.head.x1 << "," << a.head.y1 << "," << a.head.x2 << "," << a.head.y2;
  for (const auto& k : a.keypoints) os << "," << k.x << "," << k.y << "," << (k.visible ? 1 : 0);
  return os.str();
}

/// Parses an annotation stream; `base_dir` resolves relative image paths and,
/// when `check_images` is set, records whose image is missing are rejected.
inline DatasetIndex parse_annotations(std::istream& is, const std::filesystem::path& base_dir,
                                      bool check_images) {
  DatasetIndex idx;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    DatasetRecord r = parse_annotation_line(line, lineno);
    std::filesystem::path p(r.image_path);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    r.image_path = p.string();
    if (check_images && !std::filesystem::exists(p)) {
      idx.rejected.push_back("line " + std::to_string(lineno) + ": missing image " + p.string());
      continue;
    }
    idx.records.push_back(std::move(r));
  }
  return idx;
}

inline DatasetIndex load_annotations(const std::string& path, bool check_images = true) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open annotation file " + path);
  return parse_annotations(is, std::filesystem::path(path).parent_path(), check_images);
}

/// Seeded shuffle then split; returns (train, val).
inline std::pair<DatasetIndex, DatasetIndex> split_index(const DatasetIndex& idx, std::size_t val_count,
                                                         std::uint64_t seed) {
  if (val_count > idx.records.size()) throw DataError("validation split larger than dataset");
  std::vector<std::size_t> order(idx.records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  DatasetIndex train, val;
  train.split = Split::train;
  val.split = Split::val;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < val_count ? val : train).records.push_back(idx.records[order[i]]);
  return {train, val};
}

// ---------------------------------------------------------------------------
// Affine geometry. Pixel (i, j) has its center at coordinate (i, j).

struct Affine {
  // [x'; y'] = [a b; c d] [x; y] + [tx; ty]
  double a = 1, b = 0, c = 0, d = 1, tx = 0, ty = 0;

  std::array<double, 2> apply(double x, double y) const {
    return {a * x + b * y + tx, c * x + d * y + ty};
  }
  /// this o other (apply `other` first).
  Affine after(const Affine& o) const {
    return {a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c, c * o.b + d * o.d,
            a * o.tx + b * o.ty + tx, c * o.tx + d * o.ty + ty};
  }
  Affine inverse() const {
    const double det = a * d - b * c;
    if (std::abs(det) < 1e-12) throw DataError("singular affine transform");
    Affine r{d / det, -b / det, -c / det, a / det, 0, 0};
    r.tx = -(r.a * tx + r.b * ty);
    r.ty = -(r.c * tx + r.d * ty);
    return r;
  }
};

struct AugmentationConfig {
  double flip_prob = 0.5;
  double scale_min = 0.75, scale_max = 1.25;
  double rotation_deg = 45.0;  // symmetric range
  std::vector<std::pair<int, int>> flip_pairs = Skeleton::mpii().flip_pairs;
  double crop_margin = 1.25;
  double pixels_per_scale = 200.0;

  static AugmentationConfig none() {
    AugmentationConfig c;
    c.flip_prob = 0;
    c.scale_min = c.scale_max = 1;
    c.rotation_deg = 0;
    return c;
  }
};

struct AugmentParams {
  bool flip = false;
  double scale = 1.0;
  double rotation_deg = 0.0;
};

template <class Rng>
AugmentParams sample_augmentation(const AugmentationConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  AugmentParams p;
  p.flip = u(rng) < cfg.flip_prob;
  p.scale = cfg.scale_min + (cfg.scale_max - cfg.scale_min) * u(rng);
  p.rotation_deg = -cfg.rotation_deg + 2 * cfg.rotation_deg * u(rng);
  return p;
}

/// Flip (x -> W - 1 - x), then scale and rotate about the (flipped) person center.
inline Affine augmentation_transform(const AugmentParams& p, int image_w, double cx, double cy) {
  Affine flip;
  if (p.flip) {
    flip.a = -1;
    flip.tx = image_w - 1;
    cx = image_w - 1 - cx;
  }
  const double th = p.rotation_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(th) * p.scale, sn = std::sin(th) * p.scale;
  Affine sr{cs, -sn, sn, cs, 0, 0};
  sr.tx = cx - (sr.a * cx + sr.b * cy);
  sr.ty = cy - (sr.c * cx + sr.d * cy);
  return sr.after(flip);
}

/// Maps a square window of side crop_margin * pixels_per_scale * scale around
/// (cx, cy) onto an out_h x out_w frame.
inline Affine crop_transform(double cx, double cy, double scale, int out_h, int out_w,
                             const AugmentationConfig& cfg) {
  const double side = cfg.crop_margin * cfg.pixels_per_scale * scale;
  const double sx = out_w / side, sy = out_h / side;
  Affine t{sx, 0, 0, sy, 0, 0};
  t.tx = (out_w - 1) / 2.0 - sx * cx;
  t.ty = (out_h - 1) / 2.0 - sy * cy;
  return t;
}

/// Bilinear, edge-clamped inverse warp of `src` by `fwd` into an out_h x out_w image.
inline Image warp_image(const Image& src, const Affine& fwd, int out_h, int out_w) {
  const Affine inv = fwd.inverse();
  Image out(out_h, out_w);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      auto [sx, sy] = inv.apply(x, y);
      sx = std::clamp(sx, 0.0, static_cast<double>(src.w - 1));
      sy = std::clamp(sy, 0.0, static_cast<double>(src.h - 1));
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      const int x1 = std::min(x0 + 1, src.w - 1), y1 = std::min(y0 + 1, src.h - 1);
      const double fx = sx - x0, fy = sy - y0;
      for (int c = 0; c < 3; ++c) {
        const double v = (1 - fy) * ((1 - fx) * src.at(c, y0, x0) + fx * src.at(c, y0, x1)) +
                         fy * ((1 - fx) * src.at(c, y1, x0) + fx * src.at(c, y1, x1));
        out.at(c, y, x) = static_cast<float>(v);
      }
    }
  return out;
}

/// Applies `t` to keypoints, center and head box. Keypoints that land outside
/// [0, w-1] x [0, h-1] become invisible. `swap` exchanges left/right ids.
inline KeypointAnnotation transform_annotation(const KeypointAnnotation& ann, const Affine& t, int out_h,
                                               int out_w, const std::vector<std::pair<int, int>>* swap) {
  KeypointAnnotation r = ann;
  for (auto& k : r.keypoints) {
    const auto [x, y] = t.apply(k.x, k.y);
    k.x = x;
    k.y = y;
    if (k.visible && (x < 0 || y < 0 || x > out_w - 1 || y > out_h - 1)) k.visible = false;
  }
  if (swap)
    for (auto [a, b] : *swap)
      if (a < static_cast<int>(r.keypoints.size()) && b < static_cast<int>(r.keypoints.size()))
        std::swap(r.keypoints[a], r.keypoints[b]);
  const auto [cx, cy] = t.apply(ann.center_x, ann.center_y);
  r.center_x = cx;
  r.center_y = cy;
  // Head box stays axis-aligned with its size scaled by the linear factor.
  const double s = std::sqrt(std::abs(t.a * t.d - t.b * t.c));
  const auto [hx, hy] = t.apply((ann.head.x1 + ann.head.x2) / 2, (ann.head.y1 + ann.head.y2) / 2);
  const double hw = std::abs(ann.head.x2 - ann.head.x1) * s / 2;
  const double hh = std::abs(ann.head.y2 - ann.head.y1) * s / 2;
  r.head = {hx - hw, hy - hh, hx + hw, hy + hh};
  return r;
}

/// Single-affine augmentation in the source frame. The person scale is kept,
/// so a later crop shows the zoom.
inline std::pair<Image, KeypointAnnotation> augment(const Image& img, const KeypointAnnotation& ann,
                                                    const AugmentParams& p,
                                                    const AugmentationConfig& cfg) {
  const Affine t = augmentation_transform(p, img.w, ann.center_x, ann.center_y);
  Image out = warp_image(img, t, img.h, img.w);
  KeypointAnnotation a = transform_annotation(ann, t, img.h, img.w, p.flip ? &cfg.flip_pairs : nullptr);
  a.scale = ann.scale;
  return {std::move(out), std::move(a)};
}

inline std::pair<Image, KeypointAnnotation> augment(const Image& img, const KeypointAnnotation& ann,
                                                    const AugmentationConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return augment(img, ann, sample_augmentation(cfg, rng), cfg);
}

// ---------------------------------------------------------------------------

inline float normalize_pixel(float v) { return v / 127.5f - 1.0f; }

class ImageCache {
 public:
  const Image& get(const std::string& path) {
    auto it = cache_.find(path);
    if (it == cache_.end()) it = cache_.emplace(path, read_ppm(path)).first;
    return it->second;
  }
  void put(const std::string& path, Image img) { cache_[path] = std::move(img); }

 private:
  std::map<std::string, Image> cache_;
};

struct Batch {
  Tensor<float> images;                     // N x 3 x H x W in [-1, 1]
  std::vector<Tensor<float>> targets;       // one N x C x h x w tensor per head
  std::vector<KeypointAnnotation> annotations;  // model-input frame
  std::vector<Affine> to_input;             // source -> model input
  std::vector<std::size_t> record_ids;
  double sigma = 0;
};

/// Per-epoch visiting order (seeded shuffle).
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::seed_seq sq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                   static_cast<std::uint32_t>(epoch), 0x5eedu};
  std::mt19937_64 rng(sq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

inline std::uint64_t sample_seed(std::uint64_t seed, int epoch, std::size_t record) {
  std::seed_seq sq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                   static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(record)};
  std::uint32_t out[2];
  sq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

/// Source -> model-input transform for one record (augmentation then crop).
inline Affine sample_transform(const KeypointAnnotation& ann, int image_w, const AugmentParams& p,
                               Resolution res, const AugmentationConfig& cfg, bool* flipped = nullptr) {
  const Affine aug = augmentation_transform(p, image_w, ann.center_x, ann.center_y);
  const auto [cx, cy] = aug.apply(ann.center_x, ann.center_y);
  if (flipped) *flipped = p.flip;
  return crop_transform(cx, cy, ann.scale, res.h, res.w, cfg).after(aug);
}

/// Builds the batch for `ids`: crop about the person center, resize to the
/// graph's input, normalize, and synthesize targets for every head.
inline Batch make_batch(const DatasetIndex& index, std::span<const std::size_t> ids, ImageCache& images,
                        const ModelGraph& model, const AugmentationConfig& aug, std::uint64_t seed,
                        int epoch) {
  if (index.records.empty()) throw DataError("make_batch: empty dataset index");
  if (ids.empty()) throw DataError("make_batch: no records selected");
  const Resolution res = model.input;
  const int n = static_cast<int>(ids.size());
  const auto layout = target_layout(model);
  const TargetSettings settings = target_settings(model.config);
  Batch b;
  b.images = Tensor<float>(Shape{n, 3, res.h, res.w});
  for (const auto& h : layout) b.targets.emplace_back(Shape{n, h.channels, h.h, h.w});
  std::vector<const Image*> src(n);
  for (int i = 0; i < n; ++i) {
    if (ids[i] >= index.records.size()) throw DataError("make_batch: record id out of range");
    src[i] = &images.get(index.records[ids[i]].image_path);
  }
  b.annotations.resize(n);
  b.to_input.resize(n);
  b.record_ids.assign(ids.begin(), ids.end());
  std::vector<double> sigma(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const auto& rec = index.records[ids[i]];
    std::mt19937_64 rng(sample_seed(seed, epoch, ids[i]));
    const AugmentParams p = sample_augmentation(aug, rng);
    const Affine t = sample_transform(rec.annotation, src[i]->w, p, res, aug);
    const Image crop = warp_image(*src[i], t, res.h, res.w);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < res.h; ++y)
        for (int x = 0; x < res.w; ++x) b.images.at(i, c, y, x) = normalize_pixel(crop.at(c, y, x));
    b.annotations[i] = transform_annotation(rec.annotation, t, res.h, res.w, p.flip ? &aug.flip_pairs : nullptr);
    b.to_input[i] = t;
    const TargetMaps tm = build_targets(b.annotations[i], layout, settings, epoch);
    sigma[i] = tm.sigma_used;
    for (std::size_t h = 0; h < layout.size(); ++h) {
      const auto& src_map = tm.heads[h];
      std::copy(src_map.vec().begin(), src_map.vec().end(),
                b.targets[h].vec().begin() + static_cast<std::ptrdiff_t>(i) * src_map.size());
    }
  }
  b.sigma = sigma[0];
  return b;
}

// ---------------------------------------------------------------------------
// Synthetic pose set: colored disks rendered at jittered stick-figure joints.

struct SyntheticOptions {
  int count = 8;
  int size = 128;
  double disk_radius = 4.0;
  double jitter = 0.05;  // fraction of the image side
  std::uint64_t seed = 7;
};

inline const std::array<std::array<double, 2>, 16>& template_pose() {
  static const std::array<std::array<double, 2>, 16> p{{
      {0.40, 0.90}, {0.41, 0.74}, {0.43, 0.56}, {0.57, 0.56}, {0.59, 0.74}, {0.60, 0.90},
      {0.50, 0.56}, {0.50, 0.30}, {0.50, 0.24}, {0.50, 0.10}, {0.28, 0.56}, {0.32, 0.43},
      {0.39, 0.30}, {0.61, 0.30}, {0.68, 0.43}, {0.72, 0.56}}};
  return p;
}

inline std::array<float, 3> joint_color(int j) {
  const double hue = j / 16.0 * 6.0;
  const int sector = static_cast<int>(hue) % 6;
  const double f = hue - std::floor(hue);
  const double v = 255, lo = 40, mid_up = lo + (v - lo) * f, mid_dn = v - (v - lo) * f;
  const double bright = (j % 2) ? 1.0 : 0.7;
  std::array<double, 3> rgb;
  switch (sector) {
    case 0: rgb = {v, mid_up, lo}; break;
    case 1: rgb = {mid_dn, v, lo}; break;
    case 2: rgb = {lo, v, mid_up}; break;
    case 3: rgb = {lo, mid_dn, v}; break;
    case 4: rgb = {mid_up, lo, v}; break;
    default: rgb = {v, lo, mid_dn}; break;
  }
  return {static_cast<float>(std::round(rgb[0] * bright)), static_cast<float>(std::round(rgb[1] * bright)),
          static_cast<float>(std::round(rgb[2] * bright))};
}

struct SyntheticSet {
  std::vector<Image> images;
  DatasetIndex index;  // image paths are "synthetic_<i>.ppm"
};

inline SyntheticSet make_synthetic_set(const SyntheticOptions& opt) {
  SyntheticSet s;
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double side = opt.size;
  for (int i = 0; i < opt.count; ++i) {
    Image img(opt.size, opt.size, 16.0f);
    KeypointAnnotation a;
    a.image_id = "synthetic_" + std::to_string(i) + ".ppm";
    a.center_x = a.center_y = (side - 1) / 2.0;
    a.scale = side / (1.25 * 200.0);
    for (int j = 0; j < 16; ++j) {
      const auto& t = template_pose()[j];
      Keypoint k;
      k.x = std::round((t[0] + opt.jitter * u(rng)) * (side - 1));
      k.y = std::round((t[1] + opt.jitter * u(rng)) * (side - 1));
      k.visible = true;
      a.keypoints.push_back(k);
    }
    // Head box: template head length, centered between neck and top.
    const auto& top = a.keypoints[9];
    const auto& neck = a.keypoints[8];
    const double hs = std::hypot(template_pose()[9][0] - template_pose()[8][0],
                                 template_pose()[9][1] - template_pose()[8][1]) * (side - 1);
    const double hx = (top.x + neck.x) / 2, hy = (top.y + neck.y) / 2;
    a.head = {hx - hs / 2, hy - hs / 2, hx + hs / 2, hy + hs / 2};
    const double r2 = opt.disk_radius * opt.disk_radius;
    for (int j = 0; j < 16; ++j) {
      const auto col = joint_color(j);
      const auto& k = a.keypoints[j];
      for (int y = 0; y < opt.size; ++y)
        for (int x = 0; x < opt.size; ++x)
          if ((x - k.x) * (x - k.x) + (y - k.y) * (y - k.y) <= r2)
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = col[c];
    }
    s.index.records.push_back({a.image_id, a});
    s.images.push_back(std::move(img));
  }
  return s;
}

/// Writes images and an annotation file `annotations.csv` into `dir`.
inline std::string write_synthetic_set(const SyntheticSet& s, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream os(dir / "annotations.csv");
  if (!os) throw DataError("cannot write " + (dir / "annotations.csv").string());
  os << "# image, center_x, center_y, scale, head_x1, head_y1, head_x2, head_y2, 16 x (x, y, v)\n";
  for (std::size_t i = 0; i < s.images.size(); ++i) {
    write_ppm((dir / s.index.records[i].image_path).string(), s.images[i]);
    os << format_annotation(s.index.records[i]) << "\n";
  }
  return (dir / "annotations.csv").string();
}

inline void register_synthetic(const SyntheticSet& s, ImageCache& cache) {
  for (std::size_t i = 0; i < s.images.size(); ++i) cache.put(s.index.records[i].image_path, s.images[i]);
}

}  // namespace effipose
