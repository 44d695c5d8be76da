#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "effipose/tensor.hpp"

namespace effipose {

struct Keypoint {
  double x = 0;
  double y = 0;
  bool visible = false;
};

struct HeadBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double diagonal() const { return std::hypot(x2 - x1, y2 - y1); }
};

/// One person instance: keypoints in source-image pixels, the head box used
/// by PCKh and the person center/scale used for cropping.
struct KeypointAnnotation {
  std::string image_id;
  double center_x = 0;
  double center_y = 0;
  double scale = 1;
  HeadBox head;
  std::vector<Keypoint> keypoints;
};

/// Joint layout and limb tree. Defaults follow the MPII joint order:
/// 0 r_ankle, 1 r_knee, 2 r_hip, 3 l_hip, 4 l_knee, 5 l_ankle, 6 pelvis,
/// 7 thorax, 8 upper_neck, 9 head_top, 10 r_wrist, 11 r_elbow, 12 r_shoulder,
/// 13 l_shoulder, 14 l_elbow, 15 l_wrist.
struct Skeleton {
  int num_joints = 16;
  std::vector<std::pair<int, int>> limbs;
  std::vector<std::pair<int, int>> flip_pairs;

  static Skeleton mpii() {
    Skeleton s;
    s.num_joints = 16;
    s.limbs = {{0, 1}, {1, 2},  {2, 6},   {6, 3},   {3, 4},   {4, 5},   {6, 7},  {7, 8},
               {8, 9}, {7, 12}, {12, 11}, {11, 10}, {7, 13}, {13, 14}, {14, 15}};
    s.flip_pairs = {{0, 5}, {1, 4}, {2, 3}, {10, 15}, {11, 14}, {12, 13}};
    return s;
  }

  /// Channel permutation that swaps left/right joints.
  std::vector<int> flip_permutation() const {
    std::vector<int> perm(num_joints);
    for (int i = 0; i < num_joints; ++i) perm[i] = i;
    for (auto [a, b] : flip_pairs) {
      perm[a] = b;
      perm[b] = a;
    }
    return perm;
  }
};

// ---------------------------------------------------------------------------

/// Continuous grid coordinate of an image coordinate on a map with `stride`
/// (grid cell i covers image pixels [i*stride, (i+1)*stride)).
inline double to_grid(double v, int stride) { return (v + 0.5) / stride - 0.5; }
inline double from_grid(double g, int stride) { return (g + 0.5) * stride - 0.5; }

/// Gaussian target exp(-|P - G|^2 / sigma^2) on an h x w grid, with G snapped
/// to the nearest grid center. Invisible keypoints give an all-zero map.
inline void confidence_map(const Keypoint& kp, int h, int w, int stride, double sigma, float* out) {
  if (!(sigma > 0)) throw ConfigError("confidence map sigma must be positive");
  std::fill(out, out + static_cast<std::size_t>(h) * w, 0.0f);
  if (!kp.visible) return;
  const double gx = std::round(to_grid(kp.x, stride));
  const double gy = std::round(to_grid(kp.y, stride));
  const double inv = 1.0 / (sigma * sigma);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double d2 = (x - gx) * (x - gx) + (y - gy) * (y - gy);
      out[static_cast<std::size_t>(y) * w + x] = static_cast<float>(std::exp(-d2 * inv));
    }
}

inline Tensor<float> confidence_map(const Keypoint& kp, int h, int w, int stride, double sigma) {
  Tensor<float> t(Shape{1, 1, h, w});
  confidence_map(kp, h, w, stride, sigma, t.data());
  return t;
}

/// Part affinity field of limb A->B: grid points within `half_width` grid
/// pixels of the segment (measured perpendicular, projection inside the
/// segment) hold the unit vector A->B. Writes into (x_map, y_map); points
/// outside the band are left untouched so later limbs overwrite earlier ones.
inline void paf_map(const Keypoint& a, const Keypoint& b, int h, int w, int stride,
                    double half_width, float* x_map, float* y_map) {
  if (!a.visible || !b.visible) return;
  const double ax = to_grid(a.x, stride), ay = to_grid(a.y, stride);
  const double bx = to_grid(b.x, stride), by = to_grid(b.y, stride);
  const double dx = bx - ax, dy = by - ay;
  const double len = std::hypot(dx, dy);
  if (len < 1e-9) return;
  const double ux = dx / len, uy = dy / len;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double vx = x - ax, vy = y - ay;
      const double along = vx * ux + vy * uy;
      const double perp = std::abs(vx * uy - vy * ux);
      if (along >= 0 && along <= len && perp <= half_width) {
        x_map[static_cast<std::size_t>(y) * w + x] = static_cast<float>(ux);
        y_map[static_cast<std::size_t>(y) * w + x] = static_cast<float>(uy);
      }
    }
}

inline Tensor<float> paf_map(const Keypoint& a, const Keypoint& b, int h, int w, int stride,
                             double half_width) {
  Tensor<float> t(Shape{1, 2, h, w});
  paf_map(a, b, h, w, stride, half_width, t.plane(0, 0), t.plane(0, 1));
  return t;
}

// ---------------------------------------------------------------------------

/// Stepwise sigma, expressed in pixels of a reference output grid (stride 8
/// by default) and rescaled for grids of other strides.
struct SigmaSchedule {
  struct Step {
    double epoch_from;
    double sigma;
  };
  std::vector<Step> steps{{0, 4.0}, {50, 3.0}, {100, 2.0}};
  int reference_stride = 8;

  void validate() const {
    if (steps.empty()) throw ConfigError("sigma schedule is empty");
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (!(steps[i].sigma > 0)) throw ConfigError("sigma values must be positive");
      if (i > 0 && !(steps[i].epoch_from > steps[i - 1].epoch_from))
        throw ConfigError("sigma schedule epochs must be strictly increasing");
      if (i > 0 && steps[i].sigma > steps[i - 1].sigma)
        throw ConfigError("sigma schedule must be non-increasing");
    }
  }

  double sigma_initial() const { return steps.front().sigma; }
  double sigma_final() const { return steps.back().sigma; }

  static SigmaSchedule parse(const std::string& text) {
    SigmaSchedule s;
    s.steps.clear();
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto colon = item.find(':');
      if (colon == std::string::npos)
        throw ConfigError("sigma schedule entries are epoch:sigma, got '" + item + "'");
      s.steps.push_back({std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
    }
    s.validate();
    return s;
  }

  std::string str() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < steps.size(); ++i)
      os << (i ? "," : "") << steps[i].epoch_from << ":" << steps[i].sigma;
    return os.str();
  }
};

/// Piecewise-constant sigma for `epoch`, in pixels of a grid with `stride`.
inline double sigma_at_epoch(const SigmaSchedule& schedule, double epoch, int stride = 8) {
  if (schedule.steps.empty()) throw ConfigError("sigma schedule is empty");
  if (epoch < 0) throw ConfigError("epoch must be non-negative");
  double sigma = schedule.steps.front().sigma;
  for (const auto& s : schedule.steps)
    if (epoch >= s.epoch_from) sigma = s.sigma;
  return sigma * schedule.reference_stride / stride;
}

// ---------------------------------------------------------------------------

enum class HeadKind { paf, keypoint, upscaled };

inline const char* to_string(HeadKind k) {
  switch (k) {
    case HeadKind::paf: return "paf";
    case HeadKind::keypoint: return "keypoint";
    case HeadKind::upscaled: return "upscaled";
  }
  return "?";
}

/// Geometry of one supervised output.
struct TargetHead {
  HeadKind kind = HeadKind::keypoint;
  int channels = 0;
  int h = 0, w = 0;
  int stride = 8;
};

struct TargetSettings {
  SigmaSchedule schedule;
  double paf_half_width = 1.0;  // reference-grid pixels
  Skeleton skeleton = Skeleton::mpii();
};

/// Target maps for one sample, one tensor (1 x C x h x w) per head.
struct TargetMaps {
  std::vector<Tensor<float>> heads;
  double sigma_used = 0;  // reference-grid pixels
};

/// Synthesizes the targets of every supervised head for one annotation whose
/// keypoints are already expressed in model-input pixels.
inline TargetMaps build_targets(const KeypointAnnotation& ann, const std::vector<TargetHead>& layout,
                                const TargetSettings& settings, double epoch) {
  const auto& sk = settings.skeleton;
  if (static_cast<int>(ann.keypoints.size()) != sk.num_joints)
    throw DimensionError(axis_mismatch("build_targets", "keypoints",
                                       static_cast<int>(ann.keypoints.size()), sk.num_joints));
  TargetMaps out;
  out.sigma_used = sigma_at_epoch(settings.schedule, epoch, settings.schedule.reference_stride);
  for (const auto& head : layout) {
    Tensor<float> t(Shape{1, head.channels, head.h, head.w});
    if (head.kind == HeadKind::paf) {
      if (head.channels != 2 * static_cast<int>(sk.limbs.size()))
        throw DimensionError(axis_mismatch("build_targets", "paf channels (2P)", head.channels,
                                           2 * static_cast<int>(sk.limbs.size())));
      const double hw = settings.paf_half_width * settings.schedule.reference_stride / head.stride;
      for (std::size_t l = 0; l < sk.limbs.size(); ++l) {
        const auto [a, b] = sk.limbs[l];
        paf_map(ann.keypoints[a], ann.keypoints[b], head.h, head.w, head.stride, hw,
                t.plane(0, static_cast<int>(2 * l)), t.plane(0, static_cast<int>(2 * l + 1)));
      }
    } else {
      if (head.channels != sk.num_joints)
        throw DimensionError(axis_mismatch("build_targets", "keypoint channels (Q)", head.channels,
                                           sk.num_joints));
      const double sigma = sigma_at_epoch(settings.schedule, epoch, head.stride);
      for (int j = 0; j < sk.num_joints; ++j)
        confidence_map(ann.keypoints[j], head.h, head.w, head.stride, sigma, t.plane(0, j));
    }
    out.heads.push_back(std::move(t));
  }
  return out;
}

}  // namespace effipose
