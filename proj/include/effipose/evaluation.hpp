#pragma once

#include <array>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "effipose/data_pipeline.hpp"

namespace effipose {

struct DecodedKeypoint {
  double x = 0, y = 0;
  double score = 0;
};

/// Argmax per map with an optional quarter-cell shift toward the larger
/// horizontal/vertical neighbor, mapped back to pixels of the frame the
/// maps were computed for. Ties resolve to the first maximum in row-major order.
inline std::vector<DecodedKeypoint> decode_keypoints(const float* maps, int q, int h, int w, int stride,
                                                     bool refine = true) {
  std::vector<DecodedKeypoint> out(q);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int j = 0; j < q; ++j) {
    const float* m = maps + j * plane;
    std::size_t best = 0;
    bool all_zero = true;
    for (std::size_t i = 0; i < plane; ++i) {
      if (m[i] != 0.0f) all_zero = false;
      if (m[i] > m[best]) best = i;
    }
    if (all_zero) {
      out[j] = {from_grid((w - 1) / 2.0, stride), from_grid((h - 1) / 2.0, stride), 0.0};
      continue;
    }
    const int by = static_cast<int>(best / w), bx = static_cast<int>(best % w);
    double gx = bx, gy = by;
    if (refine) {
      auto v = [&](int y, int x) { return m[static_cast<std::size_t>(y) * w + x]; };
      if (bx > 0 && bx < w - 1 && v(by, bx + 1) != v(by, bx - 1))
        gx += v(by, bx + 1) > v(by, bx - 1) ? 0.25 : -0.25;
      if (by > 0 && by < h - 1 && v(by + 1, bx) != v(by - 1, bx))
        gy += v(by + 1, bx) > v(by - 1, bx) ? 0.25 : -0.25;
    }
    out[j] = {from_grid(gx, stride), from_grid(gy, stride), m[best]};
  }
  return out;
}

inline std::vector<DecodedKeypoint> decode_keypoints(const Tensor<float>& maps, int sample, int stride,
                                                     bool refine = true) {
  const Shape s = maps.shape();
  return decode_keypoints(maps.plane(sample, 0), s.c, s.h, s.w, stride, refine);
}

/// Maps decoded model-input coordinates back to the source frame.
inline std::vector<DecodedKeypoint> to_source(std::vector<DecodedKeypoint> kps, const Affine& to_input) {
  const Affine inv = to_input.inverse();
  for (auto& k : kps) {
    const auto [x, y] = inv.apply(k.x, k.y);
    k.x = x;
    k.y = y;
  }
  return kps;
}

// ---------------------------------------------------------------------------

/// Joint groups in report order; pelvis and thorax are not reported.
inline const std::array<std::pair<const char*, std::array<int, 2>>, 7>& joint_groups() {
  static const std::array<std::pair<const char*, std::array<int, 2>>, 7> g{{
      {"Head", {8, 9}},
      {"Shoulder", {12, 13}},
      {"Elbow", {11, 14}},
      {"Wrist", {10, 15}},
      {"Hip", {2, 3}},
      {"Knee", {1, 4}},
      {"Ankle", {0, 5}},
  }};
  return g;
}

struct PCKhResult {
  double tau = 0.5;
  std::vector<long> correct;  // per joint
  std::vector<long> total;    // visible per joint
  std::array<double, 7> group{};  // percent
  double mean = 0;                // percent, over grouped joints weighted by visible count
  long samples = 0;
  long skipped = 0;  // degenerate head boxes

  double joint(int j) const { return total[j] ? 100.0 * correct[j] / total[j] : 0.0; }
};

inline PCKhResult pckh(const std::vector<std::vector<DecodedKeypoint>>& predictions,
                       const std::vector<KeypointAnnotation>& annotations, double tau) {
  if (predictions.size() != annotations.size())
    throw DimensionError(axis_mismatch("pckh", "sample count", static_cast<int>(predictions.size()),
                                       static_cast<int>(annotations.size())));
  if (!(tau > 0)) throw ConfigError("PCKh threshold must be positive");
  PCKhResult r;
  r.tau = tau;
  const std::size_t q = annotations.empty() ? 16 : annotations[0].keypoints.size();
  r.correct.assign(q, 0);
  r.total.assign(q, 0);
  for (std::size_t s = 0; s < annotations.size(); ++s) {
    const auto& a = annotations[s];
    const double l = 0.6 * a.head.diagonal();
    if (!(l > 0)) {
      ++r.skipped;
      continue;
    }
    if (predictions[s].size() != a.keypoints.size() || a.keypoints.size() != q)
      throw DimensionError("pckh: sample " + std::to_string(s) + " keypoint count mismatch");
    ++r.samples;
    for (std::size_t j = 0; j < q; ++j) {
      if (!a.keypoints[j].visible) continue;
      ++r.total[j];
      const double d = std::hypot(predictions[s][j].x - a.keypoints[j].x,
                                  predictions[s][j].y - a.keypoints[j].y);
      if (d <= tau * l) ++r.correct[j];
    }
  }
  long all_c = 0, all_t = 0;
  for (std::size_t g = 0; g < joint_groups().size(); ++g) {
    long c = 0, t = 0;
    for (int j : joint_groups()[g].second)
      if (static_cast<std::size_t>(j) < q) {
        c += r.correct[j];
        t += r.total[j];
      }
    r.group[g] = t ? 100.0 * c / t : 0.0;
    all_c += c;
    all_t += t;
  }
  r.mean = all_t ? 100.0 * all_c / all_t : 0.0;
  return r;
}

struct EvalReport {
  PCKhResult at50;  // tau = 0.5
  PCKhResult at10;  // tau = 0.1
};

inline EvalReport evaluate(const std::vector<std::vector<DecodedKeypoint>>& predictions,
                           const std::vector<KeypointAnnotation>& annotations) {
  return {pckh(predictions, annotations, 0.5), pckh(predictions, annotations, 0.1)};
}

inline std::string format_report(const EvalReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  os << std::left << std::setw(10) << "";
  for (const auto& g : joint_groups()) os << std::right << std::setw(10) << g.first;
  os << std::setw(10) << "Mean" << "\n";
  for (const PCKhResult* p : {&r.at50, &r.at10}) {
    os << std::left << std::setw(10) << (p->tau == 0.5 ? "PCKh@50" : "PCKh@10");
    for (double v : p->group) os << std::right << std::setw(10) << v;
    os << std::setw(10) << p->mean << "\n";
  }
  os << "samples " << r.at50.samples << "  skipped " << r.at50.skipped << "\n";
  os << std::setprecision(4);
  for (const PCKhResult* p : {&r.at50, &r.at10}) {
    std::ostringstream tau;
    tau << "pckh\ttau=" << p->tau << "\t";
    for (std::size_t g = 0; g < joint_groups().size(); ++g)
      os << tau.str() << joint_groups()[g].first << "\t" << p->group[g] << "\n";
    os << tau.str() << "Mean\t" << p->mean << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------

/// Half-pixel bilinear resize of every channel of sample `n`.
inline Tensor<float> resize_maps(const Tensor<float>& src, int n, int out_h, int out_w) {
  const Shape s = src.shape();
  Tensor<float> out(Shape{1, s.c, out_h, out_w});
  const double ry = static_cast<double>(s.h) / out_h, rx = static_cast<double>(s.w) / out_w;
  for (int c = 0; c < s.c; ++c) {
    const float* p = src.plane(n, c);
    float* q = out.plane(0, c);
    for (int y = 0; y < out_h; ++y) {
      const double sy = std::clamp((y + 0.5) * ry - 0.5, 0.0, static_cast<double>(s.h - 1));
      const int y0 = static_cast<int>(std::floor(sy)), y1 = std::min(y0 + 1, s.h - 1);
      const double fy = sy - y0;
      for (int x = 0; x < out_w; ++x) {
        const double sx = std::clamp((x + 0.5) * rx - 0.5, 0.0, static_cast<double>(s.w - 1));
        const int x0 = static_cast<int>(std::floor(sx)), x1 = std::min(x0 + 1, s.w - 1);
        const double fx = sx - x0;
        const double v = (1 - fy) * ((1 - fx) * p[y0 * s.w + x0] + fx * p[y0 * s.w + x1]) +
                         fy * ((1 - fx) * p[y1 * s.w + x0] + fx * p[y1 * s.w + x1]);
        q[y * out_w + x] = static_cast<float>(v);
      }
    }
  }
  return out;
}

inline Tensor<float> flip_horizontal(const Tensor<float>& t) {
  const Shape s = t.shape();
  Tensor<float> out(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) out.at(n, c, y, x) = t.at(n, c, y, s.w - 1 - x);
  return out;
}

inline int round_to_multiple(double v, int m) {
  return std::max(m, static_cast<int>(std::lround(v / m)) * m);
}

/// Averages final-head confidence maps over test scales and (optionally)
/// horizontal flips. `image` is 1 x 3 x H x W, already normalized; the result
/// is 1 x Q x H x W.
inline Tensor<float> multi_scale_inference(Model<float>& model, const Tensor<float>& image,
                                           const std::vector<double>& scales, bool flip,
                                           const Skeleton& skeleton = Skeleton::mpii()) {
  if (scales.empty()) throw ConfigError("multi-scale inference needs at least one scale");
  const Shape s = image.shape();
  if (s.n != 1) throw DimensionError("multi_scale_inference expects a single image");
  RunContext ctx;
  ctx.mode = Mode::infer;
  const auto perm = skeleton.flip_permutation();
  Tensor<float> acc;
  int runs = 0;
  auto run = [&](const Tensor<float>& input, bool flipped) {
    auto heads = model.forward(constant(input), ctx);
    Tensor<float> maps = resize_maps(heads.back()->value, 0, s.h, s.w);
    if (flipped) {
      Tensor<float> unflipped = flip_horizontal(maps);
      if (static_cast<int>(perm.size()) != unflipped.shape().c)
        throw DimensionError(axis_mismatch("multi_scale_inference", "flip channels",
                                           static_cast<int>(perm.size()), unflipped.shape().c));
      for (int c = 0; c < unflipped.shape().c; ++c)
        std::copy(unflipped.plane(0, perm[c]), unflipped.plane(0, perm[c]) + unflipped.shape().plane(),
                  maps.plane(0, c));
    }
    if (acc.empty()) acc = Tensor<float>(maps.shape());
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += maps[i];
    ++runs;
  };
  for (double sc : scales) {
    if (!(sc > 0)) throw ConfigError("test scales must be positive");
    const int h = round_to_multiple(s.h * sc, 16), w = round_to_multiple(s.w * sc, 16);
    const Tensor<float> scaled =
        (h == s.h && w == s.w) ? image : resize_maps(image, 0, h, w);
    run(scaled, false);
    if (flip) run(flip_horizontal(scaled), true);
  }
  for (auto& v : acc.vec()) v /= static_cast<float>(runs);
  return acc;
}

}  // namespace effipose
