#include <gtest/gtest.h>

#include "effipose/effipose.hpp"

using namespace effipose;

TEST(ConfidenceMap, PeakAndFalloff) {
  // Keypoint at image (28, 20) on a stride-8 grid snaps to cell (3, 2).
  const Tensor<float> m = confidence_map({28, 20, true}, 8, 8, 8, 2.0);
  EXPECT_FLOAT_EQ(m.at(0, 0, 2, 3), 1.0f);
  EXPECT_NEAR(m.at(0, 0, 2, 4), std::exp(-1.0 / 4.0), 1e-6);
  EXPECT_NEAR(m.at(0, 0, 4, 5), std::exp(-8.0 / 4.0), 1e-6);
  float mx = 0;
  for (float v : m.vec()) mx = std::max(mx, v);
  EXPECT_FLOAT_EQ(mx, 1.0f);
}

TEST(ConfidenceMap, InvisibleIsZero) {
  const Tensor<float> m = confidence_map({10, 10, false}, 6, 6, 8, 2.0);
  for (float v : m.vec()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(confidence_map({1, 1, true}, 4, 4, 8, 0.0), ConfigError);
}

TEST(ConfidenceMap, SigmaWidensTarget) {
  const Tensor<float> a = confidence_map({30, 30, true}, 8, 8, 8, 2.0);
  const Tensor<float> b = confidence_map({30, 30, true}, 8, 8, 8, 4.0);
  double sa = 0, sb = 0;
  for (float v : a.vec()) sa += v;
  for (float v : b.vec()) sb += v;
  EXPECT_GT(sb, sa);
}

TEST(PafMap, BandAlongSegment) {
  // Horizontal limb from grid (1, 4) to (6, 4) with half-width 1.
  const Keypoint a{from_grid(1, 8), from_grid(4, 8), true};
  const Keypoint b{from_grid(6, 8), from_grid(4, 8), true};
  const Tensor<float> t = paf_map(a, b, 9, 9, 8, 1.0);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) {
      const bool in = x >= 1 && x <= 6 && std::abs(y - 4) <= 1;
      EXPECT_FLOAT_EQ(t.at(0, 0, y, x), in ? 1.0f : 0.0f) << y << "," << x;
      EXPECT_FLOAT_EQ(t.at(0, 1, y, x), 0.0f);
    }
}

TEST(PafMap, DiagonalUnitVectorAndInvisible) {
  const Keypoint a{from_grid(0, 8), from_grid(0, 8), true};
  const Keypoint b{from_grid(5, 8), from_grid(5, 8), true};
  const Tensor<float> t = paf_map(a, b, 6, 6, 8, 1.0);
  EXPECT_NEAR(t.at(0, 0, 3, 3), 1 / std::sqrt(2.0), 1e-6);
  EXPECT_NEAR(t.at(0, 1, 3, 3), 1 / std::sqrt(2.0), 1e-6);
  EXPECT_FLOAT_EQ(t.at(0, 0, 0, 5), 0.0f);
  const Tensor<float> z = paf_map(a, {b.x, b.y, false}, 6, 6, 8, 1.0);
  for (float v : z.vec()) EXPECT_EQ(v, 0.0f);
}

TEST(SigmaSchedule, StepsAndStrides) {
  const SigmaSchedule s;
  EXPECT_DOUBLE_EQ(sigma_at_epoch(s, 0), 4);
  EXPECT_DOUBLE_EQ(sigma_at_epoch(s, 49.9), 4);
  EXPECT_DOUBLE_EQ(sigma_at_epoch(s, 50), 3);
  EXPECT_DOUBLE_EQ(sigma_at_epoch(s, 100), 2);
  EXPECT_DOUBLE_EQ(sigma_at_epoch(s, 1000), 2);
  EXPECT_DOUBLE_EQ(sigma_at_epoch(s, 0, 1), 32);
  EXPECT_DOUBLE_EQ(sigma_at_epoch(s, 100, 4), 4);
  EXPECT_THROW(sigma_at_epoch(s, -1), ConfigError);
  EXPECT_EQ(SigmaSchedule::parse(s.str()).str(), s.str());
  EXPECT_THROW(SigmaSchedule::parse("0:4,10"), ConfigError);
  EXPECT_THROW(SigmaSchedule::parse("0:4,10:-1"), ConfigError);
}

TEST(Skeleton, FlipPermutationIsInvolution) {
  const Skeleton s = Skeleton::mpii();
  EXPECT_EQ(s.limbs.size(), 15u);
  const auto p = s.flip_permutation();
  for (int i = 0; i < s.num_joints; ++i) EXPECT_EQ(p[p[i]], i);
  EXPECT_EQ(p[0], 5);
  EXPECT_EQ(p[9], 9);
}

TEST(BuildTargets, EveryHeadGetsMaps) {
  KeypointAnnotation ann;
  ann.keypoints.resize(16);
  for (int j = 0; j < 16; ++j) ann.keypoints[j] = {10.0 + 6 * j, 20.0 + 3 * j, j != 6};
  const std::vector<TargetHead> layout{{HeadKind::paf, 30, 16, 16, 8},
                                       {HeadKind::keypoint, 16, 16, 16, 8},
                                       {HeadKind::upscaled, 16, 128, 128, 1}};
  const TargetMaps t = build_targets(ann, layout, TargetSettings{}, 60);
  ASSERT_EQ(t.heads.size(), 3u);
  EXPECT_DOUBLE_EQ(t.sigma_used, 3);
  EXPECT_EQ(t.heads[0].shape(), (Shape{1, 30, 16, 16}));
  EXPECT_EQ(t.heads[2].shape(), (Shape{1, 16, 128, 128}));
  // Upscaled-head peak lands on the keypoint pixel.
  EXPECT_FLOAT_EQ(t.heads[2].at(0, 3, 29, 28), 1.0f);
  double pelvis = 0;
  for (int i = 0; i < 128 * 128; ++i) pelvis += t.heads[2].plane(0, 6)[i];
  EXPECT_EQ(pelvis, 0.0);
  ann.keypoints.pop_back();
  EXPECT_THROW(build_targets(ann, layout, TargetSettings{}, 0), DimensionError);
}
