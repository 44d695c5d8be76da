#include <gtest/gtest.h>

#include <random>

#include "grad_check.hpp"

using namespace effipose;
using effipose::testing::grad_check;

namespace {

constexpr double kTol = 1e-4;
constexpr int kShapes = 20;

int pick(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

Tensor<double> rnd(Shape s, std::mt19937_64& rng, double stdev = 1.0) {
  return random_normal<double>(s, rng, 0.0, stdev);
}

}  // namespace

TEST(Tensor, ShapeAndIndexing) {
  Tensor<float> t(Shape{2, 3, 4, 5});
  EXPECT_EQ(t.size(), 120u);
  t.at(1, 2, 3, 4) = 7;
  EXPECT_EQ(t[t.size() - 1], 7);
  EXPECT_THROW(Tensor<float>(Shape{0, 1, 1, 1}), DimensionError);
  EXPECT_THROW(t.reshaped(Shape{1, 1, 1, 7}), DimensionError);
}

TEST(Autograd, SharedSubexpressionAccumulates) {
  auto x = leaf(Tensor<double>(Shape{1, 1, 1, 3}, 2.0));
  auto y = residual_add<double>(x, x);
  backward(effipose::testing::weighted_sum(y, Tensor<double>(Shape{1, 1, 1, 3}, 1.0)));
  for (double g : x->grad.vec()) EXPECT_DOUBLE_EQ(g, 2.0);
}

TEST(GradCheck, Conv2d) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < kShapes; ++t) {
    const int n = pick(rng, 1, 2), cin = pick(rng, 1, 4), cout = pick(rng, 1, 4);
    const int k = std::array{1, 3, 5}[pick(rng, 0, 2)];
    const int stride = pick(rng, 1, 2);
    const int h = pick(rng, k, 8), w = pick(rng, k, 8);
    const Padding pad = pick(rng, 0, 1) ? Padding::same : Padding::valid;
    const bool bias = pick(rng, 0, 1);
    std::vector<Tensor<double>> in{rnd({n, cin, h, w}, rng), rnd({cout, cin, k, k}, rng)};
    if (bias) in.push_back(rnd({cout, 1, 1, 1}, rng));
    const double err = grad_check(
        [&](const std::vector<Var<double>>& v) {
          return conv2d<double>(v[0], v[1], bias ? v[2] : Var<double>{}, stride, pad);
        },
        in, rng);
    EXPECT_LT(err, kTol) << "shape " << t << " k=" << k << " s=" << stride;
  }
}

TEST(GradCheck, DepthwiseConv) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < kShapes; ++t) {
    const int n = pick(rng, 1, 2), c = pick(rng, 1, 5);
    const int k = pick(rng, 0, 1) ? 3 : 5, stride = pick(rng, 1, 2);
    const int h = pick(rng, 2, 9), w = pick(rng, 2, 9);
    const double err = grad_check(
        [&](const std::vector<Var<double>>& v) {
          return depthwise_conv2d<double>(v[0], v[1], stride, Padding::same);
        },
        {rnd({n, c, h, w}, rng), rnd({c, 1, k, k}, rng)}, rng);
    EXPECT_LT(err, kTol);
  }
}

TEST(GradCheck, TransposedConv) {
  std::mt19937_64 rng(13);
  for (int t = 0; t < kShapes; ++t) {
    const int n = pick(rng, 1, 2), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
    const int h = pick(rng, 1, 6), w = pick(rng, 1, 6);
    const double err = grad_check(
        [&](const std::vector<Var<double>>& v) { return conv_transpose2d<double>(v[0], v[1], v[2], 2, 1); },
        {rnd({n, cin, h, w}, rng), rnd({cin, cout, 4, 4}, rng), rnd({cout, 1, 1, 1}, rng)}, rng);
    EXPECT_LT(err, kTol);
  }
}

TEST(GradCheck, BatchNormTrain) {
  std::mt19937_64 rng(14);
  for (int t = 0; t < kShapes; ++t) {
    const int n = pick(rng, 2, 3), c = pick(rng, 1, 4), h = pick(rng, 1, 5), w = pick(rng, 2, 5);
    auto rm = constant(Tensor<double>(Shape{c, 1, 1, 1}));
    auto rv = constant(Tensor<double>(Shape{c, 1, 1, 1}, 1.0));
    const double err = grad_check(
        [&](const std::vector<Var<double>>& v) {
          return batch_norm<double>(v[0], v[1], v[2], rm, rv, Mode::train);
        },
        {rnd({n, c, h, w}, rng, 2.0), rnd({c, 1, 1, 1}, rng), rnd({c, 1, 1, 1}, rng)}, rng);
    EXPECT_LT(err, kTol);
  }
}

TEST(GradCheck, BatchNormInfer) {
  std::mt19937_64 rng(15);
  for (int t = 0; t < kShapes; ++t) {
    const int n = pick(rng, 1, 3), c = pick(rng, 1, 4), h = pick(rng, 1, 5), w = pick(rng, 1, 5);
    auto rm = constant(rnd({c, 1, 1, 1}, rng));
    Tensor<double> var(Shape{c, 1, 1, 1});
    for (auto& v : var.vec()) v = 0.5 + std::uniform_real_distribution<double>(0, 1)(rng);
    auto rv = constant(var);
    const double err = grad_check(
        [&](const std::vector<Var<double>>& v) {
          return batch_norm<double>(v[0], v[1], v[2], rm, rv, Mode::infer);
        },
        {rnd({n, c, h, w}, rng), rnd({c, 1, 1, 1}, rng), rnd({c, 1, 1, 1}, rng)}, rng);
    EXPECT_LT(err, kTol);
  }
}

TEST(GradCheck, Activations) {
  std::mt19937_64 rng(16);
  for (auto kind : {ActivationKind::sigmoid, ActivationKind::swish, ActivationKind::eswish,
                    ActivationKind::linear}) {
    for (int t = 0; t < kShapes; ++t) {
      const Shape s{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 5)};
      const double err = grad_check(
          [&](const std::vector<Var<double>>& v) { return activation<double>(v[0], kind, kEswishBeta); },
          {rnd(s, rng, 2.0)}, rng);
      EXPECT_LT(err, kTol) << to_string(kind);
    }
  }
}

TEST(GradCheck, Pooling) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < kShapes; ++t) {
    const int win = pick(rng, 1, 3), stride = pick(rng, 1, 2);
    const Shape s{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, win, 7), pick(rng, win, 7)};
    EXPECT_LT(grad_check([&](const std::vector<Var<double>>& v) { return avg_pool<double>(v[0], win, stride); },
                         {rnd(s, rng)}, rng),
              kTol);
    EXPECT_LT(grad_check([&](const std::vector<Var<double>>& v) { return global_avg_pool<double>(v[0]); },
                         {rnd(s, rng)}, rng),
              kTol);
  }
}

TEST(GradCheck, ConcatAddGate) {
  std::mt19937_64 rng(18);
  for (int t = 0; t < kShapes; ++t) {
    const int n = pick(rng, 1, 2), h = pick(rng, 1, 5), w = pick(rng, 1, 5);
    const int c1 = pick(rng, 1, 3), c2 = pick(rng, 1, 3);
    EXPECT_LT(grad_check(
                  [&](const std::vector<Var<double>>& v) { return concat<double>({v[0], v[1], v[0]}); },
                  {rnd({n, c1, h, w}, rng), rnd({n, c2, h, w}, rng)}, rng),
              kTol);
    EXPECT_LT(grad_check([&](const std::vector<Var<double>>& v) { return residual_add<double>(v[0], v[1]); },
                         {rnd({n, c1, h, w}, rng), rnd({n, c1, h, w}, rng)}, rng),
              kTol);
    EXPECT_LT(grad_check([&](const std::vector<Var<double>>& v) { return broadcast_mul<double>(v[0], v[1]); },
                         {rnd({n, c1, h, w}, rng), rnd({n, c1, 1, 1}, rng)}, rng),
              kTol);
  }
}

TEST(GradCheck, DropoutAndMse) {
  std::mt19937_64 rng(19);
  for (int t = 0; t < kShapes; ++t) {
    const Shape s{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 5)};
    const std::uint64_t seed = rng();
    EXPECT_LT(grad_check(
                  [&](const std::vector<Var<double>>& v) {
                    std::mt19937_64 r(seed);
                    return dropout<double>(v[0], 0.3, Mode::train, r);
                  },
                  {rnd(s, rng)}, rng),
              kTol);
    const Tensor<double> a = rnd(s, rng), b = rnd(s, rng);
    EXPECT_LT(grad_check(
                  [&](const std::vector<Var<double>>& v) {
                    return mse_loss<double>(std::vector<Var<double>>{v[0], v[1]},
                                            std::vector<Tensor<double>>{a, b});
                  },
                  {rnd(s, rng), rnd(s, rng)}, rng),
              kTol);
  }
}

TEST(Kernels, DepthwiseMatchesBlockDiagonalConv) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < kShapes; ++t) {
    const int n = pick(rng, 1, 2), c = pick(rng, 1, 6), k = pick(rng, 0, 1) ? 3 : 5;
    const int stride = pick(rng, 1, 2), h = pick(rng, 3, 11), w = pick(rng, 3, 11);
    const Tensor<double> x = rnd({n, c, h, w}, rng), wd = rnd({c, 1, k, k}, rng);
    Tensor<double> dense(Shape{c, c, k, k});
    for (int ch = 0; ch < c; ++ch)
      std::copy(wd.plane(ch, 0), wd.plane(ch, 0) + k * k, dense.plane(ch, ch));
    auto a = depthwise_conv2d<double>(constant(x), constant(wd), stride, Padding::same);
    auto b = conv2d<double>(constant(x), constant(dense), Var<double>{}, stride, Padding::same);
    EXPECT_LT(max_abs_diff(a->value, b->value), 1e-6);
  }
}

TEST(Kernels, BilinearUpsamplerMatchesInterpolation) {
  std::mt19937_64 rng(22);
  for (int t = 0; t < kShapes; ++t) {
    const int q = pick(rng, 1, 4), h = pick(rng, 1, 9), w = pick(rng, 1, 9);
    const Tensor<double> x = rnd({1, q, h, w}, rng);
    auto y = conv_transpose2d<double>(constant(x), constant(bilinear_upsampling_weight<double>(q)),
                                      Var<double>{}, 2, 1);
    ASSERT_EQ(y->shape(), (Shape{1, q, 2 * h, 2 * w}));
    // Half-pixel bilinear interpolation, zero outside the input.
    auto src = [&](int c, int yy, int xx) {
      return (yy < 0 || xx < 0 || yy >= h || xx >= w) ? 0.0 : x.at(0, c, yy, xx);
    };
    double worst = 0;
    for (int c = 0; c < q; ++c)
      for (int oy = 0; oy < 2 * h; ++oy)
        for (int ox = 0; ox < 2 * w; ++ox) {
          const double sy = (oy + 0.5) / 2 - 0.5, sx = (ox + 0.5) / 2 - 0.5;
          const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
          const double fy = sy - y0, fx = sx - x0;
          const double v = (1 - fy) * ((1 - fx) * src(c, y0, x0) + fx * src(c, y0, x0 + 1)) +
                           fy * ((1 - fx) * src(c, y0 + 1, x0) + fx * src(c, y0 + 1, x0 + 1));
          worst = std::max(worst, std::abs(v - y->value.at(0, c, oy, ox)));
        }
    EXPECT_LT(worst, 1e-6);
  }
}

TEST(Kernels, SamePaddingGeometry) {
  const auto g = conv_geometry(7, 8, 3, 2, Padding::same);
  EXPECT_EQ(g.out_h, 4);
  EXPECT_EQ(g.out_w, 4);
  EXPECT_EQ(g.pad_top, 1);
  EXPECT_THROW(conv_geometry(2, 2, 3, 1, Padding::valid), DimensionError);
}

TEST(Kernels, ThreadCountDoesNotChangeResults) {
  std::mt19937_64 rng(23);
  const Tensor<float> x = random_normal<float>(Shape{3, 8, 12, 12}, rng, 0, 1);
  const Tensor<float> w = random_normal<float>(Shape{6, 8, 3, 3}, rng, 0, 1);
  const int saved = num_threads();
  set_num_threads(1);
  auto a = conv2d<float>(leaf(x), leaf(w), Var<float>{}, 1, Padding::same);
  set_num_threads(4);
  auto b = conv2d<float>(leaf(x), leaf(w), Var<float>{}, 1, Padding::same);
  set_num_threads(saved);
  EXPECT_EQ(max_abs_diff(a->value, b->value), 0.0);
}

TEST(Ops, ErrorsOnBadShapes) {
  auto x = constant(Tensor<float>(Shape{1, 3, 4, 4}));
  auto w = constant(Tensor<float>(Shape{2, 4, 3, 3}));
  EXPECT_THROW(conv2d<float>(x, w, Var<float>{}, 1, Padding::same), DimensionError);
  EXPECT_THROW(avg_pool<float>(x, 5, 1), DimensionError);
  auto y = constant(Tensor<float>(Shape{1, 3, 5, 4}));
  EXPECT_THROW(concat<float>({x, y}), DimensionError);
  std::mt19937_64 rng(1);
  EXPECT_THROW(dropout<float>(x, 1.0, Mode::train, rng), ConfigError);
}

TEST(Ops, BatchNormUpdatesRunningStats) {
  auto x = constant(Tensor<float>(Shape{2, 1, 1, 2}, std::vector<float>{1, 2, 3, 4}));
  auto g = leaf(Tensor<float>(Shape{1, 1, 1, 1}, 1.f));
  auto b = leaf(Tensor<float>(Shape{1, 1, 1, 1}, 0.f));
  auto rm = constant(Tensor<float>(Shape{1, 1, 1, 1}, 0.f));
  auto rv = constant(Tensor<float>(Shape{1, 1, 1, 1}, 1.f));
  batch_norm<float>(x, g, b, rm, rv, Mode::train);
  EXPECT_NEAR(rm->value[0], 0.01 * 2.5, 1e-6);
  EXPECT_NEAR(rv->value[0], 0.99 + 0.01 * (5.0 / 3.0), 1e-6);
}
