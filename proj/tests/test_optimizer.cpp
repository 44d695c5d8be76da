#include <gtest/gtest.h>

#include "effipose/effipose.hpp"

using namespace effipose;

TEST(LambdaInf, Values) {
  const double lmax = 1e-2, lmin = lmax / 3000;
  EXPECT_NEAR(lambda_inf(lmax, lmin, 2, 2), 1.8257e-4, 1e-8);
  EXPECT_NEAR(lambda_inf(lmax, lmin, 4, 2), 7.3030e-4, 1e-8);
  EXPECT_THROW(lambda_inf(0, lmin, 4, 2), ConfigError);
  EXPECT_THROW(lambda_inf(lmax, lmin, 2, 4), ConfigError);
}

TEST(CLR, TriangleAndPeaks) {
  const CLRSchedule s(1e-2, 4, 2);
  EXPECT_DOUBLE_EQ(lr_at(s, 0), 1e-2 / 3000);
  EXPECT_NEAR(lr_at(s, 1.5), 1e-2, 1e-15);
  EXPECT_NEAR(lr_at(s, 0.75), (1e-2 / 3000 + 1e-2) / 2, 1e-12);
  EXPECT_NEAR(lr_at(s, 3.0), 1e-2 / 3000, 1e-12);
  EXPECT_NEAR(lr_at(s, 4.5), s.lambda_limit + (1e-2 - s.lambda_limit) * 0.94, 1e-12);
  double prev = 1;
  for (int k = 0; k < 200; ++k) {
    const double p = lr_at(s, 3.0 * k + 1.5);
    EXPECT_LE(p, prev);
    EXPECT_GT(p, s.lambda_limit);
    prev = p;
  }
  EXPECT_NEAR(prev, s.lambda_limit, 1e-7);
  EXPECT_THROW(lr_at(s, -0.1), ConfigError);
  // lambda_inf above lambda_max: sigma drop too large.
  EXPECT_THROW(CLRSchedule(1e-2, 12, 2), ConfigError);
}

TEST(SGD, MomentumAccumulates) {
  std::vector<double> p{0.0}, v{0.0};
  const std::vector<double> g{1.0};
  sgd_update<double>(p, g, v, 0.1);
  EXPECT_DOUBLE_EQ(p[0], -0.1);
  sgd_update<double>(p, g, v, 0.1);
  // Second step moves 1.9x the first.
  EXPECT_NEAR(p[0], -0.1 - 0.19, 1e-15);
  std::vector<double> short_g{1.0, 2.0};
  EXPECT_THROW(sgd_update<double>(p, short_g, v, 0.1), DimensionError);
}

namespace {

struct TinyProblem {
  LayerGraph g;
  ParamStore<float> store;
  Var<float> x;
  Tensor<float> target;

  TinyProblem() {
    GraphBuilder b(g);
    const auto in = b.input("x", {3, 6, 6});
    b.conv("c", in, 2, 3, 1, true);
    store.initialize(g, 11);
    std::mt19937_64 rng(2);
    x = constant(random_normal<float>(Shape{4, 3, 6, 6}, rng, 0, 1));
    target = random_normal<float>(Shape{4, 2, 6, 6}, rng, 0, 1);
  }

  double step(SGDState<float>& sgd, double rate) {
    RunContext ctx;
    store.zero_grad();
    Var<float> y = forward_block(g, store, x, ctx);
    Var<float> loss = mse_loss<float>(std::vector<Var<float>>{y}, std::vector<Tensor<float>>{target});
    backward(loss);
    sgd_step(store, sgd, rate);
    return loss->value[0];
  }
};

}  // namespace

TEST(SGD, ZeroRateLeavesParameters) {
  TinyProblem t;
  std::vector<std::vector<float>> before;
  for (const auto& p : t.store.all()) before.push_back(p.value().vec());
  SGDState<float> sgd;
  for (int i = 0; i < 3; ++i) t.step(sgd, 0.0);
  std::size_t i = 0;
  for (const auto& p : t.store.all()) EXPECT_EQ(p.value().vec(), before[i++]);
}

TEST(SGD, LossDecreasesOnFixedBatch) {
  TinyProblem t;
  SGDState<float> sgd;
  const double first = t.step(sgd, 0.05);
  double last = first;
  for (int i = 0; i < 50; ++i) last = t.step(sgd, 0.05);
  EXPECT_LT(last, 0.8 * first);
}

TEST(SGD, VelocityRoundTrip) {
  TinyProblem t;
  SGDState<float> sgd, restored;
  t.step(sgd, 0.05);
  load_velocity(restored, t.store, velocity_records(sgd));
  ASSERT_EQ(restored.velocity.size(), sgd.velocity.size());
  for (const auto& [name, v] : sgd.velocity) EXPECT_EQ(restored.velocity.at(name).vec(), v.vec());
}
