// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//   acceptance [--cli PATH] [--skip-training]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

#include "effipose/effipose.hpp"
#include "grad_check.hpp"

using namespace effipose;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const std::string& id, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << id << "  " << detail << std::endl;
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double params_m(const VariantConfig& c) { return account(build_variant(c).graph).total_params / 1e6; }
double flops_g(const VariantConfig& c) { return account(build_variant(c).graph).total_flops / 1e9; }

bool within(double v, double ref, double rel) { return std::abs(v - ref) <= rel * ref; }

// ---------------------------------------------------------------------------

void criterion1() {
  const std::pair<const char*, double> rows[] = {{"RT", 0.46}, {"I", 0.72}, {"II", 1.73}, {"III", 3.23}, {"IV", 6.56}};
  bool ok = true;
  std::string d;
  for (auto [name, ref] : rows) {
    const double p = params_m(variant(name));
    ok &= within(p, ref, 0.08);
    d += fmt("%s %.3fM/%.2fM (%+.1f%%) ", name, p, ref, 100 * (p / ref - 1));
  }
  report("1", ok, d);
}

void criterion2() {
  {
    bool ok = true;
    std::string d;
    const std::pair<const char*, std::array<double, 3>> rows[] = {{"I", {0.52, 0.72, 0.92}}, {"II", {1.24, 1.73, 2.22}}};
    for (const auto& [name, refs] : rows)
      for (int k = 1; k <= 3; ++k) {
        VariantConfig c = variant(name);
        c.keypoint_passes = k;
        const double p = params_m(c);
        ok &= within(p, refs[k - 1], 0.08);
        d += fmt("%s/%d %.3fM ", name, k, p);
      }
    report("2a", ok, "passes " + d);
  }
  {
    bool ok = true;
    std::string d;
    const std::pair<const char*, double> rows[] = {{"I", 0.54}, {"II", 1.27}};
    for (auto [name, ref] : rows) {
      VariantConfig c = variant(name);
      c.skeleton_pass = false;
      const double p = params_m(c);
      ok &= within(p, ref, 0.08);
      d += fmt("%s %.3fM/%.2fM ", name, p, ref);
    }
    report("2b", ok, "no skeleton pass " + d);
  }
  {
    bool ok = true;
    std::string d;
    const std::pair<const char*, double> rows[] = {{"I", 0.04}, {"II", 0.04}};
    for (auto [name, ref] : rows) {
      VariantConfig c = variant(name);
      const double full = params_m(c);
      c.low_backbone.reset();
      const double delta = full - params_m(c);
      ok &= std::abs(delta - ref) <= 0.02;
      d += fmt("%s delta %.3fM/%.2fM ", name, delta, ref);
    }
    report("2c", ok, "no low branch " + d);
  }
  {
    bool ok = true;
    std::string d;
    for (const char* name : {"I", "II"}) {
      VariantConfig c = variant(name);
      const double p0 = params_m(c), f0 = flops_g(c);
      c.upscaling = false;
      const double dp = 100 * (p0 - params_m(c)) / p0, df = 100 * (f0 - flops_g(c)) / f0;
      ok &= dp <= 1.5 && df >= 4 && df <= 10;
      d += fmt("%s params -%.2f%% FLOPs -%.1f%% ", name, dp, df);
    }
    report("2d", ok, "no upscaling " + d + "(limits 1.5%, 4-10%)");
  }
}

void criterion3() {
  const double rt = flops_g(variant("RT")), one = flops_g(variant("I")), two = flops_g(variant("II"));
  const double r1 = one / rt, r2 = two / one;
  report("3", within(r1, 1.92, 0.15) && within(r2, 4.61, 0.15),
         fmt("I/RT %.3f (1.92) II/I %.3f (4.61) [%s]", r1, r2, kCostConvention));
}

// ---------------------------------------------------------------------------

void criterion4() {
  using testing::grad_check;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(404);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto rnd = [&](Shape s) { return random_normal<double>(s, rng, 0.0, 1.0); };
  double worst = 0;
  int checks = 0;
  auto check = [&](double e) {
    worst = std::max(worst, e);
    ++checks;
  };
  for (int t = 0; t < 20; ++t) {
    const int n = pick(1, 2), c = pick(1, 3), c2 = pick(1, 3), h = pick(3, 7), w = pick(3, 7);
    const int k = pick(0, 1) ? 3 : 5, s = pick(1, 2);
    check(grad_check([&](const auto& v) { return conv2d<double>(v[0], v[1], v[2], s, Padding::same); },
                     {rnd({n, c, h, w}), rnd({c2, c, k, k}), rnd({c2, 1, 1, 1})}, rng));
    check(grad_check([&](const auto& v) { return depthwise_conv2d<double>(v[0], v[1], s, Padding::same); },
                     {rnd({n, c, h, w}), rnd({c, 1, k, k})}, rng));
    check(grad_check([&](const auto& v) { return conv_transpose2d<double>(v[0], v[1], v[2], 2, 1); },
                     {rnd({n, c, h, w}), rnd({c, c2, 4, 4}), rnd({c2, 1, 1, 1})}, rng));
    auto rm = constant(Tensor<double>(Shape{c, 1, 1, 1}));
    auto rv = constant(Tensor<double>(Shape{c, 1, 1, 1}, 1.0));
    for (Mode m : {Mode::train, Mode::infer})
      check(grad_check([&](const auto& v) { return batch_norm<double>(v[0], v[1], v[2], rm, rv, m); },
                       {rnd({2, c, h, w}), rnd({c, 1, 1, 1}), rnd({c, 1, 1, 1})}, rng));
    for (auto a : {ActivationKind::sigmoid, ActivationKind::swish, ActivationKind::eswish})
      check(grad_check([&](const auto& v) { return activation<double>(v[0], a, kEswishBeta); }, {rnd({n, c, h, w})},
                       rng));
    check(grad_check([&](const auto& v) { return avg_pool<double>(v[0], 2, 2); }, {rnd({n, c, h, w})}, rng));
    check(grad_check([&](const auto& v) { return global_avg_pool<double>(v[0]); }, {rnd({n, c, h, w})}, rng));
    check(grad_check([&](const auto& v) { return concat<double>({v[0], v[1]}); },
                     {rnd({n, c, h, w}), rnd({n, c2, h, w})}, rng));
    check(grad_check([&](const auto& v) { return residual_add<double>(v[0], v[1]); },
                     {rnd({n, c, h, w}), rnd({n, c, h, w})}, rng));
    check(grad_check([&](const auto& v) { return broadcast_mul<double>(v[0], v[1]); },
                     {rnd({n, c, h, w}), rnd({n, c, 1, 1})}, rng));
    const std::uint64_t ds = rng();
    check(grad_check(
        [&](const auto& v) {
          std::mt19937_64 r(ds);
          return dropout<double>(v[0], 0.3, Mode::train, r);
        },
        {rnd({n, c, h, w})}, rng));
    const Tensor<double> target = rnd({n, c, h, w});
    check(grad_check(
        [&](const auto& v) { return mse_loss<double>(std::vector<Var<double>>{v[0]}, std::vector<Tensor<double>>{target}); },
        {rnd({n, c, h, w})}, rng));
  }

  double dw = 0, bil = 0;
  for (int t = 0; t < 20; ++t) {
    const int c = pick(1, 5), h = pick(3, 10), w = pick(3, 10), s = pick(1, 2);
    const Tensor<double> x = rnd({1, c, h, w}), wd = rnd({c, 1, 3, 3});
    Tensor<double> dense(Shape{c, c, 3, 3});
    for (int ch = 0; ch < c; ++ch) std::copy(wd.plane(ch, 0), wd.plane(ch, 0) + 9, dense.plane(ch, ch));
    dw = std::max(dw, max_abs_diff(depthwise_conv2d<double>(constant(x), constant(wd), s, Padding::same)->value,
                                   conv2d<double>(constant(x), constant(dense), {}, s, Padding::same)->value));
    auto y = conv_transpose2d<double>(constant(x), constant(bilinear_upsampling_weight<double>(c)), {}, 2, 1);
    auto src = [&](int ch, int yy, int xx) {
      return (yy < 0 || xx < 0 || yy >= h || xx >= w) ? 0.0 : x.at(0, ch, yy, xx);
    };
    for (int ch = 0; ch < c; ++ch)
      for (int oy = 0; oy < 2 * h; ++oy)
        for (int ox = 0; ox < 2 * w; ++ox) {
          const double sy = (oy + 0.5) / 2 - 0.5, sx = (ox + 0.5) / 2 - 0.5;
          const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
          const double fy = sy - y0, fx = sx - x0;
          const double v = (1 - fy) * ((1 - fx) * src(ch, y0, x0) + fx * src(ch, y0, x0 + 1)) +
                           fy * ((1 - fx) * src(ch, y0 + 1, x0) + fx * src(ch, y0 + 1, x0 + 1));
          bil = std::max(bil, std::abs(v - y->value.at(0, ch, oy, ox)));
        }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report("4", worst < 1e-4 && dw < 1e-6 && bil < 1e-6 && secs < 300,
         fmt("%d gradient checks, worst rel err %.2e; depthwise %.1e; bilinear %.1e; %.1fs", checks, worst, dw,
             bil, secs));
}

void criterion5() {
  bool ok = true;
  std::string d;
  for (int phi = 0; phi <= 2; ++phi) {
    const double v = compound_scaling_check(1.2, 1.1, 1.15, phi);
    ok &= std::abs(v - std::pow(1.9203, phi)) < 1e-3 && within(v, std::pow(2.0, phi), 0.08);
    d += fmt("phi=%d %.4f ", phi, v);
  }
  const Scale scales[] = {Scale::B0, Scale::B2, Scale::B4, Scale::B5, Scale::B7};
  const int expect[] = {1, 1, 2, 3, 4};
  d += "depth";
  for (int i = 0; i < 5; ++i) {
    ok &= detection_depth(scales[i]) == expect[i];
    d += fmt(" %d", detection_depth(scales[i]));
  }
  report("5", ok, d);
}

void criterion6() {
  const double sigma = 2.0;
  const Tensor<float> m = confidence_map({36, 28, true}, 10, 10, 8, sigma);
  float mx = 0;
  for (float v : m.vec()) mx = std::max(mx, v);
  const double peak = m.at(0, 0, 3, 4);
  const double at_sigma = m.at(0, 0, 3, 6);
  const Keypoint a{from_grid(1, 8), from_grid(1, 8), true}, b{from_grid(7, 8), from_grid(5, 8), true};
  const Tensor<float> paf = paf_map(a, b, 10, 10, 8, 1.0);
  double worst = 0;
  int band = 0;
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) {
      const double vx = paf.at(0, 0, y, x), vy = paf.at(0, 1, y, x);
      if (vx == 0 && vy == 0) continue;
      ++band;
      worst = std::max(worst, std::abs(std::hypot(vx, vy) - 1));
    }
  report("6", mx == 1.0f && peak == 1.0 && std::abs(at_sigma - std::exp(-1.0)) < 1e-6 && band > 0 && worst < 1e-6,
         fmt("max %.6f at G, %.8f at sigma (e^-1 %.8f), PAF band %d cells |v|-1 <= %.1e", peak, at_sigma,
             std::exp(-1.0), band, worst));
}

void criterion7() {
  const CLRSchedule s(1e-2, 4, 2);
  bool ok = std::abs(s.lambda_limit - 7.303e-4) < 1e-7;
  ok &= std::abs(lr_at(s, 0) - 1e-2 / 3000) < 1e-15;
  for (int k = 0; k < 40; ++k) {
    ok &= std::abs(lr_at(s, 3.0 * k) - s.lambda_min) < 1e-12;
    ok &= std::abs(lr_at(s, 3.0 * k + 1.5) - s.peak(k)) < 1e-12;
    // Linear ramps on both sides of each peak.
    const double up = lr_at(s, 3.0 * k + 0.75), down = lr_at(s, 3.0 * k + 2.25);
    ok &= std::abs(up - (s.lambda_min + s.peak(k)) / 2) < 1e-12 && std::abs(up - down) < 1e-12;
    if (k > 0) ok &= s.peak(k) < s.peak(k - 1) && s.peak(k) > s.lambda_limit;
  }
  ok &= std::abs(s.peak(400) - s.lambda_limit) < 1e-9;
  report("7", ok, fmt("lambda_inf %.4e, floor %.4e, peaks %.4e %.4e ... %.4e", s.lambda_limit, s.lambda_min,
                      s.peak(0), s.peak(1), s.peak(400)));
}

// ---------------------------------------------------------------------------

constexpr double kDeskRate = 0.1;
constexpr int kDeskSteps = 500;
constexpr int kDeskEvalEvery = 25;

void criterion8() {
  const auto t0 = std::chrono::steady_clock::now();
  VariantConfig c = variant("RT");
  c.high_res = {128, 128};
  c.sigma = SigmaSchedule::parse("0:2");
  Model<float> model(c);
  model.initialize(1);
  const SyntheticSet set = make_synthetic_set(SyntheticOptions{});
  ImageCache cache;
  register_synthetic(set, cache);
  SGDState<float> sgd;
  TrainOptions opt;
  opt.epochs = kDeskSteps;
  opt.batch_size = 8;
  opt.seed = 3;
  opt.augmentation = AugmentationConfig::none();
  opt.fixed_rate = kDeskRate;
  double best = 0;
  long steps_at_best = 0;
  opt.after_epoch = [&](int, long step) {
    if (step % kDeskEvalEvery != 0) return false;
    recalibrate_batch_norm(model, set.index, cache);
    auto [pred, anns] = predict_crops(model, set.index, cache);
    const double m = pckh(pred, anns, 0.5).mean;
    std::cout << "      step " << step << "  train PCKh@50 " << m << std::endl;
    if (m > best) {
      best = m;
      steps_at_best = step;
    }
    return m >= 100.0;
  };
  const TrainResult r = train_loop(model, set.index, cache, opt, sgd);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report("8", best >= 100.0 && r.steps <= kDeskSteps,
         fmt("RT@128, 8 synthetic images: PCKh@50 %.1f%% after %ld steps (%ld run), %.0fs on %d thread(s)", best,
             steps_at_best, r.steps, secs, num_threads()));
}

void criterion9() {
  KeypointAnnotation a;
  a.head = {0, 0, 6, 8};  // l = 6
  std::vector<DecodedKeypoint> p;
  for (int j = 0; j < 16; ++j) {
    a.keypoints.push_back({10.0 * j, 0, true});
    p.push_back({10.0 * j, 0, 1});
  }
  p[8].x += 3.0;   // boundary at 0.5
  p[9].x += 3.5;   // miss
  p[0].y += 0.5;   // hit at 0.5 and at 0.1
  p[1].y += 0.61;  // hit at 0.5, miss at 0.1
  a.keypoints[2].visible = false;
  p[2].x += 50;
  const PCKhResult r50 = pckh({p}, {a}, 0.5), r10 = pckh({p}, {a}, 0.1);
  // Grouped joints: 14 listed, 13 visible.
  const bool exact50 = r50.mean == 100.0 * 12 / 13 && r50.group[0] == 50.0 && r50.group[4] == 100.0;
  const bool exact10 = r10.mean == 100.0 * 10 / 13 && r10.group[5] == 50.0 && r10.group[6] == 100.0;
  bool monotone = true;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd(0, 3);
  for (int run = 0; run < 50; ++run) {
    auto q = p;
    for (auto& k : q) {
      k.x += nd(rng);
      k.y += nd(rng);
    }
    monotone &= pckh({q}, {a}, 0.5).mean >= pckh({q}, {a}, 0.1).mean;
  }
  report("9", exact50 && exact10 && monotone,
         fmt("fixture PCKh@50 %.4f (12/13) PCKh@10 %.4f (10/13), monotone over 50 runs: %s", r50.mean, r10.mean,
             monotone ? "yes" : "no"));
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

void criterion10(const std::string& cli) {
  const fs::path root = fs::temp_directory_path() / "effipose_acceptance_repro";
  fs::remove_all(root);
  const auto run = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
  };
  int rc = run("synth --out " + (root / "data").string() + " --count 4 --size 64 --seed 5");
  std::string detail;
  bool ok = rc == 0;
  std::vector<std::string> blobs[2];
  for (int i = 0; ok && i < 2; ++i) {
    const fs::path out = root / ("run" + std::to_string(i));
    rc = run("train --variant RT --resolution 64 --batch 2 --epochs 2 --seed 11 --data " +
             (root / "data" / "annotations.csv").string() + " --out " + out.string());
    ok &= rc == 0;
    for (const char* f : {"weights.epw", "optimizer.epw", "state.txt", "config.txt"})
      blobs[i].push_back(slurp(out / "checkpoint_epoch_2" / f));
  }
  if (ok) {
    ok = blobs[0] == blobs[1] && !blobs[0][0].empty();
    detail = fmt("two seeded train runs, checkpoint bytes %s (%zu-byte weights)", ok ? "identical" : "differ",
                 blobs[0][0].size());
  } else {
    detail = "train command failed (exit " + std::to_string(rc) + ")";
  }
  report("10", ok, detail);
  fs::remove_all(root);
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli = "effipose";
  bool skip_training = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cli" && i + 1 < argc) cli = argv[++i];
    else if (a == "--skip-training") skip_training = true;
  }
  if (const char* t = std::getenv("EFFIPOSE_THREADS")) set_num_threads(std::atoi(t));
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  criterion7();
  if (skip_training) std::cout << "SKIP  criterion 8  --skip-training\n";
  else criterion8();
  criterion9();
  criterion10(cli);
  std::cout << (failures ? "FAILED " : "ALL PASSED ") << failures << " criterion line(s) failing" << std::endl;
  return failures ? 1 : 0;
}
