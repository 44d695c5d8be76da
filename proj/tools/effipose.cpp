// effipose: build, cost, train, evaluate and run pose-network variants.
#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "effipose/effipose.hpp"

namespace fs = std::filesystem;
using namespace effipose;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

class MissingFile : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelFlags {
  std::string variant = "RT";
  std::string config;
  int resolution = 0;
  bool no_low_branch = false;
  bool no_skeleton = false;
  int passes = 0;
  bool no_upscaling = false;
  double lr_max = 0;
  int batch = 0;

  void add(CLI::App* cmd) {
    cmd->add_option("--variant", variant, "RT, I, II, III or IV");
    cmd->add_option("--config", config, "key=value variant config (overrides --variant)");
    cmd->add_option("--resolution", resolution, "square input size override");
    cmd->add_flag("--no-low-branch", no_low_branch, "drop the low-resolution branch");
    cmd->add_flag("--no-skeleton", no_skeleton, "drop the PAF pass");
    cmd->add_option("--passes", passes, "keypoint detection passes (1-3)");
    cmd->add_flag("--no-upscaling", no_upscaling, "drop the transposed-conv upscaling");
  }

  VariantConfig resolve() const {
    VariantConfig c;
    if (!config.empty()) {
      if (!fs::exists(config)) throw MissingFile("config file not found: " + config);
      c = load_config(config);
    } else {
      c = effipose::variant(variant);
    }
    if (resolution > 0) c.high_res = {resolution, resolution};
    if (no_low_branch) c.low_backbone.reset();
    if (no_skeleton) c.skeleton_pass = false;
    if (passes > 0) c.keypoint_passes = passes;
    if (no_upscaling) c.upscaling = false;
    if (lr_max > 0) c.lambda_max = lr_max;
    if (batch > 0) c.batch_size = batch;
    c.validate();
    return c;
  }
};

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw MissingFile(std::string(what) + " path is required");
  if (!fs::exists(path)) throw MissingFile(std::string(what) + " not found: " + path);
}

void write_resolved(const fs::path& out, const VariantConfig& c) {
  fs::create_directories(out);
  std::ofstream(out / "config.txt") << format_config(c);
}

void apply_threads(int threads) {
  if (threads <= 0)
    if (const char* env = std::getenv("EFFIPOSE_THREADS")) threads = std::atoi(env);
  if (threads > 0) set_num_threads(threads);
}

std::vector<double> parse_scales(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("bad scale '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("--scales needs at least one value");
  return out;
}

DatasetIndex load_data(const std::string& path) {
  require_file(path, "annotation file");
  DatasetIndex idx = load_annotations(path);
  for (const auto& r : idx.rejected) std::cerr << "rejected " << r << "\n";
  return idx;
}

int cmd_check_scaling() {
  const double alpha = 1.2, beta = 1.1, gamma = 1.15;
  std::printf("phi  (a*b^2*g^2)^phi   2^phi   ratio\n");
  for (int phi = 0; phi <= 7; ++phi) {
    const double v = compound_scaling_check(alpha, beta, gamma, phi);
    std::printf("%-4d %14.4f %9.0f %8.4f\n", phi, v, std::pow(2.0, phi), v / std::pow(2.0, phi));
  }
  std::printf("\nvariant  high  alpha^phi  D\n");
  for (const auto& name : variant_names()) {
    const VariantConfig c = variant(name);
    std::printf("%-8s %-5s %9.1f  %d\n", name.c_str(), to_string(c.high_backbone),
                scale_row(c.high_backbone).depth_factor, detection_depth(c.high_backbone));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"effipose: architecture accounting, training and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (fallback: EFFIPOSE_THREADS)");

  ModelFlags mf;

  auto* summarize_cmd = app.add_subcommand("summarize", "per-layer cost table of a variant");
  mf.add(summarize_cmd);
  std::string out_dir;
  summarize_cmd->add_option("--out", out_dir, "also write the resolved config here");

  auto* scaling_cmd = app.add_subcommand("check-scaling", "compound scaling ratios and depth table");

  auto* train_cmd = app.add_subcommand("train", "train a variant on an annotation file");
  mf.add(train_cmd);
  std::string data, resume, init_weights;
  std::uint64_t seed = 0;
  int epochs = 1, checkpoint_every = 1;
  long max_steps = 0;
  bool no_augment = false;
  train_cmd->add_option("--data", data, "annotation CSV")->required();
  train_cmd->add_option("--out", out_dir, "output directory")->required();
  train_cmd->add_option("--seed", seed);
  train_cmd->add_option("--epochs", epochs);
  train_cmd->add_option("--batch", mf.batch, "batch size (default per variant)");
  train_cmd->add_option("--lr-max", mf.lr_max, "peak learning rate");
  train_cmd->add_option("--checkpoint-every", checkpoint_every, "epochs between checkpoints");
  train_cmd->add_option("--max-steps", max_steps, "stop after this many steps");
  train_cmd->add_option("--resume", resume, "checkpoint directory to resume from");
  train_cmd->add_option("--init-weights", init_weights, "weights loaded by name intersection");
  train_cmd->add_flag("--no-augment", no_augment, "disable flip/scale/rotation augmentation");

  auto* eval_cmd = app.add_subcommand("eval", "PCKh of predictions or of a trained model");
  mf.add(eval_cmd);
  std::string predictions, weights, scales = "0.75,1,1.25";
  bool flip = false;
  eval_cmd->add_option("--data", data, "annotation CSV")->required();
  eval_cmd->add_option("--predictions", predictions, "prediction file to score");
  eval_cmd->add_option("--weights", weights, "weights to run instead of --predictions");
  eval_cmd->add_option("--scales", scales, "comma-separated test scales");
  eval_cmd->add_flag("--flip", flip, "average with horizontally flipped inputs");
  eval_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* predict_cmd = app.add_subcommand("predict", "decode keypoints for images");
  mf.add(predict_cmd);
  std::vector<std::string> image_paths;
  predict_cmd->add_option("--weights", weights)->required();
  predict_cmd->add_option("--data", data, "annotation CSV (crops about each person)");
  predict_cmd->add_option("--image", image_paths, "PPM image(s), resized whole");
  predict_cmd->add_option("--scales", scales);
  predict_cmd->add_flag("--flip", flip);
  predict_cmd->add_option("--out", out_dir)->required();

  auto* weights_cmd = app.add_subcommand("weights", "list the records of a weight file");
  std::string weight_file;
  weights_cmd->add_option("file", weight_file)->required();

  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic disk-pose dataset");
  SyntheticOptions so;
  synth_cmd->add_option("--out", out_dir)->required();
  synth_cmd->add_option("--count", so.count);
  synth_cmd->add_option("--size", so.size);
  synth_cmd->add_option("--seed", so.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    apply_threads(threads);
    if (*scaling_cmd) return cmd_check_scaling();

    if (*summarize_cmd) {
      const VariantConfig c = mf.resolve();
      std::cout << summarize(build_variant(c));
      if (!out_dir.empty()) write_resolved(out_dir, c);
      return 0;
    }

    if (*synth_cmd) {
      const auto set = make_synthetic_set(so);
      std::cout << write_synthetic_set(set, out_dir) << "\n";
      return 0;
    }

    if (*weights_cmd) {
      require_file(weight_file, "weight file");
      std::ifstream is(weight_file, std::ios::binary);
      std::size_t total = 0;
      for (const auto& r : read_records(is)) {
        std::cout << r.name << "\t[";
        for (std::size_t i = 0; i < r.dims.size(); ++i) std::cout << (i ? "," : "") << r.dims[i];
        std::cout << "]\t" << r.values.size() << "\n";
        total += r.values.size();
      }
      std::cout << "total " << total << "\n";
      return 0;
    }

    if (*train_cmd) {
      const VariantConfig c = mf.resolve();
      const DatasetIndex idx = load_data(data);
      const fs::path out(out_dir);
      write_resolved(out, c);
      Model<float> model(c);
      model.initialize(seed);
      if (!init_weights.empty()) {
        require_file(init_weights, "initial weights");
        const auto loaded = load_weights(model.params(), init_weights, LoadMode::transfer);
        std::cerr << "loaded " << loaded.size() << " tensors from " << init_weights << "\n";
      }
      SGDState<float> sgd;
      TrainState state;
      if (!resume.empty()) {
        require_file(resume, "checkpoint");
        state = load_checkpoint(resume, model, sgd);
      }
      std::ofstream log(out / "metrics.tsv", state.step > 0 ? std::ios::app : std::ios::trunc);
      if (state.step == 0) log << "step\tepoch\tlambda\tsigma\tloss\n";
      TrainOptions opt;
      opt.epochs = epochs;
      opt.seed = seed;
      opt.log = &log;
      opt.max_steps = max_steps;
      opt.checkpoint_dir = out;
      opt.checkpoint_every = std::max(1, checkpoint_every);
      if (no_augment) opt.augmentation = AugmentationConfig::none();
      ImageCache cache;
      try {
        const TrainResult r = train_loop(model, idx, cache, opt, sgd, state);
        std::cout << "steps " << r.steps << "  final loss "
                  << (r.losses.empty() ? 0.0 : r.losses.back()) << "  checkpoint "
                  << r.last_checkpoint << "\n";
      } catch (const DivergenceError& e) {
        std::cerr << "diverged: " << e.what() << "\n";
        return kExitDiverged;
      }
      return 0;
    }

    if (*eval_cmd) {
      const DatasetIndex idx = load_data(data);
      std::vector<KeypointAnnotation> anns;
      for (const auto& r : idx.records) anns.push_back(r.annotation);
      std::vector<std::vector<DecodedKeypoint>> preds;
      const fs::path out(out_dir);
      fs::create_directories(out);
      if (!predictions.empty()) {
        require_file(predictions, "predictions");
        preds = load_predictions(predictions);
      } else if (!weights.empty()) {
        require_file(weights, "weights");
        const VariantConfig c = mf.resolve();
        write_resolved(out, c);
        Model<float> model(c);
        model.initialize(0);
        load_weights(model.params(), weights, LoadMode::strict);
        ImageCache cache;
        preds = predict_dataset(model, idx, cache, parse_scales(scales), flip);
      } else {
        throw ConfigError("eval needs --predictions or --weights");
      }
      const EvalReport rep = evaluate(preds, anns);
      const std::string text = format_report(rep);
      std::ofstream(out / "report.txt") << text;
      std::cout << text;
      return 0;
    }

    if (*predict_cmd) {
      require_file(weights, "weights");
      const VariantConfig c = mf.resolve();
      const fs::path out(out_dir);
      write_resolved(out, c);
      Model<float> model(c);
      model.initialize(0);
      load_weights(model.params(), weights, LoadMode::strict);
      std::ofstream os(out / "predictions.csv");
      os << "# image, then x, y, score per keypoint (source pixels)\n";
      const auto sc = parse_scales(scales);
      if (!data.empty()) {
        const DatasetIndex idx = load_data(data);
        ImageCache cache;
        const auto preds = predict_dataset(model, idx, cache, sc, flip);
        for (std::size_t i = 0; i < preds.size(); ++i)
          os << format_prediction(idx.records[i].image_path, preds[i]) << "\n";
      }
      for (const auto& path : image_paths) {
        require_file(path, "image");
        const Image img = read_ppm(path);
        const Resolution res = c.high_res;
        Affine t{static_cast<double>(res.w) / img.w, 0, 0, static_cast<double>(res.h) / img.h, 0, 0};
        t.tx = (t.a - 1) / 2;
        t.ty = (t.d - 1) / 2;
        const Image resized = warp_image(img, t, res.h, res.w);
        Tensor<float> x(Shape{1, 3, res.h, res.w});
        for (int ch = 0; ch < 3; ++ch)
          for (int y = 0; y < res.h; ++y)
            for (int xx = 0; xx < res.w; ++xx) x.at(0, ch, y, xx) = normalize_pixel(resized.at(ch, y, xx));
        const auto maps = multi_scale_inference(model, x, sc, flip);
        os << format_prediction(path, to_source(decode_keypoints(maps, 0, 1), t)) << "\n";
      }
      std::cout << (out / "predictions.csv").string() << "\n";
      return 0;
    }
  } catch (const MissingFile& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const WeightFileError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
