#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "effipose/evaluation.hpp"
#include "effipose/optimizer.hpp"

namespace effipose {

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::string last_good)
      : std::runtime_error(what), last_checkpoint(std::move(last_good)) {}
  std::string last_checkpoint;  // empty if none was written
};

/// Sum over heads of the per-head mean squared error.
inline Var<float> multi_head_loss(const std::vector<Var<float>>& outputs,
                                  const std::vector<Tensor<float>>& targets) {
  if (outputs.size() != targets.size())
    throw DimensionError(axis_mismatch("multi_head_loss", "head count",
                                       static_cast<int>(outputs.size()),
                                       static_cast<int>(targets.size())));
  Var<float> total;
  for (std::size_t h = 0; h < outputs.size(); ++h) {
    Var<float> l = mse_loss<float>(std::vector<Var<float>>{outputs[h]},
                                   std::vector<Tensor<float>>{targets[h]});
    total = total ? residual_add<float>(total, l) : l;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Checkpoints: <dir>/weights.epw, config.txt, optimizer.epw, state.txt

struct TrainState {
  int epoch = 0;  // epochs completed
  long step = 0;
  std::uint64_t seed = 0;
};

inline void save_checkpoint(const std::filesystem::path& dir, Model<float>& model,
                            const SGDState<float>& sgd, const TrainState& st) {
  std::filesystem::create_directories(dir);
  save_weights(model.params(), (dir / "weights.epw").string());
  {
    std::ofstream os(dir / "optimizer.epw", std::ios::binary);
    if (!os) throw WeightFileError("cannot write " + (dir / "optimizer.epw").string());
    write_records(os, velocity_records(sgd));
  }
  std::ofstream(dir / "config.txt") << format_config(model.config());
  std::ofstream(dir / "state.txt") << "epoch=" << st.epoch << "\nstep=" << st.step
                                   << "\nseed=" << st.seed << "\n";
}

inline TrainState load_checkpoint(const std::filesystem::path& dir, Model<float>& model,
                                  SGDState<float>& sgd) {
  load_weights(model.params(), (dir / "weights.epw").string(), LoadMode::strict);
  std::ifstream is(dir / "optimizer.epw", std::ios::binary);
  if (!is) throw WeightFileError("missing optimizer state in " + dir.string());
  load_velocity(sgd, model.params(), read_records(is));
  TrainState st;
  std::ifstream ss(dir / "state.txt");
  if (!ss) throw WeightFileError("missing state.txt in " + dir.string());
  std::string line;
  while (std::getline(ss, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    if (k == "epoch") st.epoch = std::stoi(v);
    else if (k == "step") st.step = std::stol(v);
    else if (k == "seed") st.seed = std::stoull(v);
  }
  return st;
}

// ---------------------------------------------------------------------------

struct TrainOptions {
  int epochs = 1;
  int batch_size = 0;  // 0: the config's batch size
  std::uint64_t seed = 0;
  AugmentationConfig augmentation;
  std::optional<double> fixed_rate;  // bypasses the cyclical schedule
  long max_steps = 0;                // 0: no limit
  std::ostream* log = nullptr;       // tab-separated: step, epoch_fraction, lambda, sigma, loss
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  int checkpoint_every = 1;
  /// Called after each epoch with the number of completed epochs; return
  /// true to stop.
  std::function<bool(int, long)> after_epoch;
};

struct TrainResult {
  long steps = 0;
  int epochs = 0;
  std::vector<double> losses;
  std::string last_checkpoint;
  bool stopped_early = false;
};

inline CLRSchedule schedule_for(const VariantConfig& c) {
  return CLRSchedule(c.lambda_max, c.sigma.sigma_initial(), c.sigma.sigma_final());
}

/// Minibatch SGD over `data`, resuming from `state`.
inline TrainResult train_loop(Model<float>& model, const DatasetIndex& data, ImageCache& images,
                              const TrainOptions& opt, SGDState<float>& sgd, TrainState state = {}) {
  if (data.records.empty()) throw DataError("training set is empty");
  const VariantConfig& cfg = model.config();
  const int batch = opt.batch_size > 0 ? opt.batch_size : cfg.batch_size;
  const std::size_t n = data.records.size();
  const long per_epoch = static_cast<long>((n + batch - 1) / batch);
  const CLRSchedule clr = schedule_for(cfg);
  const ModelGraph& graph = model.graph();
  TrainResult res;
  state.seed = opt.seed;
  for (int epoch = state.epoch; epoch < opt.epochs; ++epoch) {
    const auto order = epoch_order(n, opt.seed, epoch);
    for (long b = 0; b < per_epoch; ++b) {
      if (opt.max_steps > 0 && state.step >= opt.max_steps) {
        res.stopped_early = true;
        return res;
      }
      const std::size_t lo = static_cast<std::size_t>(b) * batch;
      const std::size_t hi = std::min(n, lo + batch);
      const std::span<const std::size_t> ids(order.data() + lo, hi - lo);
      const Batch bt = make_batch(data, ids, images, graph, opt.augmentation, opt.seed, epoch);
      const double epoch_fraction = epoch + static_cast<double>(b) / per_epoch;
      const double rate = opt.fixed_rate ? *opt.fixed_rate : lr_at(clr, epoch_fraction);

      std::mt19937_64 drop_rng(sample_seed(opt.seed ^ 0xD50Full, epoch, static_cast<std::size_t>(b)));
      RunContext ctx;
      ctx.mode = Mode::train;
      ctx.rng = &drop_rng;
      model.params().zero_grad();
      auto outputs = model.forward(constant(bt.images), ctx);
      Var<float> loss = multi_head_loss(outputs, bt.targets);
      const double lv = loss->value[0];
      if (opt.log)
        *opt.log << state.step << "\t" << std::setprecision(6) << epoch_fraction << "\t"
                 << std::setprecision(8) << rate << "\t" << bt.sigma << "\t" << lv << "\n";
      if (!std::isfinite(lv))
        throw DivergenceError("loss is not finite at step " + std::to_string(state.step) +
                                  (res.last_checkpoint.empty()
                                       ? std::string(" (no checkpoint written yet)")
                                       : " (last good checkpoint: " + res.last_checkpoint + ")"),
                              res.last_checkpoint);
      backward(loss);
      sgd_step(model.params(), sgd, rate);
      res.losses.push_back(lv);
      ++state.step;
      ++res.steps;
    }
    state.epoch = epoch + 1;
    res.epochs = state.epoch;
    const bool last = state.epoch == opt.epochs;
    if (!opt.checkpoint_dir.empty() && (last || state.epoch % opt.checkpoint_every == 0)) {
      const auto dir = opt.checkpoint_dir / ("checkpoint_epoch_" + std::to_string(state.epoch));
      save_checkpoint(dir, model, sgd, state);
      res.last_checkpoint = dir.string();
    }
    if (opt.after_epoch && opt.after_epoch(state.epoch, state.step)) {
      res.stopped_early = !last;
      break;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------

/// Replaces BN running statistics with the cumulative average of batch
/// statistics over un-augmented passes of `data`.
inline void recalibrate_batch_norm(Model<float>& model, const DatasetIndex& data, ImageCache& images,
                                   int batch = 8, std::uint64_t seed = 0) {
  if (data.records.empty()) throw DataError("recalibration set is empty");
  const ModelGraph& graph = model.graph();
  std::vector<std::size_t> ids(data.records.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  std::mt19937_64 drop_rng(seed);
  RunContext ctx;
  ctx.mode = Mode::train;
  ctx.rng = &drop_rng;
  int k = 0;
  for (std::size_t lo = 0; lo < ids.size(); lo += batch, ++k) {
    const std::size_t hi = std::min(ids.size(), lo + batch);
    const Batch bt = make_batch(data, std::span<const std::size_t>(ids.data() + lo, hi - lo), images,
                                graph, AugmentationConfig::none(), 0, 0);
    ctx.bn.momentum = static_cast<double>(k) / (k + 1);
    model.forward(constant(bt.images), ctx);
  }
}

/// Single-scale batched prediction on the un-augmented crops; coordinates in
/// the model-input frame together with the matching annotations.
inline std::pair<std::vector<std::vector<DecodedKeypoint>>, std::vector<KeypointAnnotation>>
predict_crops(Model<float>& model, const DatasetIndex& data, ImageCache& images, int batch = 8) {
  std::vector<std::vector<DecodedKeypoint>> preds;
  std::vector<KeypointAnnotation> anns;
  const ModelGraph& graph = model.graph();
  const OutputHead& head = graph.final_head();
  std::vector<std::size_t> ids(data.records.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  RunContext ctx;
  ctx.mode = Mode::infer;
  for (std::size_t lo = 0; lo < ids.size(); lo += batch) {
    const std::size_t hi = std::min(ids.size(), lo + batch);
    const Batch bt = make_batch(data, std::span<const std::size_t>(ids.data() + lo, hi - lo), images,
                                graph, AugmentationConfig::none(), 0, 0);
    auto outputs = model.forward(constant(bt.images), ctx);
    for (std::size_t i = 0; i < hi - lo; ++i) {
      preds.push_back(decode_keypoints(outputs.back()->value, static_cast<int>(i), head.stride));
      anns.push_back(bt.annotations[i]);
    }
  }
  return {preds, anns};
}

/// Multi-scale prediction per record, returned in source-image pixels.
inline std::vector<std::vector<DecodedKeypoint>> predict_dataset(Model<float>& model,
                                                                 const DatasetIndex& data,
                                                                 ImageCache& images,
                                                                 const std::vector<double>& scales,
                                                                 bool flip) {
  std::vector<std::vector<DecodedKeypoint>> out;
  const ModelGraph& graph = model.graph();
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const std::size_t id[1] = {i};
    const Batch bt = make_batch(data, std::span<const std::size_t>(id, 1), images, graph,
                                AugmentationConfig::none(), 0, 0);
    const Tensor<float> maps = multi_scale_inference(model, bt.images, scales, flip);
    out.push_back(to_source(decode_keypoints(maps, 0, 1), bt.to_input[0]));
  }
  return out;
}

inline std::string format_prediction(const std::string& image, const std::vector<DecodedKeypoint>& kps) {
  std::ostringstream os;
  os << std::setprecision(7) << image;
  for (const auto& k : kps) os << "," << k.x << "," << k.y << "," << k.score;
  return os.str();
}

/// Reads prediction lines written by `format_prediction`.
inline std::vector<std::vector<DecodedKeypoint>> load_predictions(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open predictions " + path);
  std::vector<std::vector<DecodedKeypoint>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string f;
    std::vector<double> v;
    std::getline(ss, f, ',');
    while (std::getline(ss, f, ',')) {
      try {
        v.push_back(std::stod(f));
      } catch (const std::exception&) {
        throw DataError("predictions line " + std::to_string(lineno) + ": bad number '" + f + "'");
      }
    }
    if (v.size() % 3 != 0)
      throw DataError("predictions line " + std::to_string(lineno) + ": expected x,y,score triples");
    std::vector<DecodedKeypoint> kps;
    for (std::size_t i = 0; i < v.size(); i += 3) kps.push_back({v[i], v[i + 1], v[i + 2]});
    out.push_back(std::move(kps));
  }
  return out;
}

}  // namespace effipose
