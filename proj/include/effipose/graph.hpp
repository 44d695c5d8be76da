#pragma once

#include <cmath>
#include <map>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "effipose/ops.hpp"

namespace effipose {

/// Per-sample feature shape (channels, height, width).
struct FeatureShape {
  int c = 0, h = 0, w = 0;
  constexpr bool operator==(const FeatureShape&) const = default;
  std::string str() const {
    return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
  }
};

enum class LayerKind {
  input,
  conv,
  depthwise_conv,
  transposed_conv,
  batch_norm,
  activation,
  avg_pool,
  global_avg_pool,
  concat,
  dropout,
  add,
  channel_gate,
};

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::input: return "Input";
    case LayerKind::conv: return "Conv";
    case LayerKind::depthwise_conv: return "DepthwiseConv";
    case LayerKind::transposed_conv: return "ConvT";
    case LayerKind::batch_norm: return "BN";
    case LayerKind::activation: return "Act";
    case LayerKind::avg_pool: return "AvgPool";
    case LayerKind::global_avg_pool: return "GlobalAvgPool";
    case LayerKind::concat: return "Concat";
    case LayerKind::dropout: return "Dropout";
    case LayerKind::add: return "Add";
    case LayerKind::channel_gate: return "Gate";
  }
  return "?";
}

enum class InitKind { he_normal, zeros, ones, bilinear };

struct ParamSpec {
  std::string name;
  Shape shape;
  bool trainable = true;
  InitKind init = InitKind::zeros;
  int fan_in = 1;
};

/// One node of the declarative network description. Shapes are resolved at
/// construction, so a graph can be executed or costed without running it.
struct LayerSpec {
  std::string name;
  std::string stage;  // grouping label for summaries, e.g. "high_backbone/block2"
  LayerKind kind = LayerKind::input;
  std::vector<std::size_t> inputs;
  FeatureShape out;
  int kernel = 1;
  int stride = 1;
  Padding padding = Padding::same;
  int crop = 0;  // transposed conv only
  ActivationKind act = ActivationKind::linear;
  double beta = 1.0;
  double rate = 0.0;  // dropout
  std::vector<std::string> params;  // conv: weight[, bias]; bn: gamma, beta, mean, var
};

class LayerGraph {
 public:
  std::vector<LayerSpec> layers;
  std::vector<ParamSpec> params;

  const LayerSpec& layer(std::size_t id) const { return layers.at(id); }
  std::size_t size() const { return layers.size(); }

  const ParamSpec* find_param(const std::string& name) const {
    auto it = param_index_.find(name);
    return it == param_index_.end() ? nullptr : &params[it->second];
  }

  void add_param(ParamSpec p) {
    if (param_index_.count(p.name))
      throw ConfigError("duplicate parameter name: " + p.name);
    param_index_.emplace(p.name, params.size());
    params.push_back(std::move(p));
  }

  std::size_t find_layer(const std::string& name) const {
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].name == name) return i;
    throw ConfigError("no layer named " + name);
  }

 private:
  std::unordered_map<std::string, std::size_t> param_index_;
};

/// Appends layers to a graph with shape inference and parameter declaration.
class GraphBuilder {
 public:
  explicit GraphBuilder(LayerGraph& g) : g_(g) {}

  LayerGraph& graph() { return g_; }
  const FeatureShape& shape(std::size_t id) const { return g_.layers.at(id).out; }

  void set_stage(std::string stage) { stage_ = std::move(stage); }
  const std::string& stage() const { return stage_; }

  std::size_t input(const std::string& name, FeatureShape s) {
    if (s.c <= 0 || s.h <= 0 || s.w <= 0) throw DimensionError("input shape must be positive");
    LayerSpec l;
    l.name = name;
    l.kind = LayerKind::input;
    l.out = s;
    return push(std::move(l));
  }

  std::size_t conv(const std::string& name, std::size_t in, int out_channels, int kernel,
                   int stride, bool bias, Padding padding = Padding::same) {
    const FeatureShape s = shape(in);
    const ConvGeometry geo = conv_geometry(s.h, s.w, kernel, stride, padding);
    LayerSpec l = base(name, LayerKind::conv, {in});
    l.kernel = kernel;
    l.stride = stride;
    l.padding = padding;
    l.out = {out_channels, geo.out_h, geo.out_w};
    const int fan_in = s.c * kernel * kernel;
    l.params.push_back(param(name + "/kernel", Shape{out_channels, s.c, kernel, kernel}, true,
                             InitKind::he_normal, fan_in));
    if (bias)
      l.params.push_back(param(name + "/bias", Shape{out_channels, 1, 1, 1}, true, InitKind::zeros));
    return push(std::move(l));
  }

  std::size_t depthwise(const std::string& name, std::size_t in, int kernel, int stride) {
    const FeatureShape s = shape(in);
    const ConvGeometry geo = conv_geometry(s.h, s.w, kernel, stride, Padding::same);
    LayerSpec l = base(name, LayerKind::depthwise_conv, {in});
    l.kernel = kernel;
    l.stride = stride;
    l.out = {s.c, geo.out_h, geo.out_w};
    l.params.push_back(param(name + "/depthwise_kernel", Shape{s.c, 1, kernel, kernel}, true,
                             InitKind::he_normal, kernel * kernel));
    return push(std::move(l));
  }

  /// Factor-2 upsampler: kernel 4, stride 2, crop 1, bilinear-initialized.
  std::size_t upsample2x(const std::string& name, std::size_t in) {
    const FeatureShape s = shape(in);
    const ConvGeometry geo = transposed_geometry(s.h, s.w, 4, 2, 1);
    LayerSpec l = base(name, LayerKind::transposed_conv, {in});
    l.kernel = 4;
    l.stride = 2;
    l.crop = 1;
    l.out = {s.c, geo.in_h, geo.in_w};
    l.params.push_back(param(name + "/kernel", Shape{s.c, s.c, 4, 4}, true, InitKind::bilinear));
    l.params.push_back(param(name + "/bias", Shape{s.c, 1, 1, 1}, true, InitKind::zeros));
    return push(std::move(l));
  }

  std::size_t batch_norm(const std::string& name, std::size_t in) {
    const FeatureShape s = shape(in);
    LayerSpec l = base(name, LayerKind::batch_norm, {in});
    l.out = s;
    const Shape vs{s.c, 1, 1, 1};
    l.params.push_back(param(name + "/gamma", vs, true, InitKind::ones));
    l.params.push_back(param(name + "/beta", vs, true, InitKind::zeros));
    l.params.push_back(param(name + "/moving_mean", vs, false, InitKind::zeros));
    l.params.push_back(param(name + "/moving_variance", vs, false, InitKind::ones));
    return push(std::move(l));
  }

  std::size_t activation(const std::string& name, std::size_t in, ActivationKind kind,
                         double beta = 1.0) {
    LayerSpec l = base(name, LayerKind::activation, {in});
    l.out = shape(in);
    l.act = kind;
    l.beta = beta;
    return push(std::move(l));
  }

  std::size_t avg_pool(const std::string& name, std::size_t in, int window, int stride) {
    const FeatureShape s = shape(in);
    if (window > s.h || window > s.w)
      throw DimensionError("avg_pool: window larger than input " + s.str());
    LayerSpec l = base(name, LayerKind::avg_pool, {in});
    l.kernel = window;
    l.stride = stride;
    l.out = {s.c, (s.h - window) / stride + 1, (s.w - window) / stride + 1};
    return push(std::move(l));
  }

  std::size_t global_avg_pool(const std::string& name, std::size_t in) {
    LayerSpec l = base(name, LayerKind::global_avg_pool, {in});
    l.out = {shape(in).c, 1, 1};
    return push(std::move(l));
  }

  std::size_t concat(const std::string& name, const std::vector<std::size_t>& ins) {
    if (ins.empty()) throw DimensionError("concat: no inputs");
    const FeatureShape s0 = shape(ins[0]);
    int channels = 0;
    for (auto id : ins) {
      const FeatureShape s = shape(id);
      if (s.h != s0.h || s.w != s0.w)
        throw DimensionError("concat '" + name + "': spatial mismatch " + s0.str() + " vs " +
                             s.str() + " (layer " + g_.layers[id].name + ")");
      channels += s.c;
    }
    LayerSpec l = base(name, LayerKind::concat, ins);
    l.out = {channels, s0.h, s0.w};
    return push(std::move(l));
  }

  std::size_t dropout(const std::string& name, std::size_t in, double rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
    LayerSpec l = base(name, LayerKind::dropout, {in});
    l.out = shape(in);
    l.rate = rate;
    return push(std::move(l));
  }

  std::size_t add(const std::string& name, std::size_t a, std::size_t b) {
    if (!(shape(a) == shape(b)))
      throw DimensionError("add '" + name + "': " + shape(a).str() + " vs " + shape(b).str());
    LayerSpec l = base(name, LayerKind::add, {a, b});
    l.out = shape(a);
    return push(std::move(l));
  }

  std::size_t channel_gate(const std::string& name, std::size_t map, std::size_t gate) {
    const FeatureShape m = shape(map), g = shape(gate);
    if (g.c != m.c || g.h != 1 || g.w != 1)
      throw DimensionError("gate '" + name + "': " + g.str() + " does not gate " + m.str());
    LayerSpec l = base(name, LayerKind::channel_gate, {map, gate});
    l.out = m;
    return push(std::move(l));
  }

 private:
  LayerSpec base(const std::string& name, LayerKind kind, std::vector<std::size_t> ins) {
    for (auto id : ins)
      if (id >= g_.layers.size()) throw ConfigError("layer '" + name + "' has dangling input");
    LayerSpec l;
    l.name = name;
    l.stage = stage_;
    l.kind = kind;
    l.inputs = std::move(ins);
    return l;
  }

  std::string param(const std::string& name, Shape s, bool trainable, InitKind init,
                    int fan_in = 1) {
    g_.add_param(ParamSpec{name, s, trainable, init, fan_in});
    return name;
  }

  std::size_t push(LayerSpec l) {
    g_.layers.push_back(std::move(l));
    return g_.layers.size() - 1;
  }

  LayerGraph& g_;
  std::string stage_;
};

// ---------------------------------------------------------------------------

/// Named parameter storage shared by every graph built from the same config
/// (e.g. one graph per test scale).
template <class T>
class ParamStore {
 public:
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return params_.size(); }

  Parameter<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return params_[it->second];
  }
  const Parameter<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return params_[it->second];
  }

  std::vector<Parameter<T>>& all() { return params_; }
  const std::vector<Parameter<T>>& all() const { return params_; }

  void add(const std::string& name, Tensor<T> value, bool trainable) {
    if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
    index_.emplace(name, params_.size());
    Var<T> v = trainable ? leaf(std::move(value)) : constant(std::move(value));
    params_.push_back(Parameter<T>{name, std::move(v), trainable});
  }

  /// Creates every parameter declared by `graph` with seeded initializers.
  /// Parameters already present (shared across graphs) are left untouched.
  void initialize(const LayerGraph& graph, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (const auto& spec : graph.params) {
      if (contains(spec.name)) {
        if (!(get(spec.name).value().shape() == spec.shape))
          throw DimensionError("parameter " + spec.name + " shape " +
                               get(spec.name).value().shape().str() + " vs " + spec.shape.str());
        continue;
      }
      add(spec.name, make_initial(spec, rng), spec.trainable);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.var->zero_grad();
  }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value().size();
    return n;
  }

 private:
  template <class Rng>
  static Tensor<T> make_initial(const ParamSpec& spec, Rng& rng) {
    switch (spec.init) {
      case InitKind::he_normal:
        return random_normal<T>(spec.shape, rng, 0.0, std::sqrt(2.0 / spec.fan_in));
      case InitKind::ones:
        return Tensor<T>(spec.shape, T(1));
      case InitKind::bilinear: {
        if (spec.shape.n != spec.shape.c || spec.shape.h != 4 || spec.shape.w != 4)
          throw DimensionError("bilinear init expects [Q, Q, 4, 4], got " + spec.shape.str());
        return bilinear_upsampling_weight<T>(spec.shape.n);
      }
      case InitKind::zeros:
      default:
        return Tensor<T>(spec.shape);
    }
  }

  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------

/// Execution context: mode, BN settings and the seeded dropout generator.
struct RunContext {
  Mode mode = Mode::infer;
  BatchNormConfig bn{};
  std::mt19937_64* rng = nullptr;  // required in train mode when dropout is present
};

/// Evaluates every layer in order; returns the value of each layer. The
/// graph's first layer must be an input fed by `input`.
template <class T>
std::vector<Var<T>> run_graph(const LayerGraph& graph, ParamStore<T>& store,
                              const Var<T>& input, const RunContext& ctx) {
  if (graph.layers.empty() || graph.layers[0].kind != LayerKind::input)
    throw ConfigError("graph must start with an input layer");
  std::vector<Var<T>> vals(graph.layers.size());
  auto p = [&](const LayerSpec& l, std::size_t i) -> Var<T> {
    return i < l.params.size() ? store.get(l.params[i]).var : Var<T>{};
  };
  for (std::size_t id = 0; id < graph.layers.size(); ++id) {
    const LayerSpec& l = graph.layers[id];
    auto in = [&](std::size_t k) -> const Var<T>& { return vals[l.inputs.at(k)]; };
    switch (l.kind) {
      case LayerKind::input: {
        const Shape s = input->shape();
        if (s.c != l.out.c || s.h != l.out.h || s.w != l.out.w)
          throw DimensionError("input '" + l.name + "' expects " + l.out.str() + ", got " +
                               std::to_string(s.c) + "x" + std::to_string(s.h) + "x" +
                               std::to_string(s.w));
        vals[id] = input;
        break;
      }
      case LayerKind::conv:
        vals[id] = conv2d<T>(in(0), p(l, 0), p(l, 1), l.stride, l.padding);
        break;
      case LayerKind::depthwise_conv:
        vals[id] = depthwise_conv2d<T>(in(0), p(l, 0), l.stride, l.padding);
        break;
      case LayerKind::transposed_conv:
        vals[id] = conv_transpose2d<T>(in(0), p(l, 0), p(l, 1), l.stride, l.crop);
        break;
      case LayerKind::batch_norm:
        vals[id] = effipose::batch_norm<T>(in(0), p(l, 0), p(l, 1), p(l, 2), p(l, 3), ctx.mode, ctx.bn);
        break;
      case LayerKind::activation:
        vals[id] = effipose::activation<T>(in(0), l.act, l.beta);
        break;
      case LayerKind::avg_pool:
        vals[id] = effipose::avg_pool<T>(in(0), l.kernel, l.stride);
        break;
      case LayerKind::global_avg_pool:
        vals[id] = effipose::global_avg_pool<T>(in(0));
        break;
      case LayerKind::concat: {
        std::vector<Var<T>> xs;
        for (auto i : l.inputs) xs.push_back(vals[i]);
        vals[id] = effipose::concat<T>(std::span<const Var<T>>(xs));
        break;
      }
      case LayerKind::dropout:
        if (ctx.mode == Mode::train && l.rate > 0) {
          if (!ctx.rng) throw ConfigError("train-mode dropout requires a seeded generator");
          vals[id] = effipose::dropout<T>(in(0), l.rate, ctx.mode, *ctx.rng);
        } else {
          vals[id] = in(0);
        }
        break;
      case LayerKind::add:
        vals[id] = residual_add<T>(in(0), in(1));
        break;
      case LayerKind::channel_gate:
        vals[id] = broadcast_mul<T>(in(0), in(1));
        break;
    }
  }
  return vals;
}

}  // namespace effipose
