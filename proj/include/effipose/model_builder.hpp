#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "effipose/accounting.hpp"
#include "effipose/backbones.hpp"
#include "effipose/supervision.hpp"

namespace effipose {

struct Resolution {
  int h = 0, w = 0;
  constexpr bool operator==(const Resolution&) const = default;
  std::string str() const { return std::to_string(h) + "x" + std::to_string(w); }
};

inline Resolution parse_resolution(const std::string& s) {
  Resolution r;
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) {
      r.h = r.w = std::stoi(s);
    } else {
      r.h = std::stoi(s.substr(0, x));
      r.w = std::stoi(s.substr(x + 1));
    }
  } catch (const std::exception&) {
    throw ConfigError("bad resolution '" + s + "' (expected N or HxW)");
  }
  if (r.h <= 0 || r.w <= 0) throw ConfigError("resolution must be positive: " + s);
  return r;
}

/// Full description of one network plus the training defaults that travel
/// with it in config files.
struct VariantConfig {
  std::string name = "RT";
  Resolution high_res{224, 224};
  Scale high_backbone = Scale::B0;
  std::optional<Scale> low_backbone;  // absent: single-resolution
  int detection_width = 0;            // 0: derived from the high backbone
  int detection_depth = 0;            // 0: derived from the high backbone
  int keypoint_passes = 2;            // 1..3
  bool skeleton_pass = true;
  bool upscaling = true;
  int P = 15;
  int Q = 16;
  double se_ratio = kSqueezeRatio;    // detection blocks

  double lambda_max = 1e-2;
  SigmaSchedule sigma;
  double paf_half_width = 1.0;
  int batch_size = 20;

  bool low_branch() const { return low_backbone.has_value(); }
  Resolution low_res() const { return {high_res.h / 2, high_res.w / 2}; }
  int pass_count() const { return keypoint_passes + (skeleton_pass ? 1 : 0); }
  int width() const;
  int depth() const;
  void validate() const;
};

/// floor(alpha^phi + 0.5) with the tabulated depth factor of the scale.
inline int detection_depth(Scale high_scale) {
  return static_cast<int>(std::floor(scale_row(high_scale).depth_factor + 0.5));
}

inline double compound_scaling_check(double alpha, double beta, double gamma, double phi) {
  if (!(alpha > 0 && beta > 0 && gamma > 0))
    throw ConfigError("scaling coefficients must be positive");
  return std::pow(alpha * beta * beta * gamma * gamma, phi);
}

inline int VariantConfig::width() const {
  return detection_width > 0 ? detection_width : scale_row(high_backbone).blocks[2].channels;
}
inline int VariantConfig::depth() const {
  return detection_depth > 0 ? detection_depth : effipose::detection_depth(high_backbone);
}

inline void VariantConfig::validate() const {
  if (keypoint_passes < 1 || keypoint_passes > 3)
    throw ConfigError("keypoint passes must be 1..3, got " + std::to_string(keypoint_passes));
  if (P <= 0 || Q <= 0) throw ConfigError("P and Q must be positive");
  if (detection_width < 0 || detection_depth < 0)
    throw ConfigError("detection width/depth must be non-negative (0 = derived)");
  if (!(se_ratio > 0 && se_ratio <= 1)) throw ConfigError("se_ratio must lie in (0, 1]");
  if (!(lambda_max > 0)) throw ConfigError("lambda_max must be positive");
  if (!(paf_half_width > 0)) throw ConfigError("paf_half_width must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (high_res.h <= 0 || high_res.w <= 0) throw ConfigError("high_res must be positive");
  sigma.validate();
}

inline const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names{"RT", "I", "II", "III", "IV"};
  return names;
}

inline VariantConfig variant(const std::string& name) {
  VariantConfig c;
  c.name = name;
  if (name == "RT") {
    c.high_res = {224, 224};
    c.high_backbone = Scale::B0;
  } else if (name == "I") {
    c.high_res = {256, 256};
    c.high_backbone = Scale::B2;
    c.low_backbone = Scale::B0;
  } else if (name == "II") {
    c.high_res = {368, 368};
    c.high_backbone = Scale::B4;
    c.low_backbone = Scale::B0;
  } else if (name == "III") {
    c.high_res = {480, 480};
    c.high_backbone = Scale::B5;
    c.low_backbone = Scale::B1;
    c.batch_size = 10;
  } else if (name == "IV") {
    c.high_res = {600, 600};
    c.high_backbone = Scale::B7;
    c.low_backbone = Scale::B3;
    c.batch_size = 5;
  } else {
    throw ConfigError("unknown variant '" + name + "' (expected RT, I, II, III or IV)");
  }
  return c;
}

// ---------------------------------------------------------------------------

struct OutputHead {
  std::string name;
  HeadKind kind = HeadKind::keypoint;
  std::size_t layer = 0;
  int channels = 0;
  int h = 0, w = 0;
  int stride = 8;
};

struct ModelGraph {
  VariantConfig config;
  Resolution input;
  LayerGraph graph;
  std::vector<OutputHead> heads;  // supervision order: passes, then upscaled
  std::size_t features = 0;       // cross-resolution feature layer

  /// Head used for inference: the upscaled map if present, else the last pass.
  const OutputHead& final_head() const { return heads.back(); }
};

inline std::vector<TargetHead> target_layout(const ModelGraph& m) {
  std::vector<TargetHead> out;
  for (const auto& h : m.heads) out.push_back({h.kind, h.channels, h.h, h.w, h.stride});
  return out;
}

inline TargetSettings target_settings(const VariantConfig& c) {
  TargetSettings s;
  s.schedule = c.sigma;
  s.paf_half_width = c.paf_half_width;
  s.skeleton = Skeleton::mpii();
  return s;
}

namespace detail {

inline std::size_t append_pass(GraphBuilder& b, const VariantConfig& c, std::size_t input,
                               const std::string& prefix) {
  std::size_t x = input;
  for (int d = 0; d < c.depth(); ++d) {
    const std::string md = prefix + "/md" + std::to_string(d + 1);
    const std::size_t y = append_mobile_densenet(b, c.width(), x, md, c.se_ratio);
    x = d == 0 ? y : b.add(md + "/residual", y, x);
  }
  return x;
}

}  // namespace detail

/// Builds the variant at `res` (defaults to the config's high resolution).
inline ModelGraph build_variant(const VariantConfig& config, std::optional<Resolution> res = {}) {
  config.validate();
  ModelGraph m;
  m.config = config;
  m.input = res.value_or(config.high_res);
  GraphBuilder b(m.graph);

  b.set_stage("input");
  const std::size_t image = b.input("image", {3, m.input.h, m.input.w});

  std::size_t high = append_backbone(b, {config.high_backbone, 3}, image, "high_backbone");
  std::size_t features = high;
  if (config.low_branch()) {
    b.set_stage("low_branch");
    const std::size_t pooled = b.avg_pool("low_branch/downsample", image, 2, 2);
    const std::size_t low = append_backbone(b, {*config.low_backbone, 2}, pooled, "low_backbone");
    const FeatureShape hs = b.shape(high), ls = b.shape(low);
    if (hs.h != ls.h || hs.w != ls.w)
      throw DimensionError("cross-resolution features disagree: high input " + m.input.str() +
                           " gives " + std::to_string(hs.h) + "x" + std::to_string(hs.w) +
                           " at stride 8, low input " + std::to_string(m.input.h / 2) + "x" +
                           std::to_string(m.input.w / 2) + " gives " + std::to_string(ls.h) + "x" +
                           std::to_string(ls.w) + " at stride 4");
    b.set_stage("cross_resolution");
    features = b.concat("cross_resolution/concat", {high, low});
  }
  m.features = features;

  auto add_head = [&](const std::string& name, HeadKind kind, std::size_t layer, int stride) {
    const FeatureShape s = b.shape(layer);
    m.heads.push_back({name, kind, layer, s.c, s.h, s.w, stride});
  };

  std::vector<std::size_t> previous;
  int pass = 0;
  auto pass_input = [&](const std::string& prefix) {
    if (previous.empty()) return features;
    std::vector<std::size_t> ins{features};
    ins.insert(ins.end(), previous.begin(), previous.end());
    return b.concat(prefix + "/input", ins);
  };
  if (config.skeleton_pass) {
    const std::string prefix = "pass" + std::to_string(++pass) + "_skeleton";
    b.set_stage(prefix);
    const std::size_t x = detail::append_pass(b, config, pass_input(prefix), prefix);
    const std::size_t head = b.conv(prefix + "/paf", x, 2 * config.P, 1, 1, true);
    add_head(prefix + "/paf", HeadKind::paf, head, 8);
    previous.push_back(head);
  }
  for (int k = 0; k < config.keypoint_passes; ++k) {
    const std::string prefix = "pass" + std::to_string(++pass) + "_keypoints";
    b.set_stage(prefix);
    const std::size_t x = detail::append_pass(b, config, pass_input(prefix), prefix);
    const std::size_t head = b.conv(prefix + "/heatmaps", x, config.Q, 1, 1, true);
    add_head(prefix + "/heatmaps", HeadKind::keypoint, head, 8);
    previous.push_back(head);
  }
  if (config.upscaling) {
    b.set_stage("upscaling");
    std::size_t x = previous.back();
    for (int i = 1; i <= 3; ++i) x = b.upsample2x("upscaling/convt" + std::to_string(i), x);
    add_head("upscaling/convt3", HeadKind::upscaled, x, 1);
  }
  return m;
}

// ---------------------------------------------------------------------------

struct SummaryRow {
  std::size_t index;
  std::string stage;
  std::string name;
  std::string kind;
  std::string shape;
  std::uint64_t params;
  std::uint64_t flops;
};

inline std::vector<SummaryRow> summary_rows(const ModelGraph& m, const CostReport& r) {
  std::vector<SummaryRow> rows;
  for (std::size_t i = 0; i < r.layers.size(); ++i) {
    const auto& l = r.layers[i];
    rows.push_back({i, l.stage, l.name, to_string(l.kind), l.out.str(), l.params, l.flops});
  }
  (void)m;
  return rows;
}

/// Per-layer table grouped by stage, then stage subtotals and the totals line.
inline std::string summarize(const ModelGraph& m) {
  const CostReport r = account(m.graph);
  std::ostringstream os;
  const auto& c = m.config;
  os << "variant " << c.name << "  input " << m.input.str();
  if (c.low_branch()) os << " + " << m.input.h / 2 << "x" << m.input.w / 2;
  os << "  high " << to_string(c.high_backbone);
  if (c.low_branch()) os << "  low " << to_string(*c.low_backbone);
  os << "  detection [MD(" << c.width() << ")]x" << c.depth() << "  passes "
     << (c.skeleton_pass ? "skeleton+" : "") << c.keypoint_passes << "  upscaling "
     << (c.upscaling ? "on" : "off") << "\n";
  os << "convention: " << r.convention << "\n";
  os << std::left << std::setw(5) << "#" << std::setw(24) << "stage" << std::setw(52) << "layer"
     << std::setw(14) << "kind" << std::setw(14) << "output" << std::right << std::setw(10)
     << "params" << std::setw(14) << "FLOPs" << "\n";
  for (const auto& row : summary_rows(m, r)) {
    os << std::left << std::setw(5) << row.index << std::setw(24) << row.stage << std::setw(52)
       << row.name << std::setw(14) << row.kind << std::setw(14) << row.shape << std::right
       << std::setw(10) << row.params << std::setw(14) << row.flops << "\n";
  }
  std::vector<std::string> order;
  std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> per_stage;
  for (const auto& l : r.layers) {
    if (!per_stage.count(l.stage)) order.push_back(l.stage);
    per_stage[l.stage].first += l.params;
    per_stage[l.stage].second += l.flops;
  }
  os << "stages:\n";
  for (const auto& s : order)
    os << "  " << std::left << std::setw(28) << s << std::right << std::setw(12)
       << per_stage[s].first << std::setw(16) << per_stage[s].second << "\n";
  os << "total params " << r.total_params << " (" << format_count(r.total_params, 'M')
     << ")  trainable " << r.trainable_params << "  FLOPs " << r.total_flops << " ("
     << format_count(r.total_flops, 'G') << ")\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Config files: key=value lines, '#' comments. `name` selects the base
// variant (or "custom", which starts from RT defaults).

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("key '" + key + "' expects a boolean, got '" + v + "'");
}

inline VariantConfig parse_config(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto z = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, z - a + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    kv.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }

  VariantConfig c;
  for (const auto& [k, v] : kv)
    if (k == "name") c = v == "custom" ? [] { auto r = variant("RT"); r.name = "custom"; return r; }()
                                       : variant(v);

  std::optional<Resolution> low_res;
  for (const auto& [k, v] : kv) {
    auto num = [&](auto parse) {
      try {
        return parse(v);
      } catch (const std::exception&) {
        throw ConfigError("key '" + k + "': bad number '" + v + "'");
      }
    };
    auto as_int = [&] { return num([](const std::string& s) { return std::stoi(s); }); };
    auto as_double = [&] { return num([](const std::string& s) { return std::stod(s); }); };
    if (k == "name") continue;
    else if (k == "high_res") c.high_res = parse_resolution(v);
    else if (k == "low_res") {
      if (v == "none") c.low_backbone.reset();
      else low_res = parse_resolution(v);
    } else if (k == "high_backbone") c.high_backbone = parse_scale(v);
    else if (k == "low_backbone") {
      if (v == "none") c.low_backbone.reset();
      else c.low_backbone = parse_scale(v);
    } else if (k == "low_branch") {
      if (!parse_bool(k, v)) c.low_backbone.reset();
      else if (!c.low_backbone) c.low_backbone = Scale::B0;
    } else if (k == "detection_width") c.detection_width = as_int();
    else if (k == "detection_depth") c.detection_depth = as_int();
    else if (k == "keypoint_passes") c.keypoint_passes = as_int();
    else if (k == "skeleton_pass") c.skeleton_pass = parse_bool(k, v);
    else if (k == "upscaling") c.upscaling = parse_bool(k, v);
    else if (k == "P") c.P = as_int();
    else if (k == "Q") c.Q = as_int();
    else if (k == "se_ratio") c.se_ratio = as_double();
    else if (k == "lambda_max") c.lambda_max = as_double();
    else if (k == "sigma_schedule") c.sigma = SigmaSchedule::parse(v);
    else if (k == "paf_half_width") c.paf_half_width = as_double();
    else if (k == "batch_size") c.batch_size = as_int();
    else throw ConfigError("unknown config key '" + k + "'");
  }
  if (low_res && c.low_branch() && !(*low_res == c.low_res()))
    throw ConfigError("low_res " + low_res->str() + " must be half of high_res " +
                      c.high_res.str());
  c.validate();
  return c;
}

inline VariantConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

inline std::string format_config(const VariantConfig& c) {
  std::ostringstream os;
  os << std::setprecision(17);
  const bool named = std::find(variant_names().begin(), variant_names().end(), c.name) !=
                     variant_names().end();
  os << "name=" << (named ? c.name : "custom") << "\n";
  os << "high_res=" << c.high_res.str() << "\n";
  os << "high_backbone=" << to_string(c.high_backbone) << "\n";
  os << "low_backbone=" << (c.low_branch() ? to_string(*c.low_backbone) : "none") << "\n";
  if (c.low_branch()) os << "low_res=" << c.low_res().str() << "\n";
  os << "detection_width=" << c.width() << "\n";
  os << "detection_depth=" << c.depth() << "\n";
  os << "keypoint_passes=" << c.keypoint_passes << "\n";
  os << "skeleton_pass=" << (c.skeleton_pass ? "true" : "false") << "\n";
  os << "upscaling=" << (c.upscaling ? "true" : "false") << "\n";
  os << "P=" << c.P << "\n";
  os << "Q=" << c.Q << "\n";
  os << "se_ratio=" << c.se_ratio << "\n";
  os << "lambda_max=" << c.lambda_max << "\n";
  os << "sigma_schedule=" << c.sigma.str() << "\n";
  os << "paf_half_width=" << c.paf_half_width << "\n";
  os << "batch_size=" << c.batch_size << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------

/// Runtime network: one parameter store shared by graphs built at any input
/// resolution.
template <class T>
class Model {
 public:
  explicit Model(VariantConfig config) : config_(std::move(config)) { config_.validate(); }

  const VariantConfig& config() const { return config_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

  const ModelGraph& graph(Resolution res) {
    const auto key = std::make_pair(res.h, res.w);
    auto it = graphs_.find(key);
    if (it == graphs_.end()) {
      it = graphs_.emplace(key, build_variant(config_, res)).first;
      store_.initialize(it->second.graph, seed_);
    }
    return it->second;
  }
  const ModelGraph& graph() { return graph(config_.high_res); }

  void initialize(std::uint64_t seed) {
    seed_ = seed;
    store_.initialize(graph().graph, seed);
  }

  /// Outputs of every head (N x C x h x w), in `ModelGraph::heads` order.
  std::vector<Var<T>> forward(const Var<T>& images, const RunContext& ctx) {
    const Shape s = images->shape();
    const ModelGraph& g = graph({s.h, s.w});
    auto vals = run_graph(g.graph, store_, images, ctx);
    std::vector<Var<T>> out;
    for (const auto& h : g.heads) out.push_back(vals[h.layer]);
    return out;
  }

 private:
  VariantConfig config_;
  ParamStore<T> store_;
  std::map<std::pair<int, int>, ModelGraph> graphs_;
  std::uint64_t seed_ = 0;
};

}  // namespace effipose
