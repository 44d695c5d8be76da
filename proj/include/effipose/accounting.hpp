#pragma once

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "effipose/graph.hpp"

namespace effipose {

/// Counting rules applied by `account`. One multiply-accumulate is 2 FLOPs,
/// inference BN is a folded scale+shift (2 per element), every nonlinearity is
/// 1 per element, and parameter totals include BN moving statistics.
inline constexpr const char* kCostConvention =
    "MAC=2FLOP; BN=2/elem (folded); act=1/elem; add/gate=1/elem; params incl. BN moving stats";

struct LayerCost {
  std::string name;
  std::string stage;
  LayerKind kind = LayerKind::input;
  FeatureShape out;
  std::uint64_t params = 0;
  std::uint64_t trainable_params = 0;
  std::uint64_t flops = 0;
};

struct CostReport {
  std::string convention = kCostConvention;
  std::vector<LayerCost> layers;
  std::uint64_t total_params = 0;
  std::uint64_t trainable_params = 0;
  std::uint64_t total_flops = 0;
};

inline std::uint64_t layer_flops(const LayerGraph& g, const LayerSpec& l) {
  const auto elems = [](const FeatureShape& s) {
    return static_cast<std::uint64_t>(s.c) * s.h * s.w;
  };
  const auto out = elems(l.out);
  switch (l.kind) {
    case LayerKind::conv: {
      const auto& in = g.layer(l.inputs[0]).out;
      return 2ull * in.c * l.kernel * l.kernel * out;
    }
    case LayerKind::depthwise_conv:
      return 2ull * l.kernel * l.kernel * out;
    case LayerKind::transposed_conv: {
      const auto& in = g.layer(l.inputs[0]).out;
      return 2ull * l.kernel * l.kernel * static_cast<std::uint64_t>(l.out.c) * elems(in);
    }
    case LayerKind::batch_norm: return 2ull * out;
    case LayerKind::activation: return l.act == ActivationKind::linear ? 0 : out;
    case LayerKind::avg_pool: return static_cast<std::uint64_t>(l.kernel) * l.kernel * out;
    case LayerKind::global_avg_pool: return elems(g.layer(l.inputs[0]).out);
    case LayerKind::add:
    case LayerKind::channel_gate: return out;
    case LayerKind::input:
    case LayerKind::concat:
    case LayerKind::dropout: return 0;
  }
  return 0;
}

/// Symbolic parameter and FLOP count of one forward pass on a single sample.
inline CostReport account(const LayerGraph& g) {
  CostReport r;
  for (const auto& l : g.layers) {
    LayerCost c;
    c.name = l.name;
    c.stage = l.stage;
    c.kind = l.kind;
    c.out = l.out;
    for (const auto& pname : l.params) {
      const ParamSpec* p = g.find_param(pname);
      if (!p) throw ConfigError("layer " + l.name + " references unknown parameter " + pname);
      c.params += p->shape.numel();
      if (p->trainable) c.trainable_params += p->shape.numel();
    }
    c.flops = layer_flops(g, l);
    r.total_params += c.params;
    r.trainable_params += c.trainable_params;
    r.total_flops += c.flops;
    r.layers.push_back(std::move(c));
  }
  return r;
}

inline CostReport count_params(const LayerGraph& g) { return account(g); }
inline CostReport count_flops(const LayerGraph& g) { return account(g); }

inline std::string format_count(std::uint64_t v, char unit) {
  std::ostringstream os;
  const double scale = unit == 'G' ? 1e9 : 1e6;
  os << std::fixed << std::setprecision(2) << v / scale << unit;
  return os.str();
}

}  // namespace effipose
