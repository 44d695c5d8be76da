#pragma once

#include <string>

#include "effipose/graph.hpp"

namespace effipose {

enum class MBConvKind { mbconv1, mbconv1_skip, mbconv6, mbconv6_skip, e_mbconv6 };

inline const char* to_string(MBConvKind k) {
  switch (k) {
    case MBConvKind::mbconv1: return "MBConv1";
    case MBConvKind::mbconv1_skip: return "MBConv1*";
    case MBConvKind::mbconv6: return "MBConv6";
    case MBConvKind::mbconv6_skip: return "MBConv6*";
    case MBConvKind::e_mbconv6: return "E-MBConv6";
  }
  return "?";
}

/// Defaults for the squeeze-and-excitation ratio and the dropout rate of the
/// skip variants; neither is fixed by the architecture tables.
inline constexpr double kSqueezeRatio = 0.25;
inline constexpr double kBlockDropout = 0.2;

/// MBConv(K x K, B, S) applied to M input maps.
struct MBConvSpec {
  MBConvKind kind = MBConvKind::mbconv6;
  int kernel = 3;        // K
  int out_channels = 0;  // B
  int stride = 1;        // S
  int in_channels = 0;   // M
  double se_ratio = kSqueezeRatio;
  double dropout_rate = kBlockDropout;

  bool has_skip() const {
    return kind == MBConvKind::mbconv1_skip || kind == MBConvKind::mbconv6_skip;
  }
  bool uses_eswish() const { return kind == MBConvKind::e_mbconv6; }

  /// Width of the depthwise stage: M for MBConv1, 6M for MBConv6, 6B for E-MBConv6.
  int expanded_channels() const {
    switch (kind) {
      case MBConvKind::mbconv1:
      case MBConvKind::mbconv1_skip: return in_channels;
      case MBConvKind::mbconv6:
      case MBConvKind::mbconv6_skip: return 6 * in_channels;
      case MBConvKind::e_mbconv6: return 6 * out_channels;
    }
    return in_channels;
  }
  bool has_expansion() const {
    return kind == MBConvKind::mbconv6 || kind == MBConvKind::mbconv6_skip ||
           kind == MBConvKind::e_mbconv6;
  }
  /// Squeeze width, relative to the block input.
  int squeezed_channels() const {
    return std::max(1, static_cast<int>(std::floor(in_channels * se_ratio)));
  }

  void validate() const {
    auto fail = [&](const std::string& why) {
      throw ConfigError(std::string(to_string(kind)) + "(" + std::to_string(kernel) + "x" +
                        std::to_string(kernel) + ", " + std::to_string(out_channels) + ", " +
                        std::to_string(stride) + ") on " + std::to_string(in_channels) +
                        " maps: " + why);
    };
    if (kernel != 3 && kernel != 5) fail("kernel must be 3 or 5");
    if (stride != 1 && stride != 2) fail("stride must be 1 or 2");
    if (in_channels <= 0 || out_channels <= 0) fail("channel counts must be positive");
    if (!(se_ratio > 0 && se_ratio <= 1)) fail("SE ratio must lie in (0, 1]");
    if (!(dropout_rate >= 0 && dropout_rate < 1)) fail("dropout rate must lie in [0, 1)");
    if (has_skip() && stride != 1) fail("skip variants require stride 1");
    if (has_skip() && in_channels != out_channels) fail("skip variants require M == B");
    if (kind == MBConvKind::e_mbconv6 && stride != 1) fail("E-MBConv6 never downsamples");
  }
};

/// Appends one MBConv to `b`; returns the id of its output layer.
inline std::size_t append_mbconv(GraphBuilder& b, const MBConvSpec& spec, std::size_t input,
                                 const std::string& prefix) {
  spec.validate();
  const FeatureShape in = b.shape(input);
  if (in.c != spec.in_channels)
    throw DimensionError(axis_mismatch(prefix, "in_channels(M)", in.c, spec.in_channels));
  const ActivationKind act = spec.uses_eswish() ? ActivationKind::eswish : ActivationKind::swish;
  const double beta = spec.uses_eswish() ? kEswishBeta : 1.0;
  const int expanded = spec.expanded_channels();

  std::size_t x = input;
  if (spec.has_expansion()) {
    x = b.conv(prefix + "/expand_conv", x, expanded, 1, 1, false);
    x = b.batch_norm(prefix + "/expand_bn", x);
    x = b.activation(prefix + "/expand_act", x, act, beta);
  }
  x = b.depthwise(prefix + "/dwconv", x, spec.kernel, spec.stride);
  x = b.batch_norm(prefix + "/bn", x);
  x = b.activation(prefix + "/act", x, act, beta);

  std::size_t s = b.global_avg_pool(prefix + "/se_squeeze", x);
  s = b.conv(prefix + "/se_reduce", s, spec.squeezed_channels(), 1, 1, true);
  s = b.activation(prefix + "/se_reduce_act", s, act, beta);
  s = b.conv(prefix + "/se_expand", s, expanded, 1, 1, true);
  s = b.activation(prefix + "/se_gate", s, ActivationKind::sigmoid);
  x = b.channel_gate(prefix + "/se_excite", x, s);

  x = b.conv(prefix + "/project_conv", x, spec.out_channels, 1, 1, false);
  x = b.batch_norm(prefix + "/project_bn", x);
  if (spec.has_skip()) {
    x = b.dropout(prefix + "/drop", x, spec.dropout_rate);
    x = b.add(prefix + "/add", x, input);
  } else if (spec.kind == MBConvKind::e_mbconv6) {
    x = b.dropout(prefix + "/drop", x, spec.dropout_rate);
  }
  return x;
}

/// Standalone graph holding a single MBConv on an h x w input.
inline LayerGraph build_mbconv(const MBConvSpec& spec, int h, int w,
                               const std::string& prefix = "mbconv") {
  LayerGraph g;
  GraphBuilder b(g);
  const auto in = b.input("input", {spec.in_channels, h, w});
  append_mbconv(b, spec, in, prefix);
  return g;
}

/// Per-unit input widths of a Mobile DenseNet of width C fed with `in` maps:
/// unit 1 sees the block input, unit 2 the first unit's output and unit 3
/// both previous outputs.
inline std::array<int, 3> mobile_densenet_unit_inputs(int in, int width) {
  return {in, width, 2 * width};
}

/// Appends a Mobile DenseNet MD(C): three densely connected E-MBConv6(5x5, C, 1)
/// emitting the 3C-channel concatenation of their outputs.
inline std::size_t append_mobile_densenet(GraphBuilder& b, int width, std::size_t input,
                                          const std::string& prefix,
                                          double se_ratio = kSqueezeRatio) {
  if (width <= 0) throw ConfigError("Mobile DenseNet width must be positive");
  const auto widths = mobile_densenet_unit_inputs(b.shape(input).c, width);
  auto unit = [&](int idx, std::size_t in) {
    MBConvSpec spec;
    spec.kind = MBConvKind::e_mbconv6;
    spec.kernel = 5;
    spec.out_channels = width;
    spec.stride = 1;
    spec.in_channels = widths[idx];
    spec.se_ratio = se_ratio;
    return append_mbconv(b, spec, in, prefix + "/unit" + std::to_string(idx + 1));
  };
  const std::size_t u1 = unit(0, input);
  const std::size_t u2 = unit(1, u1);
  const std::size_t u12 = b.concat(prefix + "/dense12", {u1, u2});
  const std::size_t u3 = unit(2, u12);
  return b.concat(prefix + "/out", {u1, u2, u3});
}

inline LayerGraph build_mobile_densenet(int width, FeatureShape input,
                                        const std::string& prefix = "md") {
  LayerGraph g;
  GraphBuilder b(g);
  const auto in = b.input("input", input);
  append_mobile_densenet(b, width, in, prefix);
  return g;
}

/// Runs a block graph and returns its last layer's output.
template <class T>
Var<T> forward_block(const LayerGraph& graph, ParamStore<T>& store, const Var<T>& input,
                     const RunContext& ctx) {
  auto vals = run_graph(graph, store, input, ctx);
  return vals.back();
}

}  // namespace effipose
