#pragma once

#include <string>
#include <vector>

#include "effipose/nn_blocks.hpp"

namespace effipose {

enum class Scale { B0, B1, B2, B3, B4, B5, B7 };

inline const char* to_string(Scale s) {
  switch (s) {
    case Scale::B0: return "B0";
    case Scale::B1: return "B1";
    case Scale::B2: return "B2";
    case Scale::B3: return "B3";
    case Scale::B4: return "B4";
    case Scale::B5: return "B5";
    case Scale::B7: return "B7";
  }
  return "?";
}

inline Scale parse_scale(const std::string& s) {
  static const std::pair<const char*, Scale> table[] = {
      {"B0", Scale::B0}, {"B1", Scale::B1}, {"B2", Scale::B2}, {"B3", Scale::B3},
      {"B4", Scale::B4}, {"B5", Scale::B5}, {"B7", Scale::B7}};
  for (const auto& [name, scale] : table)
    if (s == name) return scale;
  if (s == "B6") throw ConfigError("EfficientNet-B6 is not part of the supported backbone table");
  throw ConfigError("unknown backbone scale: " + s);
}

/// One stage row: a leading unit (possibly strided) followed by `repeats - 1`
/// skip units of identical width.
struct StageRow {
  int expand = 1;  // 1 -> MBConv1, 6 -> MBConv6
  int kernel = 3;
  int channels = 0;
  int stride = 1;
  int repeats = 1;
};

/// EfficientNet stem and blocks 1-3 for one scale.
struct ScaleRow {
  int stem_channels;
  StageRow blocks[3];
  int image_size;        // I
  double depth_factor;   // alpha^phi as tabulated
};

inline const ScaleRow& scale_row(Scale s) {
  static const ScaleRow rows[] = {
      /* B0 */ {32, {{1, 3, 16, 1, 1}, {6, 3, 24, 2, 2}, {6, 5, 40, 2, 2}}, 224, 1.0},
      /* B1 */ {32, {{1, 3, 16, 1, 2}, {6, 3, 24, 2, 3}, {6, 5, 40, 2, 3}}, 240, 1.2},
      /* B2 */ {32, {{1, 3, 16, 1, 2}, {6, 3, 24, 2, 3}, {6, 5, 48, 2, 3}}, 260, 1.4},
      /* B3 */ {40, {{1, 3, 24, 1, 2}, {6, 3, 32, 2, 3}, {6, 5, 48, 2, 3}}, 300, 1.7},
      /* B4 */ {48, {{1, 3, 24, 1, 2}, {6, 3, 32, 2, 4}, {6, 5, 56, 2, 4}}, 380, 2.1},
      /* B5 */ {48, {{1, 3, 24, 1, 3}, {6, 3, 40, 2, 5}, {6, 5, 64, 2, 5}}, 456, 2.5},
      /* B7 */ {64, {{1, 3, 32, 1, 4}, {6, 3, 48, 2, 7}, {6, 5, 80, 2, 7}}, 600, 3.6},
  };
  return rows[static_cast<int>(s)];
}

struct BackboneSpec {
  Scale scale = Scale::B0;
  int num_blocks = 3;  // 3 for the high-level extractor, 2 for the low-level one

  void validate() const {
    if (num_blocks != 2 && num_blocks != 3)
      throw ConfigError("backbone must use 2 or 3 blocks, got " + std::to_string(num_blocks));
  }
  int output_channels() const { return scale_row(scale).blocks[num_blocks - 1].channels; }
  int output_stride() const { return num_blocks == 3 ? 8 : 4; }
};

/// Unit count of a block (leading unit plus repeats).
inline int block_units(Scale s, int block) { return scale_row(s).blocks[block - 1].repeats; }

/// Appends stem Conv(3x3, stem, 2) + BN + Swish and the requested blocks.
/// Layer names do not depend on `num_blocks`, so a 2-block graph's parameters
/// are a prefix subset of the 3-block graph's.
inline std::size_t append_backbone(GraphBuilder& b, const BackboneSpec& spec, std::size_t input,
                                   const std::string& prefix) {
  spec.validate();
  const ScaleRow& row = scale_row(spec.scale);
  const std::string saved = b.stage();
  b.set_stage(prefix + "/stem");
  std::size_t x = b.conv(prefix + "/stem_conv", input, row.stem_channels, 3, 2, false);
  x = b.batch_norm(prefix + "/stem_bn", x);
  x = b.activation(prefix + "/stem_act", x, ActivationKind::swish);
  for (int blk = 0; blk < spec.num_blocks; ++blk) {
    const StageRow& st = row.blocks[blk];
    b.set_stage(prefix + "/block" + std::to_string(blk + 1));
    for (int u = 0; u < st.repeats; ++u) {
      MBConvSpec m;
      const bool lead = u == 0;
      if (st.expand == 1)
        m.kind = lead ? MBConvKind::mbconv1 : MBConvKind::mbconv1_skip;
      else
        m.kind = lead ? MBConvKind::mbconv6 : MBConvKind::mbconv6_skip;
      m.kernel = st.kernel;
      m.out_channels = st.channels;
      m.stride = lead ? st.stride : 1;
      m.in_channels = b.shape(x).c;
      x = append_mbconv(b, m, x,
                        prefix + "/block" + std::to_string(blk + 1) + "_" + std::to_string(u + 1));
    }
  }
  b.set_stage(saved);
  return x;
}

inline LayerGraph build_backbone(const BackboneSpec& spec, int h, int w,
                                 const std::string& prefix = "backbone") {
  LayerGraph g;
  GraphBuilder b(g);
  const auto in = b.input("image", {3, h, w});
  append_backbone(b, spec, in, prefix);
  return g;
}

}  // namespace effipose
