#pragma once

#include "xvseg/autograd.hpp"
#include "xvseg/image.hpp"
#include "xvseg/nn.hpp"

namespace xvseg {

// Source-mask embedding pathway: a 4x4 stride-2 convolution halves the
// resolution, a 1x1 projection maps to C channels.
struct MaskEmbedP {
  Param* conv_w = nullptr;  // 16 x C
  Param* conv_b = nullptr;  // 1 x C
  LinearP proj;             // C -> C
};

// One Bottleneck Fusion stage: pool both views by the fusion ratio, jointly
// self-attend over the concatenated token sequence, upsample back.
struct FusionBlockP {
  Param* pos_embed = nullptr;    // bottleneck^2 x C
  Param* frame_embed = nullptr;  // 2 x C
  LayerNormP ln1;
  AttnP attn;
  LayerNormP ln2;
  FfnP ffn;
};

MaskEmbedP make_mask_embed(ParamStore& ps, const std::string& prefix,
                           const std::string& group, int channels, Rng& rng);
FusionBlockP make_fusion_block(ParamStore& ps, const std::string& prefix,
                               const std::string& group, const RunConfig& cfg, Rng& rng);

// Mask at full image resolution -> embedding at feature resolution.
Value embed_mask(Tape& tp, const MaskEmbedP& p, const Value& mask_grid, const RunConfig& cfg);
Value embed_mask(Tape& tp, const MaskEmbedP& p, const MaskGrid& mask, const RunConfig& cfg);

// Elementwise sum of matching feature/embedding grids.
Value inject_mask(const Value& features, const Value& mask_embedding);

// The fused pair (F*_s, F*_t); shapes equal the inputs.
std::pair<Value, Value> bottleneck_fuse(Tape& tp, const FusionBlockP& p, const Value& f_s,
                                        const Value& f_t, const RunConfig& cfg);

}  // namespace xvseg
