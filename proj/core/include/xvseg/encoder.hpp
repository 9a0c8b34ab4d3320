#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "xvseg/image.hpp"
#include "xvseg/nn.hpp"

namespace xvseg {

// One token per non-overlapping patch; (gh, gw) raster of C-dim tokens.
struct TokenGrid {
  int gh = 0, gw = 0;
  Tensor t;  // (gh*gw) x C, grid-tagged
  FrameId frame = FrameId::source;
};

// Dense geometry-aware features at half the input resolution.
struct FeatureMap {
  int h = 0, w = 0;
  Tensor t;  // (h*w) x C, grid-tagged
  FrameId frame = FrameId::source;
};

struct EncoderBlockP {
  LayerNormP ln1;
  AttnP attn;
  LayerNormP ln2;
  FfnP ffn;
  bool global = false;  // attends across both frames when true
};

// Weights of the two-view encoder. Registered frozen: none of these ever
// receives a gradient or an optimizer update.
struct EncoderParams {
  LinearP stem;          // (patch*patch*3) -> C
  Param* pos_embed = nullptr;    // tokens x C
  Param* frame_embed = nullptr;  // 2 x C
  std::vector<EncoderBlockP> blocks;
  LinearP dense_proj;    // C -> C
  Param* dense_conv_w = nullptr;  // 9C x C
  Param* dense_conv_b = nullptr;  // 1 x C
};

EncoderParams make_encoder_params(ParamStore& ps, const RunConfig& cfg, Rng& rng);

// Splits the image into patch_size x patch_size patches and projects each to
// a token; adds positional and frame embeddings.
TokenGrid patchify_stem(const Image& image, const EncoderParams& p, const RunConfig& cfg,
                        FrameId frame);

// Alternating frame-wise / global self-attention over both token grids.
// joint == false restricts every layer to its own frame (the two views are
// then processed independently).
std::pair<TokenGrid, TokenGrid> joint_encode(const TokenGrid& x_s, const TokenGrid& x_t,
                                             const EncoderParams& p, const RunConfig& cfg,
                                             bool joint = true);

// Dense prediction decoder: per-token projection, bilinear upsampling to half
// the image resolution, one 3x3 convolution.
FeatureMap dense_decode(const TokenGrid& h, const EncoderParams& p, const RunConfig& cfg);

// ---- provider seam -------------------------------------------------------

struct EncodedPair {
  FeatureMap f_s, f_t;
  std::optional<PointSet> tracked_points;  // only some external bundles carry these
};

// Feature source selected by config key. `pair_id` names the sample for
// providers that read precomputed features from disk; the toy provider
// ignores it.
class EncoderProvider {
 public:
  virtual ~EncoderProvider() = default;
  virtual EncodedPair encode(const Image& s, const Image& t, bool joint,
                             const std::string& pair_id = "") const = 0;
  virtual std::string id() const = 0;
};

class ToyEncoderProvider final : public EncoderProvider {
 public:
  ToyEncoderProvider(const EncoderParams& p, const RunConfig& cfg) : p_(p), cfg_(cfg) {}
  EncodedPair encode(const Image& s, const Image& t, bool joint,
                     const std::string& pair_id) const override;
  std::string id() const override { return "toy"; }

 private:
  const EncoderParams& p_;
  RunConfig cfg_;
};

// Reads per-pair tensor stores from <dir>/<pair_id>/ with entries f_s, f_t
// and optionally tracked_points (k x 2, pixel coords in the target frame).
class ExternalEncoderProvider final : public EncoderProvider {
 public:
  ExternalEncoderProvider(std::string dir, const RunConfig& cfg)
      : dir_(std::move(dir)), cfg_(cfg) {}
  EncodedPair encode(const Image& s, const Image& t, bool joint,
                     const std::string& pair_id) const override;
  std::string id() const override { return "external"; }

 private:
  std::string dir_;
  RunConfig cfg_;
};

// Companion writer so real encoder outputs can be injected from any source.
void write_external_pair(const std::string& dir, const std::string& pair_id,
                         const FeatureMap& f_s, const FeatureMap& f_t,
                         const PointSet* tracked_points);

}  // namespace xvseg
