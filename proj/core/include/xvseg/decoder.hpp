#pragma once

#include "xvseg/autograd.hpp"
#include "xvseg/image.hpp"
#include "xvseg/nn.hpp"

namespace xvseg {

// Point prompt encoder: fixed Fourier features of normalized coordinates,
// a learned projection, and per-role embeddings. The output token O is a
// learned query whose final embedding produces the mask logits.
struct PromptEncoderP {
  Param* fourier = nullptr;  // 2 x C/2, frozen buffer
  LinearP proj;              // C -> C
  Param* role_s = nullptr;   // 1 x C
  Param* role_t = nullptr;   // 1 x C
  Param* output_token = nullptr;  // 1 x C
};

// One decoder block: self-attention among prompts, point-to-image and
// image-to-point cross-attention. The image side carries no FFN.
struct DecoderBlockP {
  LayerNormP ln_q1;
  AttnP self_attn;
  LayerNormP ln_q2;
  AttnP cross_pi;  // prompts attend to image tokens
  LayerNormP ln_q3;
  FfnP ffn_q;
  LayerNormP ln_i;
  AttnP cross_ip;  // image tokens attend to prompts
};

// Final prediction: one more point-to-image cross-attention for the output
// token, an MLP, and per-pixel dot products against the target features.
struct PredictP {
  LayerNormP ln_o;
  AttnP cross_o;
  LinearP mlp1;  // C -> C, GELU
  LinearP mlp2;  // C -> C
};

PromptEncoderP make_prompt_encoder(ParamStore& ps, const std::string& prefix,
                                   const std::string& group, int channels, Rng& rng);
DecoderBlockP make_decoder_block(ParamStore& ps, const std::string& prefix,
                                 const std::string& group, int channels, Rng& rng);
PredictP make_predict(ParamStore& ps, const std::string& prefix, const std::string& group,
                      int channels, Rng& rng);

// [sin(2 pi B p), cos(2 pi B p)] for points normalized to [0,1]^2. n x C.
Tensor fourier_features(const std::vector<Point2d>& pts_norm, const Tensor& b);

// Point features sampled from a feature map (points in pixel coordinates of
// an img_size x img_size frame).
Value sample_point_features(Tape& tp, const Value& fmap, const PointSet& pts, int img_w,
                            int img_h);

// Q_0 = [E_p, E_s, E_t, O], length 3*K + 1.
Value encode_prompts(Tape& tp, const PromptEncoderP& p, const PointSet& p_s,
                     const PointSet& p_t, const Value& f_src_sample, const RunConfig& cfg);

// q: (3K+1) x C prompt queries; f_star: 2N x C joint image tokens with
// positional encodings pe (2N x C). Returns (q', h).
std::pair<Value, Value> decode_block(Tape& tp, const DecoderBlockP& p, const Value& q,
                                     const Value& f_star, const Value& pe,
                                     const RunConfig& cfg);

struct MaskPrediction {
  Value logits;     // (feat, feat, 1)
  Value prob_full;  // (H, W, 1)
};
// o_last: 1 x C output token after the last block; h_t: target half of the
// fused image tokens (grid-tagged); pe_t: positional encodings for h_t.
MaskPrediction predict_mask(Tape& tp, const PredictP& p, const Value& o_last,
                            const Value& h_t, const Value& pe_t, const RunConfig& cfg);

}  // namespace xvseg
