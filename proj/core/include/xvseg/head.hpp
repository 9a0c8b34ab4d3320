#pragma once

#include <memory>
#include <optional>

#include "xvseg/decoder.hpp"
#include "xvseg/encoder.hpp"
#include "xvseg/fusion.hpp"
#include "xvseg/tracker.hpp"

namespace xvseg {

// Trainable weights of the segmentation head. Each decoder block owns its
// own Bottleneck Fusion stage; block 0 consumes the mask-injected features.
struct HeadParams {
  MaskEmbedP mask_embed;
  std::vector<FusionBlockP> fusion;
  PromptEncoderP prompts;
  std::vector<DecoderBlockP> blocks;
  PredictP predict;
  LinearP img_pe_proj;            // projection of the fixed Fourier grid features
  Param* img_frame_embed = nullptr;  // 2 x C
  Param* null_mask_embed = nullptr;  // 1 x C, only added when configured
};

HeadParams make_head_params(ParamStore& ps, const RunConfig& cfg, Rng& rng,
                            const std::string& prefix, const std::string& fusion_group,
                            const std::string& pgp_group);

// A complete model: config, parameter store, frozen encoder, trained head,
// optional separately-weighted refinement head, and the feature provider.
struct Model {
  RunConfig cfg;
  std::unique_ptr<ParamStore> store;
  EncoderParams enc;
  HeadParams head;
  std::optional<HeadParams> refine_head;
  std::unique_ptr<EncoderProvider> provider;

  const HeadParams& psi() const { return refine_head ? *refine_head : head; }
};

// Builds every parameter from cfg.seed. Deterministic.
Model make_model(const RunConfig& cfg);

// Checkpoint directory: tensor store + config.txt. Loading rebuilds the
// model from the stored config, then overwrites parameter values.
void save_checkpoint(const Model& m, const std::string& dir,
                     const std::map<std::string, std::string>& extra = {});
Model load_checkpoint(const std::string& dir);

// Positional encodings for the joint [source; target] image token sequence
// and for the target half alone.
struct ImagePe {
  Value joint;  // 2N x C
  Value target;  // N x C
};
ImagePe image_pe(Tape& tp, const HeadParams& hp, const RunConfig& cfg);

struct HeadForwardOut {
  Value mask_prob;  // (H, W, 1), probabilities
  Value logits;     // (feat, feat, 1)
  Value queries;    // final prompt queries Q_L
  Value h_s, h_t;   // per-frame fused image tokens after the last block
};

// Forward pass of the head given encoder features, the source mask, and
// tracked prompt points (ignored when point guidance is ablated away).
HeadForwardOut head_forward(Tape& tp, const RunConfig& cfg, const HeadParams& hp,
                            const Value& f_s, const Value& f_t, const MaskGrid& m_s,
                            const PointSet* p_s, const PointSet* p_t);

struct PipelineOptions {
  int refine_iters = -1;  // -1: use cfg.refine_iters (when refinement is enabled)
  std::uint64_t point_seed = 0;
  std::string pair_id;
};

struct PipelineResult {
  MaskGrid prob;    // full-resolution probability mask
  MaskGrid binary;  // prob thresholded at 0.5
  PointSet p_s, p_t;
  int psi_applications = 0;
  Tensor logits;
  Tensor queries;
};

// Full inference: encode, sample, track, predict, refine. Deterministic
// given (model, inputs, options).
PipelineResult run_pipeline(const Model& m, const Image& i_s, const MaskGrid& m_s,
                            const Image& i_t, const Tracker& tracker,
                            const PipelineOptions& opt = {});
PipelineResult run_pipeline_encoded(const Model& m, const EncodedPair& enc,
                                    const MaskGrid& m_s, const Image& i_s, const Image& i_t,
                                    const Tracker& tracker, const PipelineOptions& opt = {});

}  // namespace xvseg
