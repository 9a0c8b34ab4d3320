#pragma once

#include <functional>
#include <string>
#include <vector>

#include "xvseg/augment.hpp"
#include "xvseg/head.hpp"
#include "xvseg/losses.hpp"
#include "xvseg/refine.hpp"

namespace xvseg {

// One self-supervised training sample: an image plus a (pseudo) mask. The
// augmented second view is generated on the fly each epoch.
struct TrainSample {
  Image image;
  MaskGrid mask;
  std::uint64_t id = 0;
};

// Per-parameter gradient buffer aligned with a ParamStore.
class GradAccum {
 public:
  explicit GradAccum(const ParamStore& ps);
  void add(const Param& p, const Tensor& g, double scale = 1.0);
  void add_scaled(const GradAccum& other, double scale);
  double global_norm() const;
  // Scales gradients so the global L2 norm is at most max_norm; returns the
  // pre-clip norm.
  double clip(double max_norm);
  const Tensor* grad(const Param& p) const;  // null when untouched
  bool finite() const;

 private:
  std::vector<Tensor> g_;
  std::vector<char> live_;
};

// Decoupled weight decay Adam. Only trainable parameters are touched.
class AdamW {
 public:
  explicit AdamW(ParamStore& ps, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8);
  void step(const GradAccum& grads, double lr, double weight_decay);
  int steps_taken() const { return t_; }

 private:
  ParamStore& ps_;
  double b1_, b2_, eps_;
  int t_ = 0;
  std::vector<Tensor> m_, v_;
};

// lr(epoch) = lr * decay_factor^(# decay epochs passed); epoch is 1-based
// and the drop applies after the listed epochs complete.
double lr_for_epoch(const RunConfig& cfg, int epoch);

// Inputs of one training-style forward. For refined samples the refinement
// prefix (everything before the final iteration) has already been run
// without gradient recording; its outputs are carried here as constants.
struct SampleForwardInputs {
  Tensor f_s, f_t;  // encoder features, grid-tagged
  MaskGrid m_s;     // prompt mask
  MaskGrid gt;      // supervision target
  PointSet p_s, p_t;
  bool refined = false;
  MaskGrid m_prev;   // refined only: mask entering the final iteration
  Tensor carried_q;  // refined only: queries from the initial prediction
};

// Runs the no-grad prefix (initial prediction + all but the last refinement
// iteration) and packages the constants for the differentiable tail.
SampleForwardInputs prepare_sample_inputs(const Model& m, const EncodedPair& enc,
                                          const MaskGrid& m_s, const MaskGrid& gt,
                                          const PointSet& p_s, const PointSet& p_t,
                                          bool refined);

// The differentiable tail: full head for unrefined samples, the final
// refinement iteration for refined ones.
LossValues sample_loss(Tape& tp, const Model& m, const SampleForwardInputs& in);

struct StepMetrics {
  int epoch = 0;
  int step = 0;  // global step, 1-based
  double loss = 0, focal = 0, dice = 0;
  double lr = 0;
  double grad_norm_pre = 0, grad_norm_post = 0;
};

struct TrainOptions {
  std::string out_dir;  // empty: keep everything in memory
  int threads = 2;
  bool epoch_checkpoints = true;
  int epochs_override = -1;  // -1: cfg.epochs
};

struct TrainResult {
  std::vector<StepMetrics> steps;
  std::vector<double> epoch_lr;
  int total_steps = 0;
  std::uint64_t encoder_checksum_before = 0;
  std::uint64_t encoder_checksum_after = 0;
};

// Single-image self-supervised training: each sample is augmented into a
// two-view pair (families mixed 50/50), prompts are synthesized per family,
// and the 20:1 focal+dice objective is optimized under the configured
// schedule. Deterministic for a fixed config and seed.
TrainResult train(Model& m, const std::vector<TrainSample>& data, const TrainOptions& opt);

}  // namespace xvseg
