#pragma once

#include "xvseg/head.hpp"
#include "xvseg/rng.hpp"

namespace xvseg {

// One application of the refinement decoder: the previous prediction is
// embedded through the mask pathway and injected into the target features,
// the decoder blocks re-run with the carried queries, and a fresh
// probability mask comes out. `psi` is the (possibly shared) refinement
// weight set.
Value refine_once(Tape& tp, const RunConfig& cfg, const HeadParams& psi, const Value& f_s,
                  const MaskGrid& m_s, const Value& f_t, const Value& m_prev,
                  const Value& q_carried);

// Spec-level convenience over plain tensors (no-grad).
MaskGrid refine(const Model& m, const FeatureMap& f_s, const MaskGrid& m_s,
                const FeatureMap& f_t, const MaskGrid& m_hat_k, const Tensor& queries);

// Per-sample refinement decisions for one batch. In training each sample
// independently refines with probability 0.5; at inference every sample
// refines. Non-final iterations never propagate gradients.
struct RefinePlan {
  std::vector<bool> refined;
  int iters = 0;

  int grad_iteration(int sample) const {  // 0 = initial prediction carries grads
    return refined[sample] ? iters : 0;
  }
};
RefinePlan refine_schedule(int batch_size, int refine_iters, bool training, Rng& rng);

}  // namespace xvseg
