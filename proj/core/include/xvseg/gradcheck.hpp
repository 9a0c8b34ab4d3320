#pragma once

#include <map>
#include <string>
#include <vector>

#include "xvseg/train.hpp"

namespace xvseg {

// Verifies analytic gradients of the training objective against central
// finite differences at the current parameters, in double precision.
//
// The objective is the exact function the trainer differentiates: for
// refined samples the pre-final refinement outputs are computed once and
// held fixed (gradients are propagated only through the final iteration),
// so finite differences probe the same function backprop sees.
struct GradCheckModuleStat {
  std::string module;
  int checked = 0;
  int passed = 0;
  double max_rel_err = 0;
  double worst_analytic = 0, worst_fd = 0;
  std::string worst_param;
};

struct GradCheckReport {
  std::vector<GradCheckModuleStat> modules;
  double seconds = 0;
  bool pass(double min_fraction) const;
};

using GradMap = std::map<const Param*, Tensor>;

// Sum of per-sample losses, evaluated without recording.
double gradcheck_loss(const Model& m, const std::vector<SampleForwardInputs>& inputs);
// One taped forward+backward over the summed loss.
GradMap analytic_gradients(const Model& m, const std::vector<SampleForwardInputs>& inputs);

// Compares `analytic` against central differences on `per_module` uniformly
// sampled scalar parameters of every module with trainable weights (the
// frozen encoder is excluded). rel step 1e-3 with a small absolute floor.
GradCheckReport compare_with_fd(Model& m, const std::vector<SampleForwardInputs>& inputs,
                                const GradMap& analytic, int per_module, double tol,
                                Rng& rng);

GradCheckReport grad_check(Model& m, const std::vector<SampleForwardInputs>& inputs,
                           int per_module, double tol, Rng& rng);

// Builds a deterministic pair of checking samples (one plain, one refined)
// from the synthetic generator.
std::vector<SampleForwardInputs> make_gradcheck_inputs(const Model& m, std::uint64_t seed);

}  // namespace xvseg
