#pragma once

#include "xvseg/image.hpp"

namespace xvseg {

// Intersection-over-union of two binary masks of identical dimensions.
// Both empty -> 1.0 (both correctly predict "no object").
double iou(const MaskGrid& a, const MaskGrid& b);

// out[p] = 1 iff m[p] >= threshold. threshold must lie in (0,1).
MaskGrid binarize(const MaskGrid& m, double threshold = 0.5);

// Mean and a seeded percentile-bootstrap confidence interval.
struct BootstrapCi {
  double mean = 0;
  double lo = 0;
  double hi = 0;
};
BootstrapCi bootstrap_mean_ci(const std::vector<double>& xs, int resamples,
                              double level, std::uint64_t seed);

}  // namespace xvseg
