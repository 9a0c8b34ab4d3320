#include "xvseg/metrics.hpp"

#include <algorithm>

#include "xvseg/errors.hpp"
#include "xvseg/rng.hpp"

namespace xvseg {

double iou(const MaskGrid& a, const MaskGrid& b) {
  if (a.h != b.h || a.w != b.w)
    throw ShapeError("iou: dimension mismatch " + std::to_string(a.h) + "x" +
                     std::to_string(a.w) + " vs " + std::to_string(b.h) + "x" +
                     std::to_string(b.w));
  if (!a.check_binary() || !b.check_binary())
    throw ValueError("iou: inputs must be binary masks");
  std::size_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    bool pa = a.v[i] != 0.0, pb = b.v[i] != 0.0;
    inter += pa && pb;
    uni += pa || pb;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

MaskGrid binarize(const MaskGrid& m, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ValueError("binarize: threshold must lie in (0,1)");
  MaskGrid out = m;
  for (double& x : out.v) x = (x >= threshold) ? 1.0 : 0.0;
  out.binary = true;
  return out;
}

BootstrapCi bootstrap_mean_ci(const std::vector<double>& xs, int resamples,
                              double level, std::uint64_t seed) {
  BootstrapCi ci;
  if (xs.empty()) return ci;
  double sum = 0;
  for (double x : xs) sum += x;
  ci.mean = sum / static_cast<double>(xs.size());
  Rng rng(seed);
  std::vector<double> means(resamples);
  for (int r = 0; r < resamples; ++r) {
    double s = 0;
    for (size_t i = 0; i < xs.size(); ++i) s += xs[rng.uniform_int(static_cast<int>(xs.size()))];
    means[r] = s / static_cast<double>(xs.size());
  }
  std::sort(means.begin(), means.end());
  double alpha = (1.0 - level) / 2.0;
  auto pick = [&means](double q) {
    int idx = static_cast<int>(q * (means.size() - 1));
    return means[std::clamp<int>(idx, 0, static_cast<int>(means.size()) - 1)];
  };
  ci.lo = pick(alpha);
  ci.hi = pick(1.0 - alpha);
  return ci;
}

}  // namespace xvseg
