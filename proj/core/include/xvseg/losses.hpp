#pragma once

#include "xvseg/autograd.hpp"
#include "xvseg/image.hpp"

namespace xvseg {

inline constexpr double kFocalGamma = 2.0;
inline constexpr double kFocalAlpha = 0.25;
inline constexpr double kProbEps = 1e-7;
inline constexpr double kDiceSmooth = 1.0;

// Mean over pixels of -alpha_t (1 - p_t)^gamma log(p_t); predictions clamped
// to [eps, 1-eps] first. pred is a probability grid, gt a binary mask of the
// same shape.
Value focal_loss(Tape& tp, const Value& pred, const MaskGrid& gt);

// 1 - (2 sum(p g) + s) / (sum p + sum g + s), s = 1.
Value dice_loss(Tape& tp, const Value& pred, const MaskGrid& gt);

struct LossValues {
  Value focal, dice, total;
};
// total = focal_weight * focal + dice_weight * dice (defaults 20 : 1).
LossValues total_loss(Tape& tp, const Value& pred, const MaskGrid& gt,
                      double focal_weight = 20.0, double dice_weight = 1.0);

struct LossReport {
  double focal = 0, dice = 0, total = 0;
};
LossReport compute_loss(const MaskGrid& pred, const MaskGrid& gt, double focal_weight = 20.0,
                        double dice_weight = 1.0);

}  // namespace xvseg
