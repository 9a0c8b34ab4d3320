#include "xvseg/losses.hpp"

#include "xvseg/errors.hpp"

namespace xvseg {

namespace {
void check_pair(const Tensor& pred, const MaskGrid& gt, const char* op) {
  if (pred.h != gt.h || pred.w != gt.w || pred.cols() != 1)
    throw ShapeError(std::string(op) + ": prediction " + pred.shape_str() + " vs gt " +
                     std::to_string(gt.h) + "x" + std::to_string(gt.w));
  if (!gt.check_binary()) throw ValueError(std::string(op) + ": gt must be binary");
}
}  // namespace

Value focal_loss(Tape& tp, const Value& pred, const MaskGrid& gt) {
  check_pair(pred.t(), gt, "focal_loss");
  Value p = clamp(pred, kProbEps, 1.0 - kProbEps);
  Tensor g = gt.as_grid_tensor();
  Tensor alpha_t = g;
  alpha_t.m = (kFocalAlpha * g.m.array() + (1.0 - kFocalAlpha) * (1.0 - g.m.array())).matrix();
  Value gv = tp.constant(g);
  Value one_minus_g = tp.constant([&] {
    Tensor t = g;
    t.m = (1.0 - t.m.array()).matrix();
    return t;
  }());
  // p_t = p where gt == 1, (1 - p) where gt == 0
  Value pt = add(mul(p, gv), mul(add_scalar(scale(p, -1.0), 1.0), one_minus_g));
  Value focus = pow_const(add_scalar(scale(pt, -1.0), 1.0), kFocalGamma);
  Value nll = scale(log_elem(pt), -1.0);
  return mean_all(mul(tp.constant(alpha_t), mul(focus, nll)));
}

Value dice_loss(Tape& tp, const Value& pred, const MaskGrid& gt) {
  check_pair(pred.t(), gt, "dice_loss");
  Tensor g = gt.as_grid_tensor();
  double gt_sum = g.m.sum();
  Value inter = sum_all(mul(pred, tp.constant(g)));
  Value num = add_scalar(scale(inter, 2.0), kDiceSmooth);
  Value den = add_scalar(sum_all(pred), gt_sum + kDiceSmooth);
  return add_scalar(scale(div_elem(num, den), -1.0), 1.0);
}

LossValues total_loss(Tape& tp, const Value& pred, const MaskGrid& gt, double focal_weight,
                      double dice_weight) {
  LossValues lv;
  lv.focal = focal_loss(tp, pred, gt);
  lv.dice = dice_loss(tp, pred, gt);
  lv.total = add(scale(lv.focal, focal_weight), scale(lv.dice, dice_weight));
  return lv;
}

LossReport compute_loss(const MaskGrid& pred, const MaskGrid& gt, double focal_weight,
                        double dice_weight) {
  Tape tp(false);
  Value p = tp.constant(pred.as_grid_tensor());
  LossValues lv = total_loss(tp, p, gt, focal_weight, dice_weight);
  return LossReport{lv.focal.t().item(), lv.dice.t().item(), lv.total.t().item()};
}

}  // namespace xvseg
