#pragma once

#include <array>

#include "xvseg/image.hpp"

namespace xvseg {

// 2-D affine map p -> A p + t.
struct Affine2d {
  double a11 = 1, a12 = 0, a21 = 0, a22 = 1;
  double tx = 0, ty = 0;

  Point2d apply(const Point2d& p) const {
    return {a11 * p.x + a12 * p.y + tx, a21 * p.x + a22 * p.y + ty};
  }
  Affine2d inverse() const;
  Affine2d then(const Affine2d& next) const;  // next ∘ this
  double det() const { return a11 * a22 - a12 * a21; }

  static Affine2d identity() { return {}; }
  static Affine2d translation(double dx, double dy) { return {1, 0, 0, 1, dx, dy}; }
  // Rotation by `radians` and uniform scale about `center`.
  static Affine2d similarity(double scale, double radians, const Point2d& center,
                             double dx = 0, double dy = 0);
  static Affine2d hflip(double width);  // mirror about the vertical image axis
};

}  // namespace xvseg
