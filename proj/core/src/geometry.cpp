#include "xvseg/geometry.hpp"

#include <cmath>

#include "xvseg/errors.hpp"

namespace xvseg {

Affine2d Affine2d::inverse() const {
  double d = det();
  if (std::abs(d) < 1e-12) throw ValueError("Affine2d: singular transform");
  Affine2d inv;
  inv.a11 = a22 / d;
  inv.a12 = -a12 / d;
  inv.a21 = -a21 / d;
  inv.a22 = a11 / d;
  inv.tx = -(inv.a11 * tx + inv.a12 * ty);
  inv.ty = -(inv.a21 * tx + inv.a22 * ty);
  return inv;
}

Affine2d Affine2d::then(const Affine2d& n) const {
  Affine2d r;
  r.a11 = n.a11 * a11 + n.a12 * a21;
  r.a12 = n.a11 * a12 + n.a12 * a22;
  r.a21 = n.a21 * a11 + n.a22 * a21;
  r.a22 = n.a21 * a12 + n.a22 * a22;
  r.tx = n.a11 * tx + n.a12 * ty + n.tx;
  r.ty = n.a21 * tx + n.a22 * ty + n.ty;
  return r;
}

Affine2d Affine2d::similarity(double scale, double radians, const Point2d& center,
                              double dx, double dy) {
  double c = std::cos(radians) * scale, s = std::sin(radians) * scale;
  Affine2d r;
  r.a11 = c;
  r.a12 = -s;
  r.a21 = s;
  r.a22 = c;
  // rotate/scale about center, then translate
  r.tx = center.x - (c * center.x - s * center.y) + dx;
  r.ty = center.y - (s * center.x + c * center.y) + dy;
  return r;
}

Affine2d Affine2d::hflip(double width) {
  Affine2d r;
  r.a11 = -1;
  r.tx = width - 1;
  return r;
}

}  // namespace xvseg
