#include "xvseg/viz.hpp"

#include <algorithm>
#include <cmath>

#include "xvseg/errors.hpp"

namespace xvseg {

Image overlay_mask(const Image& im, const MaskGrid& mask, double r, double g, double b,
                   double alpha) {
  if (im.h != mask.h || im.w != mask.w)
    throw ShapeError("overlay_mask: image/mask size mismatch");
  Image out = im;
  const double tint[3] = {r, g, b};
  for (int y = 0; y < im.h; ++y)
    for (int x = 0; x < im.w; ++x) {
      double a = alpha * mask.at(y, x);
      if (a <= 0) continue;
      for (int ch = 0; ch < 3; ++ch)
        out.at(y, x, ch) = std::clamp((1 - a) * im.at(y, x, ch) + a * tint[ch], 0.0, 1.0);
    }
  return out;
}

void draw_points(Image& im, const PointSet& pts, double r, double g, double b, int radius) {
  const double col[3] = {r, g, b};
  for (const auto& p : pts.pts) {
    int cx = static_cast<int>(std::lround(p.x));
    int cy = static_cast<int>(std::lround(p.y));
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx) {
        if (dx * dx + dy * dy > radius * radius) continue;
        int x = cx + dx, y = cy + dy;
        if (x < 0 || y < 0 || x >= im.w || y >= im.h) continue;
        for (int ch = 0; ch < 3; ++ch) im.at(y, x, ch) = col[ch];
      }
  }
}

}  // namespace xvseg
