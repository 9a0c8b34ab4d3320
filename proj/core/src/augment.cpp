#include "xvseg/augment.hpp"

#include <algorithm>
#include <cmath>

#include "xvseg/errors.hpp"
#include "xvseg/kmeans.hpp"

namespace xvseg {

namespace {

inline double deg2rad(double d) { return d * M_PI / 180.0; }

double sample_bilinear_channel(const Image& im, double x, double y, int ch) {
  x = std::clamp(x, 0.0, static_cast<double>(im.w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(im.h - 1));
  int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  int x1 = std::min(x0 + 1, im.w - 1), y1 = std::min(y0 + 1, im.h - 1);
  double wx = x - x0, wy = y - y0;
  return (1 - wy) * ((1 - wx) * im.at(y0, x0, ch) + wx * im.at(y0, x1, ch)) +
         wy * ((1 - wx) * im.at(y1, x0, ch) + wx * im.at(y1, x1, ch));
}

}  // namespace

Image warp_image(const Image& im, const Affine2d& fwd) {
  Affine2d inv = fwd.inverse();
  Image out = Image::filled(im.h, im.w, 0, 0, 0);
  for (int y = 0; y < im.h; ++y)
    for (int x = 0; x < im.w; ++x) {
      Point2d p = inv.apply({static_cast<double>(x), static_cast<double>(y)});
      for (int ch = 0; ch < 3; ++ch) out.at(y, x, ch) = sample_bilinear_channel(im, p.x, p.y, ch);
    }
  return out;
}

MaskGrid warp_mask(const MaskGrid& m, const Affine2d& fwd) {
  Affine2d inv = fwd.inverse();
  MaskGrid out = MaskGrid::zeros(m.h, m.w);
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) {
      Point2d p = inv.apply({static_cast<double>(x), static_cast<double>(y)});
      if (p.x < -0.5 || p.y < -0.5 || p.x > m.w - 0.5 || p.y > m.h - 0.5) continue;
      double xx = std::clamp(p.x, 0.0, static_cast<double>(m.w - 1));
      double yy = std::clamp(p.y, 0.0, static_cast<double>(m.h - 1));
      int x0 = static_cast<int>(std::floor(xx)), y0 = static_cast<int>(std::floor(yy));
      int x1 = std::min(x0 + 1, m.w - 1), y1 = std::min(y0 + 1, m.h - 1);
      double wx = xx - x0, wy = yy - y0;
      double v = (1 - wy) * ((1 - wx) * m.at(y0, x0) + wx * m.at(y0, x1)) +
                 wy * ((1 - wx) * m.at(y1, x0) + wx * m.at(y1, x1));
      out.at(y, x) = v >= 0.5 ? 1.0 : 0.0;
    }
  out.binary = true;
  return out;
}

namespace {

// Bounding box of the foreground, [x0, x1] x [y0, y1] inclusive.
struct Bbox {
  int x0, y0, x1, y1;
};
Bbox mask_bbox(const MaskGrid& m) {
  Bbox b{m.w, m.h, -1, -1};
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x)
      if (m.at(y, x) >= 0.5) {
        b.x0 = std::min(b.x0, x);
        b.y0 = std::min(b.y0, y);
        b.x1 = std::max(b.x1, x);
        b.y1 = std::max(b.y1, y);
      }
  return b;
}

Affine2d sample_adaptive_transform(const MaskGrid& mask, Rng& rng, int w, int h) {
  double s = rng.uniform(0.7, 1.3);
  double rot = deg2rad(rng.uniform(-15.0, 15.0));
  // Crop window keeping at least 60% of the area, positioned to contain the
  // object when it fits; the window is then stretched back to full size.
  double area_frac = rng.uniform(0.6, 1.0);
  double side_frac = std::sqrt(area_frac);
  int cw = std::max(2, static_cast<int>(std::lround(side_frac * w)));
  int chh = std::max(2, static_cast<int>(std::lround(side_frac * h)));
  Bbox bb = mask_bbox(mask);
  int x_lo = std::max(0, bb.x1 - cw + 1), x_hi = std::min(w - cw, bb.x0);
  int y_lo = std::max(0, bb.y1 - chh + 1), y_hi = std::min(h - chh, bb.y0);
  int cx0, cy0;
  if (x_lo <= x_hi && y_lo <= y_hi) {  // window can contain the whole object
    cx0 = x_lo + rng.uniform_int(x_hi - x_lo + 1);
    cy0 = y_lo + rng.uniform_int(y_hi - y_lo + 1);
  } else {
    cx0 = rng.uniform_int(std::max(1, w - cw + 1));
    cy0 = rng.uniform_int(std::max(1, h - chh + 1));
  }
  Affine2d crop{static_cast<double>(w) / cw, 0, 0, static_cast<double>(h) / chh,
                -static_cast<double>(w) * cx0 / cw, -static_cast<double>(h) * cy0 / chh};
  Point2d center{(w - 1) / 2.0, (h - 1) / 2.0};
  return Affine2d::similarity(s, rot, center).then(crop);
}

Affine2d sample_non_adaptive_transform(Rng& rng, int w, int h) {
  Point2d center{(w - 1) / 2.0, (h - 1) / 2.0};
  int option = rng.uniform_int(4);
  if (option == 3) return Affine2d::hflip(w);
  double base = 90.0 * (option + 1);
  double rot = deg2rad(base + rng.uniform(-15.0, 15.0));
  return Affine2d::similarity(1.0, rot, center);
}

}  // namespace

AugmentedPair augment(const Image& image, const MaskGrid& mask, AugFamily family, Rng& rng) {
  if (mask.empty_mask()) throw ValueError("augment: empty mask");
  if (image.h != mask.h || image.w != mask.w)
    throw ShapeError("augment: image/mask size mismatch");
  for (int attempt = 0; attempt < kAugmentRetries; ++attempt) {
    Affine2d t = family == AugFamily::adaptive
                     ? sample_adaptive_transform(mask, rng, image.w, image.h)
                     : sample_non_adaptive_transform(rng, image.w, image.h);
    MaskGrid m_tgt = warp_mask(mask, t);
    if (m_tgt.empty_mask()) continue;
    AugmentedPair pair;
    pair.src = image;
    pair.m_src = mask;
    pair.tgt = warp_image(image, t);
    pair.m_tgt = std::move(m_tgt);
    pair.transform = t;
    pair.family = family;
    return pair;
  }
  throw ValueError("object lost under augmentation");
}

std::pair<PointSet, PointSet> synthesize_prompts(const AugmentedPair& pair,
                                                 const Tracker& adaptive_tracker,
                                                 const RunConfig& cfg, Rng& rng,
                                                 double noise_frac) {
  SampledPoints sp = sample_points(pair.m_src, cfg.k_points, rng);
  PointSet p_s = sp.points;
  PointSet p_t;
  if (pair.family == AugFamily::adaptive) {
    p_t = track_points(p_s, pair.src, pair.tgt, adaptive_tracker);
  } else {
    p_t.frame = FrameId::target;
    double diag = std::hypot(static_cast<double>(pair.tgt.w), static_cast<double>(pair.tgt.h));
    double sigma = noise_frac * diag;
    for (const auto& p : p_s.pts) {
      Point2d q = pair.transform.apply(p);
      q.x = std::clamp(q.x + rng.normal(0.0, sigma), 0.0, static_cast<double>(pair.tgt.w - 1));
      q.y = std::clamp(q.y + rng.normal(0.0, sigma), 0.0, static_cast<double>(pair.tgt.h - 1));
      p_t.pts.push_back(q);
    }
  }
  return {p_s, p_t};
}

}  // namespace xvseg
