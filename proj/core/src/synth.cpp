#include "xvseg/synth.hpp"

#include <algorithm>
#include <cmath>

#include "xvseg/errors.hpp"

namespace xvseg {

std::string to_string(Difficulty d) {
  switch (d) {
    case Difficulty::easy: return "easy";
    case Difficulty::medium: return "medium";
    default: return "hard";
  }
}

Difficulty parse_difficulty(const std::string& s) {
  if (s == "easy") return Difficulty::easy;
  if (s == "medium") return Difficulty::medium;
  if (s == "hard") return Difficulty::hard;
  throw ConfigError("unknown difficulty: " + s);
}

namespace {

// Deterministic per-pixel hash noise in [0,1); no RNG stream involved, so
// rendering order never matters.
inline double hash01(std::uint64_t x, std::uint64_t y, std::uint64_t seed) {
  std::uint64_t h = seed ^ (x * 0x9E3779B97F4A7C15ull) ^ (y * 0xC2B2AE3D27D4EB4Full);
  h ^= h >> 33;
  h *= 0xFF51AFD7ED558CCDull;
  h ^= h >> 33;
  h *= 0xC4CEB9FE1A85EC53ull;
  h ^= h >> 33;
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double segment_dist2(const Point2d& p, const Point2d& a, const Point2d& b) {
  double vx = b.x - a.x, vy = b.y - a.y;
  double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
  return dx * dx + dy * dy;
}

void hsv_to_rgb(double h, double s, double v, double* rgb) {
  h = h - std::floor(h);
  double i = std::floor(h * 6.0);
  double f = h * 6.0 - i;
  double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
  switch (static_cast<int>(i) % 6) {
    case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
    case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
    case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
    case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
    case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
    default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
  }
}

}  // namespace

bool ShapeSpec::contains(const Point2d& p) const {
  switch (kind) {
    case Kind::ellipse: {
      double dx = p.x - center.x, dy = p.y - center.y;
      double ca = std::cos(angle), sa = std::sin(angle);
      double u = ca * dx + sa * dy, v = -sa * dx + ca * dy;
      return (u * u) / (ax * ax) + (v * v) / (ay * ay) <= 1.0;
    }
    case Kind::polygon: {
      int pos = 0, neg = 0;
      const size_t n = verts.size();
      for (size_t i = 0; i < n; ++i) {
        const Point2d& a = verts[i];
        const Point2d& b = verts[(i + 1) % n];
        double cr = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
        if (cr > 0) ++pos;
        else if (cr < 0) ++neg;
      }
      return pos == 0 || neg == 0;
    }
    case Kind::capsule:
      return segment_dist2(p, cap_a, cap_b) <= cap_r * cap_r;
  }
  return false;
}

ShapeSpec ShapeSpec::transformed(const Affine2d& t) const {
  double s = std::sqrt(std::abs(t.det()));
  double rot = std::atan2(t.a21, t.a11);
  ShapeSpec out = *this;
  out.center = t.apply(center);
  out.ax = ax * s;
  out.ay = ay * s;
  out.angle = angle + rot;
  out.verts.clear();
  for (const auto& v : verts) out.verts.push_back(t.apply(v));
  out.cap_a = t.apply(cap_a);
  out.cap_b = t.apply(cap_b);
  out.cap_r = cap_r * s;
  return out;
}

Image render_view(const Scene& scene, const Affine2d& fwd, std::uint64_t jitter_seed) {
  const int n = scene.canvas;
  Affine2d inv = fwd.inverse();
  std::vector<ShapeSpec> placed;
  placed.reserve(scene.shapes.size());
  for (const auto& sh : scene.shapes) placed.push_back(sh.transformed(fwd));

  Image im = Image::filled(n, n, 0, 0, 0);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      Point2d p{static_cast<double>(x), static_cast<double>(y)};
      int top = -1;
      for (int i = static_cast<int>(placed.size()) - 1; i >= 0; --i)
        if (placed[i].contains(p)) {
          top = i;
          break;
        }
      double rgb[3];
      double amp;
      std::uint64_t tex;
      if (top >= 0) {
        rgb[0] = scene.shapes[top].color[0];
        rgb[1] = scene.shapes[top].color[1];
        rgb[2] = scene.shapes[top].color[2];
        amp = scene.shapes[top].noise_amp;
        tex = scene.shapes[top].texture_seed;
      } else {
        // Background moves with the scene: evaluate in scene coordinates.
        Point2d q = inv.apply(p);
        double g = 0.5 + 0.2 * std::sin(q.x * 0.045 + 1.1) + 0.2 * std::cos(q.y * 0.06);
        rgb[0] = 0.28 + 0.1 * g;
        rgb[1] = 0.30 + 0.12 * g;
        rgb[2] = 0.33 + 0.08 * g;
        amp = 0.03;
        tex = scene.bg_seed;
      }
      double noise = (hash01(static_cast<std::uint64_t>(x), static_cast<std::uint64_t>(y),
                             tex ^ jitter_seed) -
                      0.5) *
                     2.0 * amp;
      for (int ch = 0; ch < 3; ++ch)
        im.at(y, x, ch) = std::clamp(rgb[ch] + noise, 0.0, 1.0);
    }
  return im;
}

MaskGrid render_instance_mask(const Scene& scene, const Affine2d& fwd, int index) {
  const int n = scene.canvas;
  std::vector<ShapeSpec> placed;
  placed.reserve(scene.shapes.size());
  for (const auto& sh : scene.shapes) placed.push_back(sh.transformed(fwd));
  MaskGrid m = MaskGrid::zeros(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      Point2d p{static_cast<double>(x), static_cast<double>(y)};
      if (!placed[index].contains(p)) continue;
      bool covered = false;
      for (int j = index + 1; j < static_cast<int>(placed.size()) && !covered; ++j)
        covered = placed[j].contains(p);
      if (!covered) m.at(y, x) = 1.0;
    }
  return m;
}

MaskGrid render_amodal_mask(const Scene& scene, const Affine2d& fwd, int index) {
  const int n = scene.canvas;
  ShapeSpec placed = scene.shapes[index].transformed(fwd);
  MaskGrid m = MaskGrid::zeros(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      if (placed.contains({static_cast<double>(x), static_cast<double>(y)})) m.at(y, x) = 1.0;
  return m;
}

namespace {

ShapeSpec random_instance(Rng& rng, int canvas, int color_index) {
  ShapeSpec sh;
  double c = canvas;
  sh.center = {rng.uniform(0.22, 0.78) * c, rng.uniform(0.22, 0.78) * c};
  int kind = rng.uniform_int(3);
  if (kind == 0) {
    sh.kind = ShapeSpec::Kind::ellipse;
    sh.ax = rng.uniform(0.09, 0.16) * c;
    sh.ay = rng.uniform(0.09, 0.16) * c;
    sh.angle = rng.uniform(0.0, M_PI);
  } else if (kind == 1) {
    sh.kind = ShapeSpec::Kind::polygon;
    int nv = 5 + rng.uniform_int(3);
    double r0 = rng.uniform(0.10, 0.16) * c;
    double phase = rng.uniform(0.0, 2.0 * M_PI);
    for (int i = 0; i < nv; ++i) {
      double a = phase + 2.0 * M_PI * i / nv;
      double r = r0 * rng.uniform(0.8, 1.15);
      sh.verts.push_back({sh.center.x + r * std::cos(a), sh.center.y + r * std::sin(a)});
    }
  } else {
    sh.kind = ShapeSpec::Kind::capsule;
    double len = rng.uniform(0.14, 0.26) * c;
    double a = rng.uniform(0.0, M_PI);
    sh.cap_a = {sh.center.x - 0.5 * len * std::cos(a), sh.center.y - 0.5 * len * std::sin(a)};
    sh.cap_b = {sh.center.x + 0.5 * len * std::cos(a), sh.center.y + 0.5 * len * std::sin(a)};
    sh.cap_r = rng.uniform(0.06, 0.10) * c;
  }
  // Golden-angle hue walk keeps instance colors distinct.
  double hue = std::fmod(0.137 + color_index * 0.381966 + rng.uniform(0.0, 0.05), 1.0);
  hsv_to_rgb(hue, rng.uniform(0.55, 0.9), rng.uniform(0.55, 0.95), sh.color);
  sh.noise_amp = rng.uniform(0.02, 0.06);
  sh.texture_seed = static_cast<std::uint32_t>(rng.raw());
  return sh;
}

ShapeSpec make_occluder(Rng& rng, int canvas, const Point2d& over) {
  // Thin bar crossing near `over`.
  double c = canvas;
  ShapeSpec sh;
  sh.kind = ShapeSpec::Kind::polygon;
  sh.occluder = true;
  double angle = rng.uniform(0.0, M_PI);
  double half_w = rng.uniform(0.02, 0.045) * c;
  double off = rng.uniform(-0.05, 0.05) * c;
  double dx = std::cos(angle), dy = std::sin(angle);
  double nx = -dy, ny = dx;
  Point2d mid{over.x + nx * off, over.y + ny * off};
  double half_len = 1.2 * c;
  Point2d a{mid.x - dx * half_len, mid.y - dy * half_len};
  Point2d b{mid.x + dx * half_len, mid.y + dy * half_len};
  sh.verts = {{a.x + nx * half_w, a.y + ny * half_w},
              {b.x + nx * half_w, b.y + ny * half_w},
              {b.x - nx * half_w, b.y - ny * half_w},
              {a.x - nx * half_w, a.y - ny * half_w}};
  hsv_to_rgb(rng.uniform(0.0, 1.0), 0.2, rng.uniform(0.2, 0.45), sh.color);
  sh.noise_amp = 0.03;
  sh.texture_seed = static_cast<std::uint32_t>(rng.raw());
  return sh;
}

Point2d shape_anchor(const ShapeSpec& s) {
  if (s.kind == ShapeSpec::Kind::capsule)
    return {(s.cap_a.x + s.cap_b.x) / 2, (s.cap_a.y + s.cap_b.y) / 2};
  if (s.kind == ShapeSpec::Kind::polygon) {
    Point2d c{0, 0};
    for (const auto& v : s.verts) {
      c.x += v.x;
      c.y += v.y;
    }
    c.x /= static_cast<double>(s.verts.size());
    c.y /= static_cast<double>(s.verts.size());
    return c;
  }
  return s.center;
}

double visible_fraction(const Scene& scene, const Affine2d& fwd, int index) {
  MaskGrid vis = render_instance_mask(scene, fwd, index);
  MaskGrid amo = render_amodal_mask(scene, fwd, index);
  std::size_t a = amo.foreground_count();
  if (a == 0) return 0.0;
  return static_cast<double>(vis.foreground_count()) / static_cast<double>(a);
}

bool fully_in_frame(const Scene& scene, const Affine2d& fwd, int index) {
  MaskGrid amo = render_amodal_mask(scene, fwd, index);
  if (amo.foreground_count() == 0) return false;
  for (int x = 0; x < amo.w; ++x)
    if (amo.at(0, x) != 0.0 || amo.at(amo.h - 1, x) != 0.0) return false;
  for (int y = 0; y < amo.h; ++y)
    if (amo.at(y, 0) != 0.0 || amo.at(y, amo.w - 1) != 0.0) return false;
  return true;
}

}  // namespace

Scene generate_scene(Rng& rng, Difficulty difficulty, int canvas) {
  Scene scene;
  scene.canvas = canvas;
  scene.bg_seed = rng.raw();
  int lo = 1, hi = 3;
  if (difficulty == Difficulty::medium) {
    lo = 3;
    hi = 6;
  } else if (difficulty == Difficulty::hard) {
    lo = 5;
    hi = 9;
  }
  int count = lo + rng.uniform_int(hi - lo + 1);
  for (int i = 0; i < count; ++i) scene.shapes.push_back(random_instance(rng, canvas, i));
  scene.query_index = rng.uniform_int(count);

  if (difficulty != Difficulty::easy) {
    // Same-shape same-color near-duplicate of the queried instance.
    ShapeSpec d = scene.shapes[scene.query_index];
    double ox = rng.uniform(0.18, 0.3) * canvas * (rng.bernoulli(0.5) ? 1 : -1);
    double oy = rng.uniform(0.18, 0.3) * canvas * (rng.bernoulli(0.5) ? 1 : -1);
    d = d.transformed(Affine2d::translation(ox, oy));
    d.texture_seed = static_cast<std::uint32_t>(rng.raw());
    scene.shapes.push_back(d);
  }

  if (difficulty == Difficulty::hard) {
    Point2d anchor = shape_anchor(scene.shapes[scene.query_index]);
    int bars = 1 + rng.uniform_int(2);
    for (int attempt = 0; attempt < 12 && bars > 0; ++attempt) {
      ShapeSpec occ = make_occluder(rng, canvas, anchor);
      scene.shapes.push_back(occ);
      if (visible_fraction(scene, Affine2d::identity(), scene.query_index) >= 0.25) {
        --bars;
      } else {
        scene.shapes.pop_back();  // too much occlusion, try a thinner/shifted bar
      }
    }
  }
  return scene;
}

ViewTransform sample_view_transform(Rng& rng, Difficulty difficulty, int canvas) {
  double smin = 0.85, smax = 1.15, rot = 15.0, trans = 0.10;
  if (difficulty == Difficulty::medium) {
    smin = 0.75;
    smax = 1.30;
    rot = 25.0;
    trans = 0.15;
  } else if (difficulty == Difficulty::hard) {
    smin = 0.70;
    smax = 1.40;
    rot = 35.0;
    trans = 0.20;
  }
  double s = rng.uniform(smin, smax);
  double a = rng.uniform(-rot, rot) * M_PI / 180.0;
  double dx = rng.uniform(-trans, trans) * canvas;
  double dy = rng.uniform(-trans, trans) * canvas;
  Point2d center{(canvas - 1) / 2.0, (canvas - 1) / 2.0};
  ViewTransform t;
  t.fwd = Affine2d::similarity(s, a, center, dx, dy);
  t.jitter_seed = rng.raw();
  return t;
}

SynthPair render_pair(const Scene& scene, const ViewTransform& t, int query_index) {
  if (query_index < 0 || query_index >= static_cast<int>(scene.shapes.size()))
    throw ValueError("render_pair: bad query index");
  SynthPair pair;
  pair.scene = scene;
  pair.view = t;
  pair.transform = t.fwd;
  pair.i_s = render_view(scene, Affine2d::identity(), Rng::mix(t.jitter_seed, 1));
  pair.i_t = render_view(scene, t.fwd, Rng::mix(t.jitter_seed, 2));
  pair.m_s = render_instance_mask(scene, Affine2d::identity(), query_index);
  pair.m_t = render_instance_mask(scene, t.fwd, query_index);
  return pair;
}

SynthPair generate_pair(std::uint64_t seed, std::uint64_t id, Difficulty difficulty,
                        int canvas) {
  Rng rng = Rng(seed).derive(id, 0x7061697273ull);
  const double min_visible = 0.2;
  for (int scene_try = 0; scene_try < 6; ++scene_try) {
    Scene scene = generate_scene(rng, difficulty, canvas);
    if (!fully_in_frame(scene, Affine2d::identity(), scene.query_index)) continue;
    if (visible_fraction(scene, Affine2d::identity(), scene.query_index) < min_visible)
      continue;
    for (int t_try = 0; t_try < 10; ++t_try) {
      ViewTransform vt = sample_view_transform(rng, difficulty, canvas);
      if (!fully_in_frame(scene, vt.fwd, scene.query_index)) continue;
      if (visible_fraction(scene, vt.fwd, scene.query_index) < min_visible) continue;
      SynthPair pair = render_pair(scene, vt, scene.query_index);
      pair.difficulty = difficulty;
      if (pair.m_s.empty_mask() || pair.m_t.empty_mask()) continue;
      return pair;
    }
  }
  throw ValueError("generate_pair: could not place queried instance (seed " +
                   std::to_string(seed) + ", id " + std::to_string(id) + ")");
}

}  // namespace xvseg
