#pragma once

#include <string>
#include <vector>

#include "xvseg/geometry.hpp"
#include "xvseg/image.hpp"
#include "xvseg/rng.hpp"

namespace xvseg {

enum class Difficulty { easy, medium, hard };
std::string to_string(Difficulty d);
Difficulty parse_difficulty(const std::string& s);

// A scene is a z-ordered list of colored shapes on a textured background.
// Occluder bars are ordinary scene elements drawn on top, so the whole scene
// moves rigidly under a view transform and ground-truth masks stay
// consistent between views.
struct ShapeSpec {
  enum class Kind { ellipse, polygon, capsule };
  Kind kind = Kind::ellipse;
  // ellipse
  Point2d center;
  double ax = 0, ay = 0, angle = 0;
  // polygon (convex, also used for occluder bars)
  std::vector<Point2d> verts;
  // capsule
  Point2d cap_a, cap_b;
  double cap_r = 0;

  double color[3] = {0.5, 0.5, 0.5};
  double noise_amp = 0.04;
  std::uint32_t texture_seed = 0;
  bool occluder = false;

  bool contains(const Point2d& p) const;
  ShapeSpec transformed(const Affine2d& t) const;  // similarity transforms only
};

struct Scene {
  int canvas = 0;
  std::vector<ShapeSpec> shapes;  // index order = z order, later on top
  int query_index = 0;
  std::uint64_t bg_seed = 0;
};

// Geometry of the second view plus the per-view sampling-noise seed. The two
// views are re-rasterized independently, never pixel-warped.
struct ViewTransform {
  Affine2d fwd;  // source pixel -> target pixel
  std::uint64_t jitter_seed = 0;
};

Scene generate_scene(Rng& rng, Difficulty difficulty, int canvas);
ViewTransform sample_view_transform(Rng& rng, Difficulty difficulty, int canvas);

Image render_view(const Scene& scene, const Affine2d& fwd, std::uint64_t jitter_seed);
// Visible (occlusion-aware) mask of one instance in the given view.
MaskGrid render_instance_mask(const Scene& scene, const Affine2d& fwd, int index);
// Full silhouette ignoring occlusion.
MaskGrid render_amodal_mask(const Scene& scene, const Affine2d& fwd, int index);

struct SynthPair {
  Image i_s, i_t;
  MaskGrid m_s, m_t;
  Affine2d transform;
  Difficulty difficulty = Difficulty::medium;
  Scene scene;
  ViewTransform view;
};

// Renders both views of the queried instance; retries the transform (and
// eventually the scene) until the instance is fully in frame in both views
// with enough visible area.
SynthPair render_pair(const Scene& scene, const ViewTransform& t, int query_index);
SynthPair generate_pair(std::uint64_t seed, std::uint64_t id, Difficulty difficulty,
                        int canvas);

}  // namespace xvseg
