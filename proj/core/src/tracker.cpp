#include "xvseg/tracker.hpp"

#include <algorithm>
#include <cmath>

#include "xvseg/errors.hpp"
#include "xvseg/ops.hpp"

namespace xvseg {

namespace {
Point2d clamp_into(const Point2d& p, int w, int h) {
  return {std::clamp(p.x, 0.0, static_cast<double>(w - 1)),
          std::clamp(p.y, 0.0, static_cast<double>(h - 1))};
}
}  // namespace

PointSet track_points(const PointSet& p_s, const Image& i_s, const Image& i_t,
                      const Tracker& tracker) {
  if (p_s.pts.empty()) throw ValueError("track_points: empty input point set");
  if (!p_s.in_bounds(i_s.w, i_s.h))
    throw ValueError("track_points: source points out of bounds");
  PointSet out = tracker.track(p_s, i_s, i_t);
  if (out.size() != p_s.size())
    throw ShapeError("tracker changed point cardinality");
  for (auto& p : out.pts) p = clamp_into(p, i_t.w, i_t.h);
  out.frame = FrameId::target;
  return out;
}

PointSet GroundTruthTracker::track(const PointSet& p_s, const Image&, const Image&) const {
  PointSet out;
  out.frame = FrameId::target;
  out.pts.reserve(p_s.size());
  for (const auto& p : p_s.pts) out.pts.push_back(transform_.apply(p));
  return out;
}

PointSet FeatureCorrelationTracker::track(const PointSet& p_s, const Image& i_s,
                                          const Image& i_t) const {
  if (bound_fs_ && bound_ft_)
    return track_with_features(p_s, *bound_fs_, *bound_ft_, i_t.w, i_t.h);
  EncodedPair enc = enc_->encode(i_s, i_t, /*joint=*/true);
  return track_with_features(p_s, enc.f_s, enc.f_t, i_t.w, i_t.h);
}

PointSet FeatureCorrelationTracker::track_with_features(const PointSet& p_s,
                                                        const FeatureMap& f_s,
                                                        const FeatureMap& f_t, int img_w,
                                                        int img_h) const {
  const double sx = static_cast<double>(f_s.w) / img_w;
  const double sy = static_cast<double>(f_s.h) / img_h;
  std::vector<std::array<double, 2>> feat_pts;
  feat_pts.reserve(p_s.size());
  for (const auto& p : p_s.pts)
    feat_pts.push_back({(p.x + 0.5) * sx - 0.5, (p.y + 0.5) * sy - 0.5});
  Tensor q = ops::bilinear_sample(f_s.t, feat_pts);

  PointSet out;
  out.frame = FrameId::target;
  for (int i = 0; i < q.rows(); ++i) {
    Eigen::RowVectorXd v = q.m.row(i);
    double vn = v.norm();
    if (vn < 1e-12) vn = 1e-12;
    Eigen::Index best = 0;
    double best_sim = -2.0;
    for (Eigen::Index r = 0; r < f_t.t.m.rows(); ++r) {
      double tn = f_t.t.m.row(r).norm();
      double sim = tn < 1e-12 ? -1.0 : v.dot(f_t.t.m.row(r)) / (vn * tn);
      if (sim > best_sim) {
        best_sim = sim;
        best = r;
      }
    }
    int fy = static_cast<int>(best) / f_t.w;
    int fx = static_cast<int>(best) % f_t.w;
    out.pts.push_back({(fx + 0.5) / sx - 0.5, (fy + 0.5) / sy - 0.5});
  }
  return out;
}

PointSet FixedPointsTracker::track(const PointSet& p_s, const Image&, const Image&) const {
  if (pts_.size() != p_s.size())
    throw ShapeError("external tracked points: cardinality mismatch");
  return pts_;
}

}  // namespace xvseg
