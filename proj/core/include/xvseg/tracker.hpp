#pragma once

#include <memory>
#include <string>

#include "xvseg/encoder.hpp"
#include "xvseg/geometry.hpp"

namespace xvseg {

// Projects source-frame points into the target frame. Implementations may be
// exact (ground truth transform) or drifting (feature correlation); the head
// must tolerate both.
class Tracker {
 public:
  virtual ~Tracker() = default;
  virtual PointSet track(const PointSet& p_s, const Image& i_s, const Image& i_t) const = 0;
  virtual std::string id() const = 0;
};

// Validates preconditions, delegates, clamps outputs into target bounds and
// preserves order/cardinality.
PointSet track_points(const PointSet& p_s, const Image& i_s, const Image& i_t,
                      const Tracker& tracker);

// Applies a known source->target transform pointwise.
class GroundTruthTracker final : public Tracker {
 public:
  explicit GroundTruthTracker(const Affine2d& transform) : transform_(transform) {}
  PointSet track(const PointSet& p_s, const Image& i_s, const Image& i_t) const override;
  std::string id() const override { return "ground_truth"; }

 private:
  Affine2d transform_;
};

// For each source point, samples its feature vector and picks the target
// feature cell with the highest cosine similarity. Imperfect on purpose.
class FeatureCorrelationTracker final : public Tracker {
 public:
  FeatureCorrelationTracker(const EncoderProvider& enc, const RunConfig& cfg)
      : enc_(&enc), cfg_(cfg) {}
  // Binds precomputed features; track() then skips re-encoding.
  FeatureCorrelationTracker(FeatureMap f_s, FeatureMap f_t, const RunConfig& cfg)
      : cfg_(cfg), bound_fs_(std::move(f_s)), bound_ft_(std::move(f_t)) {}
  PointSet track(const PointSet& p_s, const Image& i_s, const Image& i_t) const override;
  PointSet track_with_features(const PointSet& p_s, const FeatureMap& f_s,
                               const FeatureMap& f_t, int img_w, int img_h) const;
  std::string id() const override { return "feature_correlation"; }

 private:
  const EncoderProvider* enc_ = nullptr;
  RunConfig cfg_;
  std::optional<FeatureMap> bound_fs_, bound_ft_;
};

// Replays a fixed point list (e.g. loaded from an external feature bundle).
class FixedPointsTracker final : public Tracker {
 public:
  explicit FixedPointsTracker(PointSet pts) : pts_(std::move(pts)) {}
  PointSet track(const PointSet& p_s, const Image& i_s, const Image& i_t) const override;
  std::string id() const override { return "external"; }

 private:
  PointSet pts_;
};

}  // namespace xvseg
