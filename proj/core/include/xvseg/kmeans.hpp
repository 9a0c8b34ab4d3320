#pragma once

#include <vector>

#include "xvseg/image.hpp"
#include "xvseg/rng.hpp"

namespace xvseg {

struct SampledPoints {
  PointSet points;
  int distinct = 0;   // number of distinct points before padding
  bool padded = false;  // k exceeded the foreground size; last point repeated
};

// Foreground pixels of a binary mask as (x, y) coordinates, row-major order.
std::vector<Point2d> mask_foreground(const MaskGrid& m);

// k-means++ seeding followed by exactly one Lloyd assignment/update step,
// with each resulting centroid snapped to the nearest input point.
//
// The exact draw protocol (relied upon by reference implementations):
//   1. points are canonicalized to row-major (y, x) order internally
//   2. first center: points[rng.uniform_int(n)]
//   3. each next center: one rng.uniform() u; choose the first point whose
//      cumulative D^2 weight exceeds u * total, where D^2 is the squared
//      distance to the nearest chosen center (total == 0 falls back to
//      rng.uniform_int(n))
//   4. one Lloyd step: assign to nearest center (ties -> lowest center
//      index); empty clusters keep their center
//   5. snap each centroid to the nearest point (ties -> lowest row-major
//      index)
// k >= n returns all n points (row-major) and repeats the last one.
SampledPoints kmeans_sample(const std::vector<Point2d>& points, int k, Rng& rng);

// Representative foreground points of a mask. Throws ValueError("empty
// source mask") when the mask has no foreground.
SampledPoints sample_points(const MaskGrid& m, int k, Rng& rng);

}  // namespace xvseg
