#include "xvseg/kmeans.hpp"

#include <algorithm>
#include <limits>

#include "xvseg/errors.hpp"

namespace xvseg {

std::vector<Point2d> mask_foreground(const MaskGrid& m) {
  std::vector<Point2d> fg;
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x)
      if (m.at(y, x) >= 0.5) fg.push_back({static_cast<double>(x), static_cast<double>(y)});
  return fg;
}

namespace {
inline double d2(const Point2d& a, const Point2d& b) {
  double dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}
}  // namespace

SampledPoints kmeans_sample(const std::vector<Point2d>& input, int k, Rng& rng) {
  if (input.empty()) throw ValueError("kmeans_sample: no points");
  if (k < 1) throw ValueError("kmeans_sample: k must be >= 1");

  // Canonical row-major order makes the result independent of the caller's
  // enumeration order.
  std::vector<Point2d> pts = input;
  std::sort(pts.begin(), pts.end(), [](const Point2d& a, const Point2d& b) {
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  });
  const int n = static_cast<int>(pts.size());

  SampledPoints out;
  out.points.frame = FrameId::source;
  if (k >= n) {
    out.points.pts = pts;
    while (static_cast<int>(out.points.pts.size()) < k)
      out.points.pts.push_back(pts.back());
    out.distinct = n;
    out.padded = k > n;
    return out;
  }

  // k-means++ seeding.
  std::vector<Point2d> centers;
  centers.reserve(k);
  centers.push_back(pts[rng.uniform_int(n)]);
  std::vector<double> dist2(n);
  for (int j = 1; j < k; ++j) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::max();
      for (const auto& c : centers) best = std::min(best, d2(pts[i], c));
      dist2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      centers.push_back(pts[rng.uniform_int(n)]);
      continue;
    }
    double r = rng.uniform() * total;
    double acc = 0.0;
    int chosen = n - 1;
    for (int i = 0; i < n; ++i) {
      acc += dist2[i];
      if (acc > r) {
        chosen = i;
        break;
      }
    }
    centers.push_back(pts[chosen]);
  }

  // Exactly one Lloyd step.
  std::vector<int> assign(n);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    double bd = d2(pts[i], centers[0]);
    for (int j = 1; j < k; ++j) {
      double dj = d2(pts[i], centers[j]);
      if (dj < bd) {
        bd = dj;
        best = j;
      }
    }
    assign[i] = best;
  }
  std::vector<Point2d> means(k, {0, 0});
  std::vector<int> count(k, 0);
  for (int i = 0; i < n; ++i) {
    means[assign[i]].x += pts[i].x;
    means[assign[i]].y += pts[i].y;
    count[assign[i]]++;
  }
  for (int j = 0; j < k; ++j) {
    if (count[j] > 0) {
      centers[j] = {means[j].x / count[j], means[j].y / count[j]};
    }
    // empty cluster: keep the seeded center
  }

  // Snap centroids back onto actual foreground pixels.
  for (int j = 0; j < k; ++j) {
    int best = 0;
    double bd = d2(centers[j], pts[0]);
    for (int i = 1; i < n; ++i) {
      double di = d2(centers[j], pts[i]);
      if (di < bd) {
        bd = di;
        best = i;
      }
    }
    out.points.pts.push_back(pts[best]);
  }
  out.distinct = k;
  return out;
}

SampledPoints sample_points(const MaskGrid& m, int k, Rng& rng) {
  if (!m.check_binary()) throw ValueError("sample_points: mask must be binary");
  auto fg = mask_foreground(m);
  if (fg.empty()) throw ValueError("empty source mask");
  return kmeans_sample(fg, k, rng);
}

}  // namespace xvseg
