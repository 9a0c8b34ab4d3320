#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "xvseg/kmeans.hpp"

using namespace xvseg;

namespace {

// Independent reference: straight-line reimplementation of the documented
// protocol (k-means++ seeding, one Lloyd step, snap), sharing only the Rng.
std::vector<Point2d> reference_kmeans(std::vector<Point2d> pts, int k, Rng& rng) {
  std::sort(pts.begin(), pts.end(), [](const Point2d& a, const Point2d& b) {
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  });
  const int n = static_cast<int>(pts.size());
  if (k >= n) {
    std::vector<Point2d> out = pts;
    while (static_cast<int>(out.size()) < k) out.push_back(pts.back());
    return out;
  }
  auto sqd = [](const Point2d& a, const Point2d& b) {
    return (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y);
  };
  std::vector<Point2d> centers{pts[rng.uniform_int(n)]};
  while (static_cast<int>(centers.size()) < k) {
    std::vector<double> d2(n);
    double total = 0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::max();
      for (const auto& c : centers) best = std::min(best, sqd(pts[i], c));
      d2[i] = best;
      total += best;
    }
    if (total <= 0) {
      centers.push_back(pts[rng.uniform_int(n)]);
      continue;
    }
    double r = rng.uniform() * total;
    double acc = 0;
    int chosen = n - 1;
    for (int i = 0; i < n; ++i) {
      acc += d2[i];
      if (acc > r) {
        chosen = i;
        break;
      }
    }
    centers.push_back(pts[chosen]);
  }
  // one Lloyd step
  std::vector<double> sx(k, 0), sy(k, 0);
  std::vector<int> cnt(k, 0);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    double bd = sqd(pts[i], centers[0]);
    for (int j = 1; j < k; ++j) {
      double d = sqd(pts[i], centers[j]);
      if (d < bd) {
        bd = d;
        best = j;
      }
    }
    sx[best] += pts[i].x;
    sy[best] += pts[i].y;
    cnt[best]++;
  }
  for (int j = 0; j < k; ++j)
    if (cnt[j] > 0) centers[j] = {sx[j] / cnt[j], sy[j] / cnt[j]};
  // snap
  std::vector<Point2d> out;
  for (int j = 0; j < k; ++j) {
    int best = 0;
    double bd = sqd(centers[j], pts[0]);
    for (int i = 1; i < n; ++i) {
      double d = sqd(centers[j], pts[i]);
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    out.push_back(pts[best]);
  }
  return out;
}

MaskGrid random_small_mask(Rng& rng, int max_fg) {
  MaskGrid m = MaskGrid::zeros(16, 16);
  int fg = 1 + rng.uniform_int(max_fg);
  for (int i = 0; i < fg; ++i) m.at(rng.uniform_int(16), rng.uniform_int(16)) = 1.0;
  return m;
}

bool same_points(const std::vector<Point2d>& a, const std::vector<Point2d>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i].x != b[i].x || a[i].y != b[i].y) return false;
  return true;
}

}  // namespace

TEST_CASE("matches the independent reference on 100 random masks") {
  Rng meta(2024);
  for (int trial = 0; trial < 100; ++trial) {
    MaskGrid m = random_small_mask(meta, 50);
    int k = 1 + meta.uniform_int(5);
    std::uint64_t seed = meta.raw();
    Rng r1(seed), r2(seed);
    SampledPoints ours = sample_points(m, k, r1);
    std::vector<Point2d> ref = reference_kmeans(mask_foreground(m), k, r2);
    REQUIRE(ours.points.size() == static_cast<size_t>(k));
    CHECK(same_points(ours.points.pts, ref));
  }
}

TEST_CASE("five pixels, k=5 returns exactly those pixels") {
  MaskGrid m = MaskGrid::zeros(10, 10);
  std::set<std::pair<int, int>> want;
  m.at(1, 2) = 1;
  m.at(3, 7) = 1;
  m.at(5, 5) = 1;
  m.at(8, 1) = 1;
  m.at(9, 9) = 1;
  want = {{2, 1}, {7, 3}, {5, 5}, {1, 8}, {9, 9}};
  Rng rng(1);
  SampledPoints sp = sample_points(m, 5, rng);
  std::set<std::pair<int, int>> got;
  for (const auto& p : sp.points.pts)
    got.insert({static_cast<int>(p.x), static_cast<int>(p.y)});
  CHECK(got == want);
  CHECK(!sp.padded);
}

TEST_CASE("k=1 returns the foreground pixel nearest the centroid (brute-force oracle)") {
  Rng meta(77);
  for (int trial = 0; trial < 30; ++trial) {
    MaskGrid m = random_small_mask(meta, 40);
    auto fg = mask_foreground(m);
    double cx = 0, cy = 0;
    for (const auto& p : fg) {
      cx += p.x;
      cy += p.y;
    }
    cx /= fg.size();
    cy /= fg.size();
    double best = std::numeric_limits<double>::max();
    Point2d want{};
    for (const auto& p : fg) {  // row-major scan; ties keep the first
      double d = (p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy);
      if (d < best) {
        best = d;
        want = p;
      }
    }
    Rng rng(trial);
    SampledPoints sp = sample_points(m, 1, rng);
    REQUIRE(sp.points.size() == 1);
    CHECK(sp.points.pts[0].x == want.x);
    CHECK(sp.points.pts[0].y == want.y);
  }
}

TEST_CASE("k=5 on a large mask returns 5 foreground points") {
  MaskGrid m = MaskGrid::zeros(518, 518);
  for (int y = 100; y < 300; ++y)
    for (int x = 150; x < 400; ++x) m.at(y, x) = 1.0;
  Rng rng(3);
  SampledPoints sp = sample_points(m, 5, rng);
  REQUIRE(sp.points.size() == 5);
  for (const auto& p : sp.points.pts) CHECK(m.at(static_cast<int>(p.y), static_cast<int>(p.x)) == 1.0);
}

TEST_CASE("empty mask errors; k > |fg| pads with the last point") {
  MaskGrid empty = MaskGrid::zeros(8, 8);
  Rng rng(5);
  CHECK_THROWS_WITH(sample_points(empty, 3, rng), doctest::Contains("empty source mask"));

  MaskGrid tiny = MaskGrid::zeros(8, 8);
  tiny.at(2, 2) = 1;
  tiny.at(4, 6) = 1;
  SampledPoints sp = sample_points(tiny, 5, rng);
  CHECK(sp.padded);
  CHECK(sp.distinct == 2);
  REQUIRE(sp.points.size() == 5);
  for (size_t i = 2; i < 5; ++i) {
    CHECK(sp.points.pts[i].x == sp.points.pts[1].x);
    CHECK(sp.points.pts[i].y == sp.points.pts[1].y);
  }
}

TEST_CASE("result is invariant to foreground enumeration order (property)") {
  Rng meta(303);
  for (int trial = 0; trial < 20; ++trial) {
    MaskGrid m = random_small_mask(meta, 30);
    auto fg = mask_foreground(m);
    auto shuffled = fg;
    for (int i = static_cast<int>(shuffled.size()) - 1; i > 0; --i)
      std::swap(shuffled[i], shuffled[meta.uniform_int(i + 1)]);
    std::uint64_t seed = meta.raw();
    int k = 1 + meta.uniform_int(4);
    if (static_cast<int>(fg.size()) < k) continue;
    Rng r1(seed), r2(seed);
    auto a = kmeans_sample(fg, k, r1);
    auto b = kmeans_sample(shuffled, k, r2);
    CHECK(same_points(a.points.pts, b.points.pts));
  }
}
