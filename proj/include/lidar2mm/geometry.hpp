#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <stdexcept>

#include "lidar2mm/types.hpp"

namespace lidar2mm {

/// Exact Euclidean distance from `joint` to its nearest cloud point.
/// The exhaustive scan is the contract; any accelerated structure must
/// reproduce it.
inline double nearest_point_distance(const Vec3& joint,
                                     const PointCloud& cloud) {
  if (cloud.empty()) throw std::invalid_argument("empty point cloud");
  double best = std::numeric_limits<double>::infinity();
  for (const Vec3& p : cloud) {
    best = std::min(best, (joint - p).norm());
  }
  return best;
}

/// Axis-aligned bounding box accumulator over one or more point sets.
struct Aabb {
  Vec3 lo{0, 0, 0};
  Vec3 hi{0, 0, 0};
  bool empty = true;

  void extend(const Vec3& p) {
    if (empty) {
      lo = hi = p;
      empty = false;
      return;
    }
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }

  template <typename Range>
  void extend_all(const Range& points) {
    for (const Vec3& p : points) extend(p);
  }
};

/// Eight vertices of the axis-aligned cube enclosing the box: the AABB is
/// expanded symmetrically about its center until all sides equal the longest
/// one. Zero-extent input falls back to `min_side` (default 1 mm).
///
/// Corner order: index bit 0 selects the x side, bit 1 the y side, bit 2 the
/// z side (0 = low, 1 = high). Corner 0 is (lo.x, lo.y, lo.z), corner 7 is
/// (hi.x, hi.y, hi.z).
inline std::array<Vec3, 8> bounding_cube(const Aabb& box,
                                         double min_side = 1e-3) {
  if (box.empty) throw std::invalid_argument("bounding_cube: no input points");
  const Vec3 center = 0.5 * (box.lo + box.hi);
  const Vec3 extent = box.hi - box.lo;
  double side = extent.maxCoeff();
  if (side <= 0.0) side = min_side;
  const double h = 0.5 * side;
  // clamp against the box so rounding in center +/- h can never drop an
  // input point outside the cube
  const Vec3 lo = (center.array() - h).min(box.lo.array());
  const Vec3 hi = (center.array() + h).max(box.hi.array());
  std::array<Vec3, 8> corners;
  for (int k = 0; k < 8; ++k) {
    corners[k] = Vec3((k & 1) ? hi.x() : lo.x(), (k & 2) ? hi.y() : lo.y(),
                      (k & 4) ? hi.z() : lo.z());
  }
  return corners;
}

/// Arithmetic mean of the 15 joints.
inline Vec3 skeleton_center(const Skeleton& skeleton) {
  Vec3 sum = Vec3::Zero();
  for (const Vec3& j : skeleton) sum += j;
  return sum / static_cast<double>(kJointCount);
}

}  // namespace lidar2mm
