#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "lidar2mm/rng.hpp"
#include "lidar2mm/types.hpp"

namespace lidar2mm {

/// Training-time preprocessing parameters: outlier box, rigid augmentation
/// ranges, and the fixed cloud size.
struct PreprocessConfig {
  double box_xy_half = 1.5;   // |x|,|y| <= box_xy_half, meters
  double box_z_min = 0.0;     // z range, meters
  double box_z_max = 2.0;
  double rot_max_deg = 10.0;  // rotation about Z, degrees
  double scale_min = 0.9;
  double scale_max = 1.1;
  double trans_max = 0.01;    // per-axis translation, meters
  int target_points = 256;

  void validate() const {
    if (!(box_xy_half > 0)) throw ContractError("box_xy_half must be > 0");
    if (!(box_z_min < box_z_max)) {
      throw ContractError("box_z_min must be < box_z_max");
    }
    if (!(rot_max_deg >= 0)) throw ContractError("rot_max_deg must be >= 0");
    if (!(scale_min <= scale_max)) {
      throw ContractError("scale_min must be <= scale_max");
    }
    if (!(trans_max >= 0)) throw ContractError("trans_max must be >= 0");
    if (target_points < 1) throw ContractError("target_points must be >= 1");
  }
};

namespace detail {

// Median with the usual convention: mean of the two middle values when the
// count is even. Consumes its argument.
inline double median(std::vector<double> values) {
  const std::size_t n = values.size();
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

// Order-preserving uniform random k-subset of {0..m-1} (selection sampling).
inline std::vector<std::size_t> ordered_subset(std::size_t m, std::size_t k,
                                               SeededRng& rng) {
  std::vector<std::size_t> picked;
  picked.reserve(k);
  for (std::size_t i = 0; i < m && picked.size() < k; ++i) {
    const std::size_t remaining = m - i;
    const std::size_t needed = k - picked.size();
    if (rng.below(remaining) < needed) picked.push_back(i);
  }
  return picked;
}

}  // namespace detail

struct NormalizeResult {
  Sequence sequence;
  Vec3 offset;       // subtracted from every point and joint
  bool from_joints;  // true when offset statistics came from skeleton joints
};

/// Shifts the whole sequence so that the joint X/Y medians land at 0 and the
/// minimum joint Z lands at 0. The offset is (median X, median Y, min Z) over
/// every skeleton joint in the sequence. Unlabeled sequences fall back to the
/// same statistics over the point clouds; `from_joints` records which path
/// ran.
inline NormalizeResult normalize_sequence(const Sequence& seq) {
  if (seq.frames.empty()) {
    throw ContractError("normalize_sequence: empty sequence");
  }
  std::vector<double> xs, ys;
  double z_min = std::numeric_limits<double>::infinity();
  const bool from_joints = seq.labeled();
  for (const Frame& f : seq.frames) {
    if (from_joints) {
      for (const Vec3& j : *f.skeleton) {
        xs.push_back(j.x());
        ys.push_back(j.y());
        z_min = std::min(z_min, j.z());
      }
    } else {
      for (const Vec3& p : f.cloud) {
        xs.push_back(p.x());
        ys.push_back(p.y());
        z_min = std::min(z_min, p.z());
      }
    }
  }
  if (xs.empty()) {
    throw ContractError(
        "normalize_sequence: no joints or points to compute the offset from");
  }
  const Vec3 offset(detail::median(std::move(xs)), detail::median(std::move(ys)),
                    z_min);

  NormalizeResult out{seq, offset, from_joints};
  for (Frame& f : out.sequence.frames) {
    for (Vec3& p : f.cloud) p -= offset;
    if (f.skeleton) {
      for (Vec3& j : *f.skeleton) j -= offset;
    }
  }
  return out;
}

/// Keeps exactly the points with |x| <= box_xy_half, |y| <= box_xy_half and
/// box_z_min <= z <= box_z_max (inclusive bounds), preserving order.
inline PointCloud box_filter(const PointCloud& cloud,
                             const PreprocessConfig& cfg) {
  cfg.validate();
  PointCloud out;
  out.reserve(cloud.size());
  for (const Vec3& p : cloud) {
    if (std::abs(p.x()) <= cfg.box_xy_half &&
        std::abs(p.y()) <= cfg.box_xy_half && p.z() >= cfg.box_z_min &&
        p.z() <= cfg.box_z_max) {
      out.push_back(p);
    }
  }
  return out;
}

/// One similarity transform shared by a whole training clip:
/// p' = scale * Rz(theta) * p + translation.
struct ClipTransform {
  double theta_rad = 0.0;
  double scale = 1.0;
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const {
    const double c = std::cos(theta_rad);
    const double s = std::sin(theta_rad);
    return Vec3(scale * (c * p.x() - s * p.y()) + translation.x(),
                scale * (s * p.x() + c * p.y()) + translation.y(),
                scale * p.z() + translation.z());
  }
};

/// Draw order: theta (degrees, U[-rot_max, rot_max]), scale
/// (U[scale_min, scale_max]), then tx, ty, tz (each U[-trans_max, trans_max]).
inline ClipTransform draw_clip_transform(const PreprocessConfig& cfg,
                                         SeededRng rng) {
  cfg.validate();
  constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
  ClipTransform out;
  out.theta_rad = rng.uniform(-cfg.rot_max_deg, cfg.rot_max_deg) * kDegToRad;
  out.scale = rng.uniform(cfg.scale_min, cfg.scale_max);
  out.translation = Vec3(rng.uniform(-cfg.trans_max, cfg.trans_max),
                         rng.uniform(-cfg.trans_max, cfg.trans_max),
                         rng.uniform(-cfg.trans_max, cfg.trans_max));
  return out;
}

inline Sequence apply_clip_transform(const Sequence& seq,
                                     const ClipTransform& transform) {
  Sequence out = seq;
  for (Frame& f : out.frames) {
    for (Vec3& p : f.cloud) p = transform.apply(p);
    if (f.skeleton) {
      for (Vec3& j : *f.skeleton) j = transform.apply(j);
    }
  }
  return out;
}

/// Training-time clip augmentation: every point and joint of every frame gets
/// the same randomly drawn similarity transform, so temporal flow relations
/// inside the clip survive intact.
inline Sequence rigid_augment(const Sequence& seq, const PreprocessConfig& cfg,
                              SeededRng rng) {
  return apply_clip_transform(seq, draw_clip_transform(cfg, std::move(rng)));
}

/// Returns exactly n points. Oversized clouds keep a uniformly random
/// order-preserving subset; undersized clouds repeat cyclically
/// (output[i] = input[i mod M]). Every output point is bit-identical to some
/// input point.
inline PointCloud resample_to_n(const PointCloud& cloud, int n,
                                SeededRng rng) {
  if (n < 1) throw std::invalid_argument("resample_to_n: n must be >= 1");
  if (cloud.empty()) throw ContractError("cannot resample empty cloud");
  const std::size_t m = cloud.size();
  const std::size_t target = static_cast<std::size_t>(n);
  if (m == target) return cloud;
  PointCloud out;
  out.reserve(target);
  if (m > target) {
    for (std::size_t i : detail::ordered_subset(m, target, rng)) {
      out.push_back(cloud[i]);
    }
  } else {
    for (std::size_t i = 0; i < target; ++i) out.push_back(cloud[i % m]);
  }
  return out;
}

struct PreprocessResult {
  Sequence sequence;
  Vec3 offset;
  bool offset_from_joints;
};

/// Full training-time chain in the fixed order
/// normalize -> box_filter -> [rigid_augment] -> resample_to_n.
/// Streams: the clip transform uses rng.split("augment"); frame t resamples
/// with rng.split(t).split("resample").
inline PreprocessResult preprocess_sequence(const Sequence& seq,
                                            const PreprocessConfig& cfg,
                                            SeededRng rng, bool augment) {
  cfg.validate();
  NormalizeResult norm = normalize_sequence(seq);
  Sequence work = std::move(norm.sequence);
  for (Frame& f : work.frames) f.cloud = box_filter(f.cloud, cfg);
  if (augment) work = rigid_augment(work, cfg, rng.split("augment"));
  for (Frame& f : work.frames) {
    f.cloud = resample_to_n(
        f.cloud, cfg.target_points,
        rng.split(static_cast<std::uint64_t>(f.t)).split("resample"));
  }
  return PreprocessResult{std::move(work), norm.offset, norm.from_joints};
}

}  // namespace lidar2mm
