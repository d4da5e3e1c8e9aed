// lidar2mm - deterministic LiDAR-to-mmWave point cloud sequence toolkit
#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lidar2mm {

/// 3D position or displacement, meters. Double precision throughout the
/// library; file storage quantizes to binary32 (see FORMAT.md).
using Vec3 = Eigen::Vector3d;

/// One sensor frame worth of points. Order is significant: flow fields are
/// index-aligned with the cloud they were interpolated for.
using PointCloud = std::vector<Vec3>;

/// Per-point displacement vectors, meters per frame interval. Same length as
/// the associated PointCloud.
using FlowField = std::vector<Vec3>;

inline constexpr int kJointCount = 15;

/// Fixed 15-joint pose in the canonical joint order (see kJointNames).
using Skeleton = std::array<Vec3, kJointCount>;

/// Canonical joint order used everywhere, including the sequence file format.
inline constexpr std::array<std::string_view, kJointCount> kJointNames = {
    "pelvis",        "left_hip",    "left_knee",     "left_ankle",
    "right_hip",     "right_knee",  "right_ankle",   "neck",
    "head",          "left_shoulder", "left_elbow",  "left_wrist",
    "right_shoulder", "right_elbow", "right_wrist",
};

/// Bone connectivity as (parent, child) index pairs into the canonical order.
inline constexpr std::array<std::pair<int, int>, 14> kBoneEdges = {{
    {0, 1}, {1, 2}, {2, 3},    // pelvis -> left leg
    {0, 4}, {4, 5}, {5, 6},    // pelvis -> right leg
    {0, 7}, {7, 8},            // spine, head
    {7, 9}, {9, 10}, {10, 11},   // left arm
    {7, 12}, {12, 13}, {13, 14}, // right arm
}};

enum class SourceTag { kLidar, kMmwave, kConverted };

inline std::string_view to_string(SourceTag tag) {
  switch (tag) {
    case SourceTag::kLidar: return "lidar";
    case SourceTag::kMmwave: return "mmwave";
    case SourceTag::kConverted: return "converted";
  }
  return "lidar";
}

inline std::optional<SourceTag> source_tag_from_string(std::string_view s) {
  if (s == "lidar") return SourceTag::kLidar;
  if (s == "mmwave") return SourceTag::kMmwave;
  if (s == "converted") return SourceTag::kConverted;
  return std::nullopt;
}

/// Time-indexed point cloud with an optional pose label.
struct Frame {
  std::int64_t t = 0;
  PointCloud cloud;
  std::optional<Skeleton> skeleton;
};

/// Ordered list of frames at a fixed frame rate. Timesteps are strictly
/// increasing; either every frame carries a skeleton or none does.
struct Sequence {
  std::vector<Frame> frames;
  SourceTag source = SourceTag::kLidar;
  double rate_hz = 10.0;

  bool labeled() const {
    return !frames.empty() && frames.front().skeleton.has_value();
  }
};

/// Malformed file or config content. CLI maps this to exit code 1.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Violated data contract (wrong labels, misaligned sequences, invalid
/// parameter ranges). CLI maps this to exit code 2.
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

inline bool is_finite(const Vec3& v) { return v.allFinite(); }

/// Checks every Sequence invariant; throws ContractError with context on the
/// first violation.
inline void validate_sequence(const Sequence& seq,
                              std::string_view context = "sequence") {
  const std::string ctx(context);
  if (!(seq.rate_hz > 0.0) || !std::isfinite(seq.rate_hz)) {
    throw ContractError(ctx + ": rate_hz must be finite and > 0");
  }
  bool first = true;
  std::int64_t prev_t = -1;
  bool has_skeleton = false;
  for (const Frame& f : seq.frames) {
    const std::string at = ctx + ", frame t=" + std::to_string(f.t);
    if (f.t < 0) throw ContractError(at + ": timestep must be >= 0");
    if (!first && f.t <= prev_t) {
      throw ContractError(at + ": timesteps must be strictly increasing");
    }
    if (first) {
      has_skeleton = f.skeleton.has_value();
    } else if (f.skeleton.has_value() != has_skeleton) {
      throw ContractError(at +
                          ": either every frame has a skeleton or none does");
    }
    for (const Vec3& p : f.cloud) {
      if (!is_finite(p)) throw ContractError(at + ": non-finite point");
    }
    if (f.skeleton) {
      for (const Vec3& j : *f.skeleton) {
        if (!is_finite(j)) throw ContractError(at + ": non-finite joint");
      }
    }
    prev_t = f.t;
    first = false;
  }
}

}  // namespace lidar2mm
