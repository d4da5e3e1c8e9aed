#pragma once

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <cstddef>
#include <string>

#include "lidar2mm/types.hpp"

namespace lidar2mm {

/// p -> scale * rotation * p + translation, with rotation proper
/// (orthonormal, det +1).
struct SimilarityTransform {
  double scale = 1.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }

  Skeleton apply(const Skeleton& s) const {
    Skeleton out;
    for (int j = 0; j < kJointCount; ++j) out[j] = apply(s[j]);
    return out;
  }
};

/// Mean per-joint position error in centimeters.
inline double mpjpe(const Skeleton& pred, const Skeleton& gt) {
  double sum = 0.0;
  for (int j = 0; j < kJointCount; ++j) sum += (pred[j] - gt[j]).norm();
  return 100.0 * sum / static_cast<double>(kJointCount);
}

/// Least-squares similarity alignment (closed form): the (s, R, t) minimizing
/// sum_j |s R pred[j] + t - gt[j]|^2, computed from the centered covariance
/// via SVD with the determinant-sign correction, so the returned rotation is
/// always proper; reflections never score as perfect alignments.
inline SimilarityTransform procrustes_align(const Skeleton& pred,
                                            const Skeleton& gt) {
  constexpr double n = static_cast<double>(kJointCount);
  Vec3 mean_pred = Vec3::Zero();
  Vec3 mean_gt = Vec3::Zero();
  for (int j = 0; j < kJointCount; ++j) {
    mean_pred += pred[j];
    mean_gt += gt[j];
  }
  mean_pred /= n;
  mean_gt /= n;

  double var_pred = 0.0;
  double var_gt = 0.0;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (int j = 0; j < kJointCount; ++j) {
    const Vec3 x = pred[j] - mean_pred;
    const Vec3 y = gt[j] - mean_gt;
    var_pred += x.squaredNorm();
    var_gt += y.squaredNorm();
    cov += y * x.transpose();
  }
  var_pred /= n;
  var_gt /= n;
  cov /= n;

  if (var_pred <= 0.0 || var_gt <= 0.0) {
    throw ContractError("degenerate skeleton for alignment");
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 d = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) {
    d.z() = -1.0;
  }

  SimilarityTransform out;
  out.rotation =
      svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
  out.scale = svd.singularValues().dot(d) / var_pred;
  out.translation = mean_gt - out.scale * (out.rotation * mean_pred);
  return out;
}

/// MPJPE (cm) after optimal similarity alignment of pred onto gt.
inline double pa_mpjpe(const Skeleton& pred, const Skeleton& gt) {
  return mpjpe(procrustes_align(pred, gt).apply(pred), gt);
}

struct SequenceMetrics {
  double mpjpe_cm = 0.0;
  double pa_mpjpe_cm = 0.0;
  std::size_t frame_count = 0;
};

/// Per-frame metrics averaged uniformly over frames; alignment is computed
/// independently per frame. Sequences must be labeled, equally long and
/// timestep-aligned.
inline SequenceMetrics sequence_metrics(const Sequence& pred,
                                        const Sequence& gt) {
  if (pred.frames.size() != gt.frames.size()) {
    throw ContractError("sequence_metrics: frame count mismatch");
  }
  if (pred.frames.empty()) {
    throw ContractError("sequence_metrics: empty sequences");
  }
  if (!pred.labeled() || !gt.labeled()) {
    throw ContractError("sequence_metrics: both sequences must be labeled");
  }
  SequenceMetrics out;
  for (std::size_t i = 0; i < pred.frames.size(); ++i) {
    const Frame& p = pred.frames[i];
    const Frame& g = gt.frames[i];
    if (p.t != g.t) {
      throw ContractError("sequence_metrics: timestep mismatch at t=" +
                          std::to_string(p.t) + " vs t=" + std::to_string(g.t));
    }
    out.mpjpe_cm += mpjpe(*p.skeleton, *g.skeleton);
    out.pa_mpjpe_cm += pa_mpjpe(*p.skeleton, *g.skeleton);
  }
  const double n = static_cast<double>(pred.frames.size());
  out.mpjpe_cm /= n;
  out.pa_mpjpe_cm /= n;
  out.frame_count = pred.frames.size();
  return out;
}

}  // namespace lidar2mm
