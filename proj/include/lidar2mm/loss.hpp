#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "lidar2mm/geometry.hpp"
#include "lidar2mm/types.hpp"

namespace lidar2mm {

/// Thresholds of the unsupervised temporal consistency loss (UTCL) and the
/// weight of its contribution to the total objective.
struct UtclConfig {
  double mu = 0.20;         // joint-to-cloud distance below which a joint is dynamic
  double eta = 0.05;        // flow hinge for dynamic joints
  double rho = 0.05;        // joint-to-cloud distance above which a joint is static
  double lambda_con = 0.01; // weight of l_con in the total loss

  void validate() const {
    if (!(mu > 0)) throw ContractError("mu must be > 0");
    if (!(eta > 0)) throw ContractError("eta must be > 0");
    if (!(rho > 0)) throw ContractError("rho must be > 0");
    if (!(lambda_con >= 0)) throw ContractError("lambda_con must be >= 0");
  }
};

struct LossReport {
  double l_dyn = 0.0;
  double l_sta = 0.0;
  double l_con = 0.0;               // l_dyn + l_sta
  std::optional<double> l_lab;      // supervised MSE, when ground truth exists
  std::optional<double> l_total;    // l_lab + lambda_con * l_con
  std::vector<int> dyn_indices;
  std::vector<int> sta_indices;     // the sets may overlap (distances in (rho, mu))
};

/// Per-joint displacement between consecutive predicted skeletons.
inline std::array<Vec3, kJointCount> skeleton_flow(const Skeleton& cur,
                                                   const Skeleton& prev) {
  std::array<Vec3, kJointCount> flow;
  for (int j = 0; j < kJointCount; ++j) flow[j] = cur[j] - prev[j];
  return flow;
}

/// Joints whose nearest cloud point is strictly closer than mu: likely moving
/// body parts, since the radar detects what moves. An empty cloud yields an
/// empty set.
inline std::vector<int> dynamic_set(const PointCloud& cloud,
                                    const Skeleton& s_hat, double mu) {
  std::vector<int> dyn;
  if (cloud.empty()) return dyn;
  for (int j = 0; j < kJointCount; ++j) {
    if (nearest_point_distance(s_hat[j], cloud) < mu) dyn.push_back(j);
  }
  return dyn;
}

/// Joints strictly farther than rho from every cloud point: likely static.
/// An empty cloud yields all 15 indices.
inline std::vector<int> static_set(const PointCloud& cloud,
                                   const Skeleton& s_hat, double rho) {
  std::vector<int> sta;
  if (cloud.empty()) {
    for (int j = 0; j < kJointCount; ++j) sta.push_back(j);
    return sta;
  }
  for (int j = 0; j < kJointCount; ++j) {
    if (nearest_point_distance(s_hat[j], cloud) > rho) sta.push_back(j);
  }
  return sta;
}

/// Dynamic consistency: mean over the dynamic set of max(0, eta - |flow|).
/// Zero for an empty set.
inline double dcl(const std::array<Vec3, kJointCount>& flow,
                  const std::vector<int>& dyn, double eta) {
  if (dyn.empty()) return 0.0;
  double sum = 0.0;
  for (int j : dyn) sum += std::max(0.0, eta - flow[j].norm());
  return sum / static_cast<double>(dyn.size());
}

/// Static consistency: mean over the static set of |flow|. Zero for an
/// empty set.
inline double scl(const std::array<Vec3, kJointCount>& flow,
                  const std::vector<int>& sta) {
  if (sta.empty()) return 0.0;
  double sum = 0.0;
  for (int j : sta) sum += flow[j].norm();
  return sum / static_cast<double>(sta.size());
}

/// Evaluates the consistency part of the loss for one adjacent prediction
/// pair. l_lab/l_total are left unset; callers with ground truth combine
/// mse_loss and total_loss on top.
inline LossReport utcl_loss(const PointCloud& cloud, const Skeleton& s_hat_cur,
                            const Skeleton& s_hat_prev,
                            const UtclConfig& cfg) {
  cfg.validate();
  LossReport report;
  const auto flow = skeleton_flow(s_hat_cur, s_hat_prev);
  report.dyn_indices = dynamic_set(cloud, s_hat_cur, cfg.mu);
  report.sta_indices = static_set(cloud, s_hat_cur, cfg.rho);
  report.l_dyn = dcl(flow, report.dyn_indices, cfg.eta);
  report.l_sta = scl(flow, report.sta_indices);
  report.l_con = report.l_dyn + report.l_sta;
  return report;
}

/// Supervised loss: mean over all 45 coordinates of the squared difference.
inline double mse_loss(const Skeleton& s_hat, const Skeleton& s_gt) {
  double sum = 0.0;
  for (int j = 0; j < kJointCount; ++j) {
    sum += (s_hat[j] - s_gt[j]).squaredNorm();
  }
  return sum / static_cast<double>(3 * kJointCount);
}

/// Weighted objective l_lab + lambda_con * l_con.
inline double total_loss(double l_lab, double l_con, const UtclConfig& cfg) {
  cfg.validate();
  return l_lab + cfg.lambda_con * l_con;
}

struct UtclGradient {
  std::array<Vec3, kJointCount> wrt_cur;
  std::array<Vec3, kJointCount> wrt_prev;
};

/// Analytic gradient of l_con with respect to both predicted skeletons.
/// Set memberships are treated as constants (the indicator thresholds get no
/// gradient). Subgradient conventions: zero vector where |flow| = 0, and the
/// inactive branch at the hinge kink |flow| = eta.
inline UtclGradient utcl_grad(const PointCloud& cloud,
                              const Skeleton& s_hat_cur,
                              const Skeleton& s_hat_prev,
                              const UtclConfig& cfg) {
  cfg.validate();
  const auto flow = skeleton_flow(s_hat_cur, s_hat_prev);
  const std::vector<int> dyn = dynamic_set(cloud, s_hat_cur, cfg.mu);
  const std::vector<int> sta = static_set(cloud, s_hat_cur, cfg.rho);

  UtclGradient grad;
  grad.wrt_cur.fill(Vec3::Zero());
  grad.wrt_prev.fill(Vec3::Zero());

  if (!dyn.empty()) {
    const double inv = 1.0 / static_cast<double>(dyn.size());
    for (int j : dyn) {
      const double n = flow[j].norm();
      if (n > 0.0 && n < cfg.eta) {
        grad.wrt_cur[j] -= inv * flow[j] / n;
      }
    }
  }
  if (!sta.empty()) {
    const double inv = 1.0 / static_cast<double>(sta.size());
    for (int j : sta) {
      const double n = flow[j].norm();
      if (n > 0.0) {
        grad.wrt_cur[j] += inv * flow[j] / n;
      }
    }
  }
  for (int j = 0; j < kJointCount; ++j) grad.wrt_prev[j] = -grad.wrt_cur[j];
  return grad;
}

}  // namespace lidar2mm
