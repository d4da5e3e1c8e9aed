#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "lidar2mm/geometry.hpp"
#include "lidar2mm/preprocess.hpp"
#include "lidar2mm/rng.hpp"
#include "lidar2mm/types.hpp"

namespace lidar2mm {

/// Parameters of the four-stage mmWave conversion pipeline, applied per frame
/// in the order NPA -> FPF -> RS -> NI.
struct ConversionConfig {
  // NPA: with probability npa_prob, add npa_count points drawn from an
  // isotropic Gaussian (std npa_sigma) around the skeleton center.
  double npa_sigma = 0.02;
  double npa_prob = 0.5;
  int npa_count = 32;
  // FPF: per-frame flow threshold drawn from U[fpf_gamma, fpf_delta].
  double fpf_gamma = 0.02;
  double fpf_delta = 0.05;
  // RS: keep a U[rs_rmin, rs_rmax] fraction, only when the cloud has at
  // least rs_min_points points.
  double rs_rmin = 0.125;
  double rs_rmax = 1.0;
  int rs_min_points = 128;
  // NI: isotropic Gaussian jitter (std ni_sigma) on every point.
  double ni_sigma = 0.05;
  // Inverse-distance weighting regularizer.
  double idw_epsilon = 1e-6;

  void validate() const {
    if (!(npa_sigma >= 0)) throw ContractError("npa_sigma must be >= 0");
    if (!(npa_prob >= 0 && npa_prob <= 1)) {
      throw ContractError("npa_prob must be in [0, 1]");
    }
    if (npa_count < 0) throw ContractError("npa_count must be >= 0");
    if (!(fpf_gamma > 0)) throw ContractError("fpf_gamma must be > 0");
    if (!(fpf_gamma <= fpf_delta)) {
      throw ContractError("fpf_gamma must be <= fpf_delta");
    }
    if (!(rs_rmin > 0)) throw ContractError("rs_rmin must be > 0");
    if (!(rs_rmin <= rs_rmax)) throw ContractError("rs_rmin must be <= rs_rmax");
    if (!(rs_rmax <= 1.0)) throw ContractError("rs_rmax must be <= 1");
    if (rs_min_points < 0) throw ContractError("rs_min_points must be >= 0");
    if (!(ni_sigma >= 0)) throw ContractError("ni_sigma must be >= 0");
    if (!(idw_epsilon > 0)) throw ContractError("idw_epsilon must be > 0");
  }
};

/// 15 joints + 8 bounding-cube vertices.
inline constexpr int kExtendedCount = kJointCount + 8;

/// Flow-interpolation sources: the current joints plus the 8 cube vertices,
/// with their displacement vectors. The cube vertices always carry zero flow.
struct ExtendedSkeletonFlow {
  std::array<Vec3, kExtendedCount> positions;
  std::array<Vec3, kExtendedCount> flows;
};

/// Noisy point addition. One Bernoulli(npa_prob) draw decides whether to
/// append npa_count Gaussian points (per-axis std npa_sigma) centered at the
/// skeleton center; appended points follow the originals.
inline PointCloud npa(const PointCloud& cloud, const Skeleton& skeleton,
                      const ConversionConfig& cfg, SeededRng rng) {
  cfg.validate();
  PointCloud out = cloud;
  if (!rng.bernoulli(cfg.npa_prob)) return out;
  const Vec3 center = skeleton_center(skeleton);
  out.reserve(out.size() + static_cast<std::size_t>(cfg.npa_count));
  for (int i = 0; i < cfg.npa_count; ++i) {
    out.emplace_back(rng.normal(center.x(), cfg.npa_sigma),
                     rng.normal(center.y(), cfg.npa_sigma),
                     rng.normal(center.z(), cfg.npa_sigma));
  }
  return out;
}

/// Builds the flow-interpolation sources for the step prev -> cur: the
/// current joints followed by the 8 vertices of the axis-aligned bounding
/// cube over both frames' joints and clouds. Joint flows are cur - prev;
/// cube vertices are static by construction, so their flow is exactly zero.
inline ExtendedSkeletonFlow extended_skeleton_flow(const Frame& prev,
                                                   const Frame& cur) {
  if (!prev.skeleton || !cur.skeleton) {
    throw ContractError("extended_skeleton_flow: missing skeleton");
  }
  if (!(prev.t < cur.t)) {
    throw std::invalid_argument(
        "extended_skeleton_flow: prev.t must be < cur.t");
  }
  Aabb box;
  box.extend_all(*prev.skeleton);
  box.extend_all(*cur.skeleton);
  box.extend_all(prev.cloud);
  box.extend_all(cur.cloud);
  const std::array<Vec3, 8> corners = bounding_cube(box);

  ExtendedSkeletonFlow ext;
  for (int j = 0; j < kJointCount; ++j) {
    ext.positions[j] = (*cur.skeleton)[j];
    ext.flows[j] = (*cur.skeleton)[j] - (*prev.skeleton)[j];
  }
  for (int k = 0; k < 8; ++k) {
    ext.positions[kJointCount + k] = corners[k];
    ext.flows[kJointCount + k] = Vec3::Zero();
  }
  return ext;
}

/// Normalized inverse-distance weights of a point against all extended
/// joints: w_j = 1 / (|p - s_j| + epsilon), then scaled to sum to 1.
inline std::array<double, kExtendedCount> idw_weights(
    const Vec3& point, const std::array<Vec3, kExtendedCount>& sources,
    double epsilon) {
  std::array<double, kExtendedCount> w;
  double sum = 0.0;
  for (int j = 0; j < kExtendedCount; ++j) {
    w[j] = 1.0 / ((point - sources[j]).norm() + epsilon);
    sum += w[j];
  }
  for (double& v : w) v /= sum;
  return w;
}

/// Interpolates a per-point flow field as the convex combination of the
/// extended-joint flows under inverse-distance weights.
inline FlowField interpolate_point_flow(const PointCloud& cloud,
                                        const ExtendedSkeletonFlow& ext,
                                        double epsilon) {
  FlowField flow;
  flow.reserve(cloud.size());
  for (const Vec3& p : cloud) {
    const auto w = idw_weights(p, ext.positions, epsilon);
    Vec3 f = Vec3::Zero();
    for (int j = 0; j < kExtendedCount; ++j) f += w[j] * ext.flows[j];
    flow.push_back(f);
  }
  return flow;
}

/// One per-frame flow threshold, nu ~ U[fpf_gamma, fpf_delta].
inline double sample_flow_threshold(const ConversionConfig& cfg,
                                    SeededRng rng) {
  cfg.validate();
  return rng.uniform(cfg.fpf_gamma, cfg.fpf_delta);
}

/// Flow-based point filtering: point i survives with probability
/// min(|flow[i]| / nu, 1), independently, order preserved. If every point is
/// discarded the single point with the largest flow magnitude is retained
/// (ties resolve to the lowest index) so downstream stages never see an
/// empty cloud. `kept_indices`, when given, receives the surviving indices.
inline PointCloud fpf(const PointCloud& cloud, const FlowField& flow,
                      double nu, SeededRng rng,
                      std::vector<std::size_t>* kept_indices = nullptr) {
  if (cloud.size() != flow.size()) {
    throw std::invalid_argument("fpf: flow/cloud length mismatch");
  }
  if (!(nu > 0)) throw std::invalid_argument("fpf: nu must be > 0");
  std::vector<std::size_t> kept;
  kept.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double p_keep = std::min(flow[i].norm() / nu, 1.0);
    if (rng.uniform01() < p_keep) kept.push_back(i);
  }
  if (kept.empty() && !cloud.empty()) {
    std::size_t best = 0;
    double best_norm = flow[0].norm();
    for (std::size_t i = 1; i < cloud.size(); ++i) {
      const double n = flow[i].norm();
      if (n > best_norm) {
        best_norm = n;
        best = i;
      }
    }
    kept.push_back(best);
  }
  PointCloud out;
  out.reserve(kept.size());
  for (std::size_t i : kept) out.push_back(cloud[i]);
  if (kept_indices) *kept_indices = std::move(kept);
  return out;
}

/// Random sparsification: clouds with at least rs_min_points points keep a
/// uniformly random order-preserving subset of max(1, floor(r * M)) points,
/// r ~ U[rs_rmin, rs_rmax]. Smaller clouds pass through untouched and
/// consume no draws.
inline PointCloud random_sample(const PointCloud& cloud,
                                const ConversionConfig& cfg, SeededRng rng) {
  cfg.validate();
  const std::size_t m = cloud.size();
  if (m < static_cast<std::size_t>(cfg.rs_min_points)) return cloud;
  const double r = rng.uniform(cfg.rs_rmin, cfg.rs_rmax);
  const std::size_t k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(r * static_cast<double>(m))));
  if (k >= m) return cloud;
  PointCloud out;
  out.reserve(k);
  for (std::size_t i : detail::ordered_subset(m, k, rng)) {
    out.push_back(cloud[i]);
  }
  return out;
}

/// Noise injection: adds an independent isotropic Gaussian displacement
/// (per-axis std ni_sigma) to every point. Count and order unchanged.
inline PointCloud noise_inject(const PointCloud& cloud,
                               const ConversionConfig& cfg, SeededRng rng) {
  cfg.validate();
  PointCloud out;
  out.reserve(cloud.size());
  for (const Vec3& p : cloud) {
    out.emplace_back(p.x() + rng.normal(0.0, cfg.ni_sigma),
                     p.y() + rng.normal(0.0, cfg.ni_sigma),
                     p.z() + rng.normal(0.0, cfg.ni_sigma));
  }
  return out;
}

/// Point counts after each stage of one converted frame.
struct FrameStageCounts {
  std::int64_t t = 0;
  std::size_t input = 0;
  std::size_t after_npa = 0;
  std::size_t after_fpf = 0;  // equals after_npa at the first frame (no flow)
  std::size_t after_rs = 0;
  std::size_t after_ni = 0;
};

/// Full intermediate state of one converted frame, for inspection and tests.
struct FrameTrace {
  std::int64_t t = 0;
  PointCloud after_npa;
  FlowField flow;                        // empty at the first frame
  double nu = 0.0;                       // 0 at the first frame
  std::vector<std::size_t> fpf_kept;     // indices into after_npa
  PointCloud after_fpf;
  PointCloud after_rs;
  PointCloud after_ni;
};

struct ConvertResult {
  Sequence sequence;
  std::vector<FrameStageCounts> stage_counts;
};

/// Converts a labeled LiDAR sequence frame by frame: NPA, then (from the
/// second frame on) flow interpolation against the previous original frame
/// and FPF, then RS and NI. The first frame has no predecessor, so FPF is
/// skipped there. The bounding cube comes from the original clouds and
/// joints; flow is interpolated over the NPA-augmented cloud, so noise
/// points face the same motion-based filtering as real ones. Skeletons are
/// copied through unchanged and the output is tagged as converted.
///
/// Per-frame streams are derived as rng.split(t).split(stage), which makes
/// the result a pure function of (sequence, config, seed) regardless of
/// evaluation order.
inline ConvertResult convert_sequence(const Sequence& seq,
                                      const ConversionConfig& cfg,
                                      SeededRng rng,
                                      std::vector<FrameTrace>* trace = nullptr) {
  cfg.validate();
  if (seq.frames.empty()) {
    throw ContractError("convert_sequence: empty sequence");
  }
  if (!seq.labeled()) {
    throw ContractError("conversion requires skeleton labels");
  }
  validate_sequence(seq);

  ConvertResult result;
  result.sequence.source = SourceTag::kConverted;
  result.sequence.rate_hz = seq.rate_hz;
  result.sequence.frames.reserve(seq.frames.size());
  result.stage_counts.reserve(seq.frames.size());
  if (trace) {
    trace->clear();
    trace->reserve(seq.frames.size());
  }

  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const Frame& cur = seq.frames[i];
    const SeededRng frame_rng = rng.split(static_cast<std::uint64_t>(cur.t));

    FrameStageCounts counts;
    counts.t = cur.t;
    counts.input = cur.cloud.size();

    FrameTrace ft;
    ft.t = cur.t;

    PointCloud work = npa(cur.cloud, *cur.skeleton, cfg, frame_rng.split("npa"));
    counts.after_npa = work.size();
    if (trace) ft.after_npa = work;

    if (i > 0) {
      const ExtendedSkeletonFlow ext =
          extended_skeleton_flow(seq.frames[i - 1], cur);
      const FlowField flow = interpolate_point_flow(work, ext, cfg.idw_epsilon);
      const double nu = sample_flow_threshold(cfg, frame_rng.split("nu"));
      std::vector<std::size_t> kept;
      work = fpf(work, flow, nu, frame_rng.split("fpf"), &kept);
      if (trace) {
        ft.flow = flow;
        ft.nu = nu;
        ft.fpf_kept = std::move(kept);
      }
    }
    counts.after_fpf = work.size();
    if (trace) ft.after_fpf = work;

    work = random_sample(work, cfg, frame_rng.split("rs"));
    counts.after_rs = work.size();
    if (trace) ft.after_rs = work;

    work = noise_inject(work, cfg, frame_rng.split("ni"));
    counts.after_ni = work.size();
    if (trace) ft.after_ni = work;

    Frame out;
    out.t = cur.t;
    out.cloud = std::move(work);
    out.skeleton = cur.skeleton;
    result.sequence.frames.push_back(std::move(out));
    result.stage_counts.push_back(counts);
    if (trace) trace->push_back(std::move(ft));
  }
  return result;
}

}  // namespace lidar2mm
