#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lidar2mm/convert.hpp"
#include "lidar2mm/io.hpp"
#include "testutil.hpp"

using namespace lidar2mm;

namespace {

Sequence static_sequence(int frames, int points, std::uint64_t seed) {
  Sequence seq;
  SeededRng rng(seed);
  const Skeleton pose = testutil::rest_pose();
  const PointCloud cloud = testutil::cloud_on_skeleton(pose, points, rng);
  for (int i = 0; i < frames; ++i) {
    Frame f;
    f.t = i;
    f.cloud = cloud;
    f.skeleton = pose;
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

ExtendedSkeletonFlow zero_flow_sources(const Skeleton& pose,
                                       const PointCloud& cloud) {
  Frame a;
  a.t = 0;
  a.cloud = cloud;
  a.skeleton = pose;
  Frame b = a;
  b.t = 1;
  return extended_skeleton_flow(a, b);
}

}  // namespace

TEST(Npa, ZeroProbabilityIsIdentity) {
  SeededRng rng(1);
  const PointCloud cloud = testutil::random_cloud(rng, 50);
  ConversionConfig cfg;
  cfg.npa_prob = 0.0;
  const PointCloud out = npa(cloud, testutil::rest_pose(), cfg, SeededRng(2));
  ASSERT_EQ(out.size(), cloud.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_TRUE(testutil::bits_equal(out[i], cloud[i]));
  }
}

TEST(Npa, CertainProbabilityAppendsExactlyN) {
  SeededRng rng(3);
  const PointCloud cloud = testutil::random_cloud(rng, 200);
  ConversionConfig cfg;
  cfg.npa_prob = 1.0;
  cfg.npa_count = 32;
  const PointCloud out = npa(cloud, testutil::rest_pose(), cfg, SeededRng(4));
  ASSERT_EQ(out.size(), 232u);
  // originals come first, untouched
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    EXPECT_TRUE(testutil::bits_equal(out[i], cloud[i]));
  }
}

TEST(Npa, ZeroSigmaPutsAllNoiseAtSkeletonCenter) {
  ConversionConfig cfg;
  cfg.npa_prob = 1.0;
  cfg.npa_sigma = 0.0;
  const Skeleton pose = testutil::rest_pose();
  const Vec3 center = skeleton_center(pose);
  const PointCloud out = npa(PointCloud{}, pose, cfg, SeededRng(5));
  ASSERT_EQ(out.size(), 32u);
  for (const Vec3& p : out) EXPECT_TRUE(testutil::bits_equal(p, center));
}

TEST(Npa, NoiseSpreadMatchesSigma) {
  ConversionConfig cfg;
  cfg.npa_prob = 1.0;
  cfg.npa_count = 30000;
  cfg.npa_sigma = 0.02;
  const Skeleton pose = testutil::rest_pose();
  const Vec3 center = skeleton_center(pose);
  const PointCloud out = npa(PointCloud{}, pose, cfg, SeededRng(6));
  double var = 0.0;
  for (const Vec3& p : out) var += (p - center).squaredNorm();
  var /= 3.0 * static_cast<double>(out.size());
  EXPECT_NEAR(var, cfg.npa_sigma * cfg.npa_sigma, 0.02 * cfg.npa_sigma * cfg.npa_sigma);
}

TEST(ExtendedSkeletonFlow, StaticSceneHasAllZeroFlows) {
  SeededRng rng(7);
  const Skeleton pose = testutil::rest_pose();
  const PointCloud cloud = testutil::cloud_on_skeleton(pose, 60, rng);
  const ExtendedSkeletonFlow ext = zero_flow_sources(pose, cloud);
  EXPECT_EQ(static_cast<int>(ext.positions.size()), 23);
  for (const Vec3& f : ext.flows) EXPECT_DOUBLE_EQ(f.norm(), 0.0);
}

TEST(ExtendedSkeletonFlow, SingleMovedJointShowsUpAlone) {
  Frame prev;
  prev.t = 0;
  prev.skeleton = testutil::rest_pose();
  prev.cloud = {Vec3(0, 0, 1)};
  Frame cur = prev;
  cur.t = 1;
  (*cur.skeleton)[11].x() += 0.1;  // left wrist
  const ExtendedSkeletonFlow ext = extended_skeleton_flow(prev, cur);
  for (int j = 0; j < kJointCount; ++j) {
    if (j == 11) {
      EXPECT_NEAR((ext.flows[j] - Vec3(0.1, 0, 0)).norm(), 0.0, 1e-15);
    } else {
      EXPECT_DOUBLE_EQ(ext.flows[j].norm(), 0.0);
    }
  }
  for (int k = kJointCount; k < kExtendedCount; ++k) {
    EXPECT_DOUBLE_EQ(ext.flows[k].norm(), 0.0);
  }
}

TEST(ExtendedSkeletonFlow, RequiresLabelsAndOrderedTimesteps) {
  Frame labeled;
  labeled.t = 0;
  labeled.skeleton = testutil::rest_pose();
  Frame unlabeled;
  unlabeled.t = 1;
  EXPECT_THROW(extended_skeleton_flow(labeled, unlabeled), ContractError);
  Frame later = labeled;
  later.t = 0;
  EXPECT_THROW(extended_skeleton_flow(labeled, later), std::invalid_argument);
}

TEST(IdwWeights, SumToOne) {
  SeededRng rng(8);
  const Skeleton pose = testutil::random_skeleton(rng);
  const PointCloud cloud = testutil::random_cloud(rng, 40);
  const ExtendedSkeletonFlow ext = zero_flow_sources(pose, cloud);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 p = testutil::random_point(rng, -2, 2);
    const auto w = idw_weights(p, ext.positions, 1e-6);
    const double sum = std::accumulate(w.begin(), w.end(), 0.0);
    EXPECT_NEAR(sum, 1.0, 1e-9);
    for (double v : w) EXPECT_GT(v, 0.0);
  }
}

TEST(InterpolatePointFlow, ZeroSourcesGiveExactZero) {
  SeededRng rng(9);
  const Skeleton pose = testutil::rest_pose();
  const PointCloud cloud = testutil::cloud_on_skeleton(pose, 50, rng);
  const ExtendedSkeletonFlow ext = zero_flow_sources(pose, cloud);
  const FlowField flow = interpolate_point_flow(cloud, ext, 1e-6);
  ASSERT_EQ(flow.size(), cloud.size());
  for (const Vec3& f : flow) EXPECT_DOUBLE_EQ(f.norm(), 0.0);
}

TEST(InterpolatePointFlow, CoincidentJointDominates) {
  // point sits exactly on joint 0; every other source is >= 0.5 m away
  ExtendedSkeletonFlow ext;
  ext.positions[0] = Vec3(0, 0, 0);
  ext.flows[0] = Vec3(1, 0, 0);
  for (int j = 1; j < kExtendedCount; ++j) {
    const double angle = 2.0 * 3.14159265358979323846 * j / kExtendedCount;
    ext.positions[j] =
        Vec3(0.6 * std::cos(angle), 0.6 * std::sin(angle), 0.1 * j);
    ext.flows[j] = Vec3::Zero();
  }
  const FlowField flow =
      interpolate_point_flow(PointCloud{Vec3(0, 0, 0)}, ext, 1e-6);
  EXPECT_NEAR((flow[0] - Vec3(1, 0, 0)).norm(), 0.0, 1e-4);
  // weight ratio: 1/eps vs 22 sources with weight <= 2 each
  const auto w = idw_weights(Vec3(0, 0, 0), ext.positions, 1e-6);
  EXPECT_GE(w[0] / *std::max_element(w.begin() + 1, w.end()), 5e5);
}

TEST(InterpolatePointFlow, SymmetricOppositeFlowsCancelExactly) {
  ExtendedSkeletonFlow ext;
  const double v = 0.25;
  ext.positions[0] = Vec3(1, 0, 0);
  ext.flows[0] = Vec3(0, 0, v);
  ext.positions[1] = Vec3(-1, 0, 0);
  ext.flows[1] = Vec3(0, 0, -v);
  // remaining sources in mirrored pairs with zero flow
  for (int j = 2; j < kExtendedCount; ++j) {
    const int pair = (j - 2) / 2;
    const double sign = (j % 2 == 0) ? 1.0 : -1.0;
    ext.positions[j] = sign * Vec3(0.3 + 0.1 * pair, 0.4, 0.2 * pair);
    ext.flows[j] = Vec3::Zero();
  }
  const FlowField flow =
      interpolate_point_flow(PointCloud{Vec3(0, 0, 0)}, ext, 1e-6);
  EXPECT_DOUBLE_EQ(flow[0].x(), 0.0);
  EXPECT_DOUBLE_EQ(flow[0].y(), 0.0);
  EXPECT_DOUBLE_EQ(flow[0].z(), 0.0);
}

TEST(InterpolatePointFlow, BoundedByMaxSourceFlow) {
  SeededRng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    SeededRng trial_rng = rng.split(static_cast<std::uint64_t>(trial));
    ExtendedSkeletonFlow ext;
    double max_flow = 0.0;
    for (int j = 0; j < kExtendedCount; ++j) {
      ext.positions[j] = testutil::random_point(trial_rng, -1, 1);
      ext.flows[j] = (j < kJointCount) ? testutil::random_point(trial_rng, -0.1, 0.1)
                                       : Vec3::Zero();
      max_flow = std::max(max_flow, ext.flows[j].norm());
    }
    const PointCloud cloud = testutil::random_cloud(trial_rng, 30, -1.5, 1.5);
    for (const Vec3& f : interpolate_point_flow(cloud, ext, 1e-6)) {
      EXPECT_LE(f.norm(), max_flow + 1e-12);
    }
  }
}

TEST(SampleFlowThreshold, DegenerateAndRangeAndMean) {
  ConversionConfig cfg;
  cfg.fpf_gamma = cfg.fpf_delta = 0.03;
  EXPECT_DOUBLE_EQ(sample_flow_threshold(cfg, SeededRng(1)), 0.03);

  cfg.fpf_gamma = 0.02;
  cfg.fpf_delta = 0.05;
  SeededRng rng(11);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double nu = sample_flow_threshold(cfg, rng.split(static_cast<std::uint64_t>(i)));
    EXPECT_GE(nu, 0.02);
    EXPECT_LE(nu, 0.05);
    sum += nu;
  }
  EXPECT_NEAR(sum / n, 0.035, 0.001);
}

TEST(Fpf, SaturatedProbabilityKeepsEverything) {
  SeededRng rng(12);
  const PointCloud cloud = testutil::random_cloud(rng, 100);
  FlowField flow(cloud.size(), Vec3(0.1, 0, 0));  // |flow| = 0.1 >= nu
  const PointCloud out = fpf(cloud, flow, 0.05, SeededRng(13));
  ASSERT_EQ(out.size(), cloud.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_TRUE(testutil::bits_equal(out[i], cloud[i]));
  }
}

TEST(Fpf, AllZeroFlowsFallBackToLowestIndex) {
  SeededRng rng(14);
  const PointCloud cloud = testutil::random_cloud(rng, 64);
  FlowField flow(cloud.size(), Vec3::Zero());
  std::vector<std::size_t> kept;
  const PointCloud out = fpf(cloud, flow, 0.05, SeededRng(15), &kept);
  ASSERT_EQ(out.size(), 1u);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0], 0u);
  EXPECT_TRUE(testutil::bits_equal(out[0], cloud[0]));
}

TEST(Fpf, EmpiricalKeepRateMatchesClosedForm) {
  // Point 0 carries the probed flow; point 1 is a high-flow sentinel that is
  // always kept, so the empty-cloud fallback never engages.
  const double nu = 0.04;
  const PointCloud cloud = {Vec3(0, 0, 0), Vec3(1, 1, 1)};
  SeededRng root(16);
  for (const double ratio : {0.25, 0.5, 0.75}) {
    const FlowField flow = {Vec3(ratio * nu, 0, 0), Vec3(10 * nu, 0, 0)};
    int kept = 0;
    const int trials = 20000;
    for (int i = 0; i < trials; ++i) {
      std::vector<std::size_t> kept_idx;
      fpf(cloud, flow, nu, root.split(static_cast<std::uint64_t>(i)), &kept_idx);
      if (!kept_idx.empty() && kept_idx.front() == 0) ++kept;
    }
    EXPECT_NEAR(static_cast<double>(kept) / trials, ratio, 0.02);
  }
}

TEST(Fpf, LengthMismatchThrows) {
  EXPECT_THROW(
      fpf(PointCloud{Vec3(0, 0, 0)}, FlowField{}, 0.05, SeededRng(0)),
      std::invalid_argument);
}

TEST(RandomSample, SmallCloudsPassThrough) {
  SeededRng rng(17);
  const PointCloud cloud = testutil::random_cloud(rng, 100);
  ConversionConfig cfg;  // rs_min_points = 128
  const PointCloud out = random_sample(cloud, cfg, SeededRng(18));
  ASSERT_EQ(out.size(), cloud.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_TRUE(testutil::bits_equal(out[i], cloud[i]));
  }
}

TEST(RandomSample, FullFractionIsIdentity) {
  SeededRng rng(19);
  const PointCloud cloud = testutil::random_cloud(rng, 200);
  ConversionConfig cfg;
  cfg.rs_rmin = cfg.rs_rmax = 1.0;
  const PointCloud out = random_sample(cloud, cfg, SeededRng(20));
  ASSERT_EQ(out.size(), 200u);
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_TRUE(testutil::bits_equal(out[i], cloud[i]));
  }
}

TEST(RandomSample, HalfFractionKeepsFloorOfHalf) {
  SeededRng rng(21);
  const PointCloud cloud = testutil::random_cloud(rng, 200);
  ConversionConfig cfg;
  cfg.rs_rmin = cfg.rs_rmax = 0.5;
  const PointCloud out = random_sample(cloud, cfg, SeededRng(22));
  ASSERT_EQ(out.size(), 100u);
  EXPECT_TRUE(testutil::is_ordered_subsequence(out, cloud));
}

TEST(NoiseInject, ZeroSigmaIsIdentity) {
  SeededRng rng(23);
  const PointCloud cloud = testutil::random_cloud(rng, 50);
  ConversionConfig cfg;
  cfg.ni_sigma = 0.0;
  const PointCloud out = noise_inject(cloud, cfg, SeededRng(24));
  ASSERT_EQ(out.size(), cloud.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_TRUE(testutil::bits_equal(out[i], cloud[i]));
  }
}

TEST(NoiseInject, DisplacementMomentsMatchSigma) {
  const std::size_t n = 100000;
  PointCloud cloud(n, Vec3::Zero());
  ConversionConfig cfg;
  cfg.ni_sigma = 0.05;
  const PointCloud out = noise_inject(cloud, cfg, SeededRng(25));
  Vec3 mean = Vec3::Zero();
  double var = 0.0;
  for (const Vec3& p : out) mean += p;
  mean /= static_cast<double>(n);
  for (const Vec3& p : out) var += (p - mean).squaredNorm();
  var /= 3.0 * static_cast<double>(n);
  const double sigma2 = cfg.ni_sigma * cfg.ni_sigma;
  EXPECT_NEAR(var, sigma2, 0.02 * sigma2);
  EXPECT_LE(mean.norm(), 3.0 * cfg.ni_sigma / std::sqrt(static_cast<double>(n)) * 2.0);
}

TEST(ConvertSequence, StaticSceneCollapsesToFallbackPoint) {
  const Sequence seq = static_sequence(6, 150, 26);
  const ConvertResult res = convert_sequence(seq, ConversionConfig{}, SeededRng(27));
  for (std::size_t i = 1; i < res.stage_counts.size(); ++i) {
    EXPECT_EQ(res.stage_counts[i].after_fpf, 1u);
  }
}

TEST(ConvertSequence, DeterministicGivenSeed) {
  const Sequence seq = testutil::make_arm_swing_sequence(20, 200, 28);
  const ConvertResult a = convert_sequence(seq, ConversionConfig{}, SeededRng(29));
  const ConvertResult b = convert_sequence(seq, ConversionConfig{}, SeededRng(29));
  EXPECT_EQ(sequence_to_text(a.sequence), sequence_to_text(b.sequence));
  const ConvertResult c = convert_sequence(seq, ConversionConfig{}, SeededRng(30));
  EXPECT_NE(sequence_to_text(a.sequence), sequence_to_text(c.sequence));
}

TEST(ConvertSequence, StageInvariantsOnArmSwing) {
  const Sequence seq = testutil::make_arm_swing_sequence(40, 300, 31);
  std::vector<FrameTrace> trace;
  const ConvertResult res =
      convert_sequence(seq, ConversionConfig{}, SeededRng(32), &trace);
  ASSERT_EQ(trace.size(), seq.frames.size());
  int strictly_better = 0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const FrameStageCounts& c = res.stage_counts[i];
    // NPA adds 0 or exactly n; later stages never add
    EXPECT_TRUE(c.after_npa == c.input || c.after_npa == c.input + 32);
    EXPECT_LE(c.after_fpf, c.after_npa);
    EXPECT_LE(c.after_rs, c.after_fpf);
    EXPECT_EQ(c.after_ni, c.after_rs);
    // filtering never moves points
    EXPECT_TRUE(testutil::is_ordered_subsequence(trace[i].after_fpf,
                                                 trace[i].after_npa));
    EXPECT_TRUE(
        testutil::is_ordered_subsequence(trace[i].after_rs, trace[i].after_fpf));
    if (i == 0) continue;
    // retained points carry at least the average flow
    const FlowField& flow = trace[i].flow;
    ASSERT_EQ(flow.size(), trace[i].after_npa.size());
    double mean_all = 0.0;
    for (const Vec3& f : flow) mean_all += f.norm();
    mean_all /= static_cast<double>(flow.size());
    double mean_kept = 0.0;
    for (std::size_t k : trace[i].fpf_kept) mean_kept += flow[k].norm();
    mean_kept /= static_cast<double>(trace[i].fpf_kept.size());
    EXPECT_GE(mean_kept, mean_all);
    if (mean_kept > mean_all) ++strictly_better;
  }
  EXPECT_GE(strictly_better, static_cast<int>(0.8 * (trace.size() - 1)));
}

TEST(ConvertSequence, CopiesLabelsAndTagsOutput) {
  const Sequence seq = testutil::make_arm_swing_sequence(5, 120, 33);
  const ConvertResult res = convert_sequence(seq, ConversionConfig{}, SeededRng(34));
  EXPECT_EQ(res.sequence.source, SourceTag::kConverted);
  EXPECT_DOUBLE_EQ(res.sequence.rate_hz, seq.rate_hz);
  ASSERT_EQ(res.sequence.frames.size(), seq.frames.size());
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    EXPECT_EQ(res.sequence.frames[i].t, seq.frames[i].t);
    ASSERT_TRUE(res.sequence.frames[i].skeleton.has_value());
    for (int j = 0; j < kJointCount; ++j) {
      EXPECT_TRUE(testutil::bits_equal((*res.sequence.frames[i].skeleton)[j],
                                       (*seq.frames[i].skeleton)[j]));
    }
  }
}

TEST(ConvertSequence, UnlabeledInputThrows) {
  Sequence seq;
  Frame f;
  f.t = 0;
  f.cloud = {Vec3(0, 0, 1)};
  seq.frames.push_back(f);
  EXPECT_THROW(convert_sequence(seq, ConversionConfig{}, SeededRng(0)),
               ContractError);
}

TEST(ConversionConfigValidation, RejectsBadRanges) {
  ConversionConfig cfg;
  cfg.fpf_gamma = 0.06;  // > delta
  EXPECT_THROW(cfg.validate(), ContractError);
  ConversionConfig cfg2;
  cfg2.rs_rmin = 2.0;
  EXPECT_THROW(cfg2.validate(), ContractError);
  ConversionConfig cfg3;
  cfg3.npa_prob = 1.5;
  EXPECT_THROW(cfg3.validate(), ContractError);
  ConversionConfig cfg4;
  cfg4.idw_epsilon = 0.0;
  EXPECT_THROW(cfg4.validate(), ContractError);
}
