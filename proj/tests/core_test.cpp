#include <gtest/gtest.h>

#include <algorithm>
#include <cstdint>
#include <set>
#include <vector>

#include "lidar2mm/geometry.hpp"
#include "lidar2mm/rng.hpp"
#include "lidar2mm/types.hpp"
#include "testutil.hpp"

using namespace lidar2mm;

TEST(NearestPointDistance, CoincidentPointIsZero) {
  PointCloud cloud = {Vec3(0, 0, 0)};
  EXPECT_DOUBLE_EQ(nearest_point_distance(Vec3(0, 0, 0), cloud), 0.0);
}

TEST(NearestPointDistance, PicksTheCloserPoint) {
  PointCloud cloud = {Vec3(3, 4, 0), Vec3(10, 0, 0)};
  EXPECT_DOUBLE_EQ(nearest_point_distance(Vec3(0, 0, 0), cloud), 5.0);
}

TEST(NearestPointDistance, MatchesExhaustiveScan) {
  SeededRng rng(42);
  const PointCloud cloud = testutil::random_cloud(rng, 50, -2.0, 2.0);
  const Vec3 joint(1, 1, 1);
  double expected = std::numeric_limits<double>::infinity();
  for (const Vec3& p : cloud) expected = std::min(expected, (joint - p).norm());
  EXPECT_DOUBLE_EQ(nearest_point_distance(joint, cloud), expected);
}

TEST(NearestPointDistance, LowerBoundsEveryPairDistance) {
  SeededRng rng(7);
  const PointCloud cloud = testutil::random_cloud(rng, 30);
  const Vec3 joint = testutil::random_point(rng, -1, 1);
  const double d = nearest_point_distance(joint, cloud);
  for (const Vec3& p : cloud) EXPECT_LE(d, (joint - p).norm());
}

TEST(NearestPointDistance, EmptyCloudThrows) {
  EXPECT_THROW(nearest_point_distance(Vec3(0, 0, 0), PointCloud{}),
               std::invalid_argument);
}

TEST(BoundingCube, DegeneratePointFallsBackToMillimeterCube) {
  Aabb box;
  box.extend(Vec3(1, 2, 3));
  const auto corners = bounding_cube(box);
  EXPECT_NEAR((corners[0] - Vec3(0.9995, 1.9995, 2.9995)).norm(), 0.0, 1e-12);
  EXPECT_NEAR((corners[7] - Vec3(1.0005, 2.0005, 3.0005)).norm(), 0.0, 1e-12);
  EXPECT_NEAR(corners[1].x() - corners[0].x(), 0.001, 1e-12);
}

TEST(BoundingCube, ExpandsShorterSidesAboutTheCenter) {
  Aabb box;
  box.extend(Vec3(0, 0, 0));
  box.extend(Vec3(2, 1, 1));
  const auto corners = bounding_cube(box);
  // extents (2,1,1) -> cube of side 2 centered at (1, 0.5, 0.5)
  EXPECT_TRUE(testutil::bits_equal(corners[0], Vec3(0, -0.5, -0.5)));
  EXPECT_TRUE(testutil::bits_equal(corners[7], Vec3(2, 1.5, 1.5)));
  EXPECT_TRUE(testutil::bits_equal(corners[1], Vec3(2, -0.5, -0.5)));
  EXPECT_TRUE(testutil::bits_equal(corners[2], Vec3(0, 1.5, -0.5)));
  EXPECT_TRUE(testutil::bits_equal(corners[4], Vec3(0, -0.5, 1.5)));
}

TEST(BoundingCube, EnclosesInputsWithEqualSides) {
  SeededRng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    SeededRng trial_rng = rng.split(static_cast<std::uint64_t>(trial));
    const PointCloud cloud = testutil::random_cloud(trial_rng, 20, -3, 3);
    Aabb box;
    box.extend_all(cloud);
    const auto corners = bounding_cube(box);
    const double sx = corners[1].x() - corners[0].x();
    const double sy = corners[2].y() - corners[0].y();
    const double sz = corners[4].z() - corners[0].z();
    EXPECT_NEAR(sx, sy, 1e-12);
    EXPECT_NEAR(sx, sz, 1e-12);
    for (const Vec3& p : cloud) {
      EXPECT_GE(p.x(), corners[0].x());
      EXPECT_GE(p.y(), corners[0].y());
      EXPECT_GE(p.z(), corners[0].z());
      EXPECT_LE(p.x(), corners[7].x());
      EXPECT_LE(p.y(), corners[7].y());
      EXPECT_LE(p.z(), corners[7].z());
    }
  }
}

TEST(BoundingCube, EmptyInputThrows) {
  EXPECT_THROW(bounding_cube(Aabb{}), std::invalid_argument);
}

TEST(SkeletonCenter, UniformJointsReturnThatPoint) {
  Skeleton s;
  s.fill(Vec3(1, 1, 1));
  EXPECT_TRUE(testutil::bits_equal(skeleton_center(s), Vec3(1, 1, 1)));
}

TEST(SkeletonCenter, SymmetricJointsCancel) {
  Skeleton s;
  s.fill(Vec3::Zero());
  for (int j = 0; j < 7; ++j) {
    const Vec3 v(0.1 * (j + 1), -0.2 * j, 0.3);
    s[j] = v;
    s[j + 7] = -v;
  }
  s[14] = Vec3::Zero();
  EXPECT_NEAR(skeleton_center(s).norm(), 0.0, 1e-15);
}

TEST(SkeletonCenter, MatchesIndependentSummation) {
  SeededRng rng(5);
  const Skeleton s = testutil::random_skeleton(rng);
  double x = 0, y = 0, z = 0;
  for (const Vec3& j : s) {
    x += j.x();
    y += j.y();
    z += j.z();
  }
  const Vec3 c = skeleton_center(s);
  EXPECT_DOUBLE_EQ(c.x(), x / 15.0);
  EXPECT_DOUBLE_EQ(c.y(), y / 15.0);
  EXPECT_DOUBLE_EQ(c.z(), z / 15.0);
}

TEST(SeededRng, SameSeedAndStreamReproduceDraws) {
  SeededRng a(123, 9);
  SeededRng b(123, 9);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(SeededRng, SplitIsPureAndOrderIndependent) {
  const SeededRng root(77);
  SeededRng a = root.split("npa");
  SeededRng b = root.split("npa");
  EXPECT_EQ(a.next_u64(), b.next_u64());
  // splitting again after drawing does not change the derived stream
  SeededRng c = root.split(std::uint64_t{3});
  SeededRng d = root.split(std::uint64_t{3});
  EXPECT_EQ(c.next_u64(), d.next_u64());
}

TEST(SeededRng, DistinctStreamsDiffer) {
  const SeededRng root(77);
  SeededRng a = root.split("npa");
  SeededRng b = root.split("fpf");
  SeededRng c = root.split(std::uint64_t{0});
  SeededRng d = root.split(std::uint64_t{1});
  int equal_ab = 0, equal_cd = 0;
  for (int i = 0; i < 64; ++i) {
    equal_ab += (a.next_u64() == b.next_u64());
    equal_cd += (c.next_u64() == d.next_u64());
  }
  EXPECT_EQ(equal_ab, 0);
  EXPECT_EQ(equal_cd, 0);
}

TEST(SeededRng, Uniform01StaysInHalfOpenRange) {
  SeededRng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform01();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(SeededRng, DegenerateRangesAndProbabilities) {
  SeededRng rng(2);
  EXPECT_DOUBLE_EQ(rng.uniform(0.03, 0.03), 0.03);
  for (int i = 0; i < 100; ++i) {
    EXPECT_FALSE(rng.bernoulli(0.0));
    EXPECT_TRUE(rng.bernoulli(1.0));
  }
  EXPECT_DOUBLE_EQ(rng.normal(1.5, 0.0), 1.5);
}

TEST(SeededRng, BelowIsUnbiasedOverSmallRange) {
  SeededRng rng(3);
  std::array<int, 5> counts{};
  const int trials = 100000;
  for (int i = 0; i < trials; ++i) ++counts[rng.below(5)];
  for (int c : counts) EXPECT_NEAR(c, trials / 5, 600);
}

TEST(ValidateSequence, RejectsBrokenInvariants) {
  Sequence seq;
  seq.frames.push_back(Frame{0, {Vec3(0, 0, 0)}, std::nullopt});
  seq.frames.push_back(Frame{0, {}, std::nullopt});
  EXPECT_THROW(validate_sequence(seq), ContractError);

  Sequence mixed;
  mixed.frames.push_back(Frame{0, {}, testutil::rest_pose()});
  mixed.frames.push_back(Frame{1, {}, std::nullopt});
  EXPECT_THROW(validate_sequence(mixed), ContractError);

  Sequence nan_seq;
  nan_seq.frames.push_back(
      Frame{0, {Vec3(std::nan(""), 0, 0)}, std::nullopt});
  EXPECT_THROW(validate_sequence(nan_seq), ContractError);

  Sequence ok;
  ok.frames.push_back(Frame{0, {Vec3(0, 0, 0)}, std::nullopt});
  ok.frames.push_back(Frame{5, {}, std::nullopt});
  EXPECT_NO_THROW(validate_sequence(ok));
}
