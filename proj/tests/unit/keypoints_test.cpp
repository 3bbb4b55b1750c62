#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "retrip/keypoints.hpp"
#include "test_support.hpp"

namespace retrip {
namespace {

KeypointConfig config(double z_a, double delta_r = 400.0, int window = 3) {
  KeypointConfig c;
  c.z_a = z_a;
  c.delta_r = delta_r;
  c.window = window;
  return c;
}

TEST(Keypoints, ArpHandExample) {
  const auto cloud = test::cloud_from_reflectivity({10, 10, 10, 10, 100});
  const auto arp = extract_arp(cloud, reflectivity_stats(cloud), config(1.5));
  EXPECT_EQ(arp, std::vector<std::uint32_t>{4});
  // z-score of the outlier is exactly 2
  EXPECT_TRUE(extract_arp(cloud, reflectivity_stats(cloud), config(2.0)).empty());
}

TEST(Keypoints, ConstantCloudHasNoKeypoints) {
  const auto cloud = test::cloud_from_reflectivity(std::vector<double>(50, 42.0));
  EXPECT_TRUE(extract_arp(cloud, reflectivity_stats(cloud), config(0.5)).empty());
  const auto part = extract_keypoints(cloud, config(0.5));
  EXPECT_TRUE(part.arp.empty());
  EXPECT_TRUE(part.rrp.empty());
  EXPECT_EQ(part.remainder.size(), 50u);
}

TEST(Keypoints, LocalVariationHandValues) {
  const auto cloud = test::cloud_from_reflectivity({10, 10, 100, 10, 10});
  EXPECT_DOUBLE_EQ(local_variation(cloud, 2, 2), 8100.0);
  const auto flat = test::cloud_from_reflectivity({7, 7, 7, 7});
  EXPECT_EQ(local_variation(flat, 1, 3), 0.0);
  // ring start: only the two following points
  const auto edge = test::cloud_from_reflectivity({0, 10, 20, 1000});
  EXPECT_DOUBLE_EQ(local_variation(edge, 0, 2), (100.0 + 400.0) / 2.0);
  // single-point ring
  const PointCloud lone({{0, 0, 0, 5}, {1, 0, 0, 9}}, {0, 1}, 2);
  EXPECT_EQ(local_variation(lone, 0, 3), 0.0);
}

TEST(Keypoints, WindowStaysInsideRing) {
  // Two interleaved rings; neighbours are taken within a ring only.
  const PointCloud cloud({{0, 0, 0, 10}, {0, 0, 0, 90}, {0, 0, 0, 10}, {0, 0, 0, 90}}, {0, 1, 0, 1}, 2);
  EXPECT_EQ(local_variation(cloud, 0, 1), 0.0);
  EXPECT_EQ(local_variation(cloud, 1, 1), 0.0);
}

TEST(Keypoints, ArpTakesPrecedence) {
  std::vector<double> r(40, 10.0);
  r[20] = 250.0;
  const auto cloud = test::cloud_from_reflectivity(r);
  const auto part = extract_keypoints(cloud, config(3.0, 100.0, 2));
  EXPECT_EQ(part.arp, std::vector<std::uint32_t>{20});
  // its neighbours see a large difference and become relative points
  EXPECT_EQ(part.rrp, (std::vector<std::uint32_t>{18, 19, 21, 22}));
  EXPECT_EQ(part.remainder.size(), 35u);
}

TEST(Keypoints, TiesGoToRemainder) {
  // Point 1 has variation exactly 400 with window 1.
  const auto cloud = test::cloud_from_reflectivity({0, 20, 40});
  const auto part = extract_keypoints(cloud, config(100.0, 400.0, 1));
  EXPECT_TRUE(std::find(part.rrp.begin(), part.rrp.end(), 1u) == part.rrp.end());
}

TEST(Keypoints, ConfigValidation) {
  const auto cloud = test::cloud_from_reflectivity({1, 2});
  EXPECT_THROW(extract_keypoints(cloud, config(0.0)), std::invalid_argument);
  EXPECT_THROW(extract_keypoints(cloud, config(1.0, -1.0)), std::invalid_argument);
  EXPECT_THROW(extract_keypoints(cloud, config(1.0, 400.0, 0)), std::invalid_argument);
}

// Direct per-point evaluation of the z-score and neighbour-difference rules.
std::vector<PointClass> naive_partition(const PointCloud& cloud, const KeypointConfig& cfg) {
  const std::size_t n = cloud.size();
  long double sum = 0.0L;
  for (std::size_t i = 0; i < n; ++i) sum += cloud[i].r;
  const double mean = static_cast<double>(sum / n);
  long double ss = 0.0L;
  for (std::size_t i = 0; i < n; ++i) ss += (cloud[i].r - mean) * (cloud[i].r - mean);
  const double sd = std::sqrt(static_cast<double>(ss / n));

  std::vector<PointClass> out(n, PointClass::kRemainder);
  for (std::size_t i = 0; i < n; ++i) {
    if (sd >= cfg.sigma_floor && (cloud[i].r - mean) / sd > cfg.z_a) {
      out[i] = PointClass::kArp;
      continue;
    }
    // neighbours: same ring, within `window` positions in storage order
    std::vector<std::size_t> ring;
    for (std::size_t j = 0; j < n; ++j) {
      if (cloud.ring_of(j) == cloud.ring_of(i)) ring.push_back(j);
    }
    const auto pos = static_cast<long>(std::find(ring.begin(), ring.end(), i) - ring.begin());
    double acc = 0.0;
    int cnt = 0;
    for (long d = -cfg.window; d <= cfg.window; ++d) {
      const long j = pos + d;
      if (d == 0 || j < 0 || j >= static_cast<long>(ring.size())) continue;
      const double diff = cloud[i].r - cloud[ring[static_cast<std::size_t>(j)]].r;
      acc += diff * diff;
      ++cnt;
    }
    if (cnt > 0 && acc / cnt > cfg.delta_r) out[i] = PointClass::kRrp;
  }
  return out;
}

TEST(Keypoints, MatchesNaivePerPointOracle) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    auto cloud = test::random_cloud(rng, 200 + trial * 10, 1 + trial % 4);
    const KeypointConfig cfg = config(1.2 + 0.02 * trial, 2000.0 + 300.0 * trial, 1 + trial % 4);
    const auto part = extract_keypoints(cloud, cfg);
    EXPECT_EQ(part.classes(cloud.size()), naive_partition(cloud, cfg)) << "trial " << trial;
  }
}

TEST(Keypoints, PartitionProperty) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const auto cloud = test::random_cloud(rng, 300, 3);
    const auto part = extract_keypoints(cloud, config(1.0, 3000.0, 2));
    std::vector<int> seen(cloud.size(), 0);
    for (const auto* set : {&part.arp, &part.rrp, &part.remainder}) {
      EXPECT_TRUE(std::is_sorted(set->begin(), set->end()));
      for (auto i : *set) ++seen[i];
    }
    EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  }
}

TEST(Keypoints, AffineAndShiftInvariance) {
  std::mt19937_64 rng(23);
  const auto cloud = test::random_cloud(rng, 800, 4);
  const KeypointConfig cfg = config(1.5, 5000.0, 3);
  const auto base = extract_keypoints(cloud, cfg);

  // Scale by a power of two and shift by a small integer so the transformed
  // values stay exact and the z-scores compare equal.
  std::vector<Point> scaled(cloud.points().begin(), cloud.points().end());
  for (auto& p : scaled) p.r = 2.0 * p.r + 8.0;
  std::vector<std::uint16_t> rings(cloud.rings().begin(), cloud.rings().end());
  const PointCloud affine(scaled, rings, cloud.ring_count());
  EXPECT_EQ(extract_keypoints(affine, cfg).arp, base.arp);

  std::vector<Point> shifted(cloud.points().begin(), cloud.points().end());
  for (auto& p : shifted) p.r += 64.0;
  const PointCloud moved(shifted, rings, cloud.ring_count());
  const auto s = extract_keypoints(moved, cfg);
  EXPECT_EQ(s.arp, base.arp);
  EXPECT_EQ(s.rrp, base.rrp);
}

}  // namespace
}  // namespace retrip
