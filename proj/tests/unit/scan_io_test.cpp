#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "retrip/scan_io.hpp"
#include "retrip/synth.hpp"
#include "test_support.hpp"

namespace retrip {
namespace {

std::string text_scan(const std::vector<Point>& pts, const std::vector<int>& rings, int ring_count) {
  std::ostringstream os;
  os << "rtrp v1 " << pts.size() << ' ' << ring_count << '\n';
  for (std::size_t i = 0; i < pts.size(); ++i) {
    os << pts[i].x << ' ' << pts[i].y << ' ' << pts[i].z << ' ' << pts[i].r << ' ' << rings[i] << '\n';
  }
  return os.str();
}

TEST(ScanIo, TextThreePointsTwoRings) {
  const auto cloud = decode_text("rtrp v1 3 2\n1 2 3 10 0\n4 5 6 20 0\n7 8 9 30 1\n");
  ASSERT_EQ(cloud.size(), 3u);
  EXPECT_EQ(cloud.ring_count(), 2u);
  EXPECT_EQ(cloud[2].x, 7.0);
  EXPECT_EQ(cloud[1].r, 20.0);
  EXPECT_EQ(cloud.ring_members(0).size(), 2u);
  EXPECT_EQ(cloud.ring_members(1).size(), 1u);
}

TEST(ScanIo, EmptyBodyIsEmptyCloud) {
  EXPECT_TRUE(decode_text("rtrp v1 0 0\n").empty());
  EXPECT_TRUE(decode_binary(encode_binary(PointCloud())).empty());
}

TEST(ScanIo, NegativeReflectivityNamesRecord) {
  std::vector<Point> pts(10, Point{1, 2, 3, 5});
  pts[7].r = -1;
  const std::string text = text_scan(pts, std::vector<int>(10, 0), 1);
  try {
    decode_text(text);
    FAIL() << "expected a parse error";
  } catch (const ScanParseError& e) {
    EXPECT_EQ(e.record(), 7);
    EXPECT_EQ(e.offset(), 9u);  // header is line 1
    EXPECT_NE(std::string(e.what()).find("record 7"), std::string::npos);
  }

  // Same record in binary form: header 16 bytes, records of 18 bytes.
  auto bytes = encode_binary(test::cloud_from_reflectivity(std::vector<double>(10, 5.0)));
  const float neg = -1.0f;
  std::memcpy(bytes.data() + 16 + 7 * 18 + 12, &neg, sizeof(neg));
  try {
    decode_binary(bytes);
    FAIL() << "expected a parse error";
  } catch (const ScanParseError& e) {
    EXPECT_EQ(e.record(), 7);
    EXPECT_EQ(e.offset(), 16u + 7 * 18);
  }
}

TEST(ScanIo, MalformedInputs) {
  EXPECT_THROW(decode_text("rtrp v2 1 1\n0 0 0 0 0\n"), ScanParseError);
  EXPECT_THROW(decode_text("rtrp v1 2 1\n0 0 0 0 0\n"), ScanParseError);          // truncated
  EXPECT_THROW(decode_text("rtrp v1 1 1\n0 0 nan 0 0\n"), ScanParseError);        // non-finite
  EXPECT_THROW(decode_text("rtrp v1 1 1\n0 0 0 0 1\n"), ScanParseError);          // ring out of range
  EXPECT_THROW(decode_text("rtrp v1 1 1\n0 0 0 0\n"), ScanParseError);            // short record

  auto bytes = encode_binary(test::cloud_from_reflectivity({1, 2, 3}));
  auto truncated = bytes;
  truncated.resize(truncated.size() - 1);
  EXPECT_THROW(decode_binary(truncated), ScanParseError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_binary(bad_magic), ScanParseError);
  auto inf = bytes;
  const float v = std::numeric_limits<float>::infinity();
  std::memcpy(inf.data() + 16 + 18 + 4, &v, sizeof(v));
  EXPECT_THROW(decode_binary(inf), ScanParseError);
}

TEST(ScanIo, HeaderLayout) {
  const auto bytes = encode_binary(test::cloud_from_reflectivity({1, 2, 3}));
  ASSERT_EQ(bytes.size(), 16u + 3 * 18);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "RTRP");
  std::uint32_t version = 0, count = 0, rings = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&count, bytes.data() + 8, 4);
  std::memcpy(&rings, bytes.data() + 12, 4);
  EXPECT_EQ(version, 1u);
  EXPECT_EQ(count, 3u);
  EXPECT_EQ(rings, 1u);
}

TEST(ScanIo, BinaryRoundTripIsExact) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto cloud = test::random_cloud(rng, 1 + trial * 37, 1 + trial % 5);
    EXPECT_EQ(decode_binary(encode_binary(cloud)), cloud);
  }
}

TEST(ScanIo, TextRoundTripWithinTolerance) {
  std::mt19937_64 rng(8);
  const auto cloud = test::random_cloud(rng, 500, 4);
  const auto back = decode_text(encode_text(cloud));
  ASSERT_EQ(back.size(), cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    EXPECT_NEAR(back[i].x, cloud[i].x, 1e-6);
    EXPECT_NEAR(back[i].y, cloud[i].y, 1e-6);
    EXPECT_NEAR(back[i].z, cloud[i].z, 1e-6);
    EXPECT_NEAR(back[i].r, cloud[i].r, 1e-6);
    EXPECT_EQ(back.ring_of(i), cloud.ring_of(i));
  }
}

TEST(ScanIo, SyntheticScanFileRoundTrip) {
  const Preset p = make_preset("town");
  const Scene scene = generate_scene(p.scene);
  const Trajectory traj = make_trajectory(p.scene, p.spacing, p.sensor_height);
  ScanModel model = p.model;
  model.rings = 130;  // about 100k returns once sky rays are dropped
  const PointCloud cloud = render_scan(scene, traj.poses[10], model, 10);
  ASSERT_GT(cloud.size(), 90000u);

  test::TempDir dir("scan_io");
  save_scan(cloud, dir.path() / "scan.rtrp");
  const PointCloud back = load_scan(dir.path() / "scan.rtrp");
  ASSERT_EQ(back.size(), cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    ASSERT_EQ(back[i], cloud[i]) << "point " << i;
    ASSERT_EQ(back.ring_of(i), cloud.ring_of(i));
  }
  EXPECT_EQ(format_from_path("a.txt"), ScanFormat::kText);
  EXPECT_EQ(format_from_path("a.rtrp"), ScanFormat::kBinary);
}

TEST(ScanIo, UnwritablePathIsIoError) {
  test::TempDir dir("scan_io_ro");
  const auto missing = dir.path() / "no_such_dir" / "scan.rtrp";
  EXPECT_THROW(save_scan(test::cloud_from_reflectivity({1}), missing), ScanIoError);
  EXPECT_THROW(load_scan(dir.path() / "absent.rtrp"), ScanIoError);
}

TEST(ScanIo, RingOrderFollowsStorageOrder) {
  std::vector<Point> pts;
  for (int i = 0; i < 6; ++i) pts.push_back({double(i), 0, 0, 1});
  const PointCloud cloud(pts, {1, 0, 1, 0, 1, 1}, 2);
  const auto r1 = cloud.ring_members(1);
  ASSERT_EQ(r1.size(), 4u);
  EXPECT_EQ(r1[0], 0u);
  EXPECT_EQ(r1[3], 5u);
  EXPECT_EQ(cloud.ring_position(4), 2u);
  EXPECT_THROW(PointCloud(pts, {0, 0, 0, 0, 0, 2}, 2), std::invalid_argument);
}

TEST(ReflectivityStats, HandValues) {
  auto s = reflectivity_stats(test::cloud_from_reflectivity({0, 0}));
  EXPECT_EQ(s.mean, 0.0);
  EXPECT_EQ(s.stddev, 0.0);
  s = reflectivity_stats(test::cloud_from_reflectivity({10, 10, 10, 10, 100}));
  EXPECT_DOUBLE_EQ(s.mean, 28.0);
  EXPECT_DOUBLE_EQ(s.stddev, 36.0);
  EXPECT_EQ(s.count, 5u);
  EXPECT_THROW(reflectivity_stats(PointCloud()), std::domain_error);
}

// Welford one-pass and plain two-pass, both independent of the library.
struct Moments {
  double mean;
  double stddev;
};

Moments welford(const std::vector<double>& r) {
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double d = r[i] - mean;
    mean += d / static_cast<double>(i + 1);
    m2 += d * (r[i] - mean);
  }
  return {mean, std::sqrt(m2 / static_cast<double>(r.size()))};
}

Moments two_pass(const std::vector<double>& r) {
  const double mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
  double ss = 0.0;
  for (double v : r) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(r.size()))};
}

TEST(ReflectivityStats, MatchesStreamingAndTwoPassOracles) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 255.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> r(1 + trial * 97);
    for (double& v : r) v = u(rng);
    const auto s = reflectivity_stats(test::cloud_from_reflectivity(r));
    for (const Moments m : {welford(r), two_pass(r)}) {
      EXPECT_NEAR(s.mean, m.mean, 1e-9 * std::max(1.0, std::abs(m.mean)));
      EXPECT_NEAR(s.stddev, m.stddev, 1e-9 * std::max(1.0, m.stddev));
    }
  }
}

TEST(ReflectivityStats, PermutationAndAffineInvariance) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 255.0);
  std::vector<double> r(1000);
  for (double& v : r) v = u(rng);
  const auto base = reflectivity_stats(test::cloud_from_reflectivity(r));

  auto shuffled = r;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto perm = reflectivity_stats(test::cloud_from_reflectivity(shuffled));
  EXPECT_NEAR(perm.mean, base.mean, 1e-9 * base.mean);
  EXPECT_NEAR(perm.stddev, base.stddev, 1e-9 * base.stddev);

  const double a = 1.7, b = 13.0;
  std::vector<double> scaled;
  for (double v : r) scaled.push_back(a * v + b);
  const auto aff = reflectivity_stats(test::cloud_from_reflectivity(scaled));
  EXPECT_NEAR(aff.mean, a * base.mean + b, 1e-9 * (a * base.mean + b));
  EXPECT_NEAR(aff.stddev, a * base.stddev, 1e-9 * a * base.stddev);
}

}  // namespace
}  // namespace retrip
