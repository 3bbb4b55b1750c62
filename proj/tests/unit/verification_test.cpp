#include <gtest/gtest.h>

#include <random>

#include <Eigen/Eigenvalues>

#include "retrip/verification.hpp"

namespace retrip {
namespace {

RigidTransform random_transform(std::mt19937_64& rng, double trans = 20.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  RigidTransform t;
  t.rotation = Eigen::Quaterniond(g(rng), g(rng), g(rng), g(rng)).normalized().toRotationMatrix();
  t.translation = Vec3(g(rng), g(rng), g(rng)) * trans;
  return t;
}

// Horn's closed-form quaternion solution, independent of the SVD route.
RigidTransform horn(const std::vector<std::pair<Vec3, Vec3>>& pairs) {
  Vec3 ca = Vec3::Zero(), cb = Vec3::Zero();
  for (const auto& [a, b] : pairs) {
    ca += a;
    cb += b;
  }
  ca /= static_cast<double>(pairs.size());
  cb /= static_cast<double>(pairs.size());
  Mat3 s = Mat3::Zero();
  for (const auto& [a, b] : pairs) s += (a - ca) * (b - cb).transpose();
  Eigen::Matrix4d n;
  n << s(0, 0) + s(1, 1) + s(2, 2), s(1, 2) - s(2, 1), s(2, 0) - s(0, 2), s(0, 1) - s(1, 0),
      s(1, 2) - s(2, 1), s(0, 0) - s(1, 1) - s(2, 2), s(0, 1) + s(1, 0), s(2, 0) + s(0, 2),
      s(2, 0) - s(0, 2), s(0, 1) + s(1, 0), -s(0, 0) + s(1, 1) - s(2, 2), s(1, 2) + s(2, 1),
      s(0, 1) - s(1, 0), s(2, 0) + s(0, 2), s(1, 2) + s(2, 1), -s(0, 0) - s(1, 1) + s(2, 2);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(n);
  const Eigen::Vector4d q = es.eigenvectors().col(3);
  RigidTransform t;
  t.rotation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized().toRotationMatrix();
  t.translation = cb - t.rotation * ca;
  return t;
}

std::vector<std::pair<Vec3, Vec3>> correspondences(std::mt19937_64& rng, const RigidTransform& t, std::size_t n,
                                                   double noise) {
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::normal_distribution<double> g(0.0, noise > 0 ? noise : 1.0);
  std::vector<std::pair<Vec3, Vec3>> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 p(u(rng), u(rng), u(rng));
    Vec3 q = t.apply(p);
    if (noise > 0) q += Vec3(g(rng), g(rng), g(rng));
    out.emplace_back(p, q);
  }
  return out;
}

TEST(EstimateTransform, ExactRecovery) {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 100; ++trial) {
    const RigidTransform t = random_transform(rng);
    const auto pairs = correspondences(rng, t, 3 + trial % 10, 0.0);
    const RigidTransform est = estimate_transform(pairs);
    EXPECT_LT((est.rotation - t.rotation).norm(), 1e-9);
    EXPECT_LT((est.translation - t.translation).norm(), 1e-9);
    EXPECT_NEAR(est.rotation.determinant(), 1.0, 1e-12);
  }
}

TEST(EstimateTransform, NoisyAgreesWithQuaternionSolution) {
  std::mt19937_64 rng(62);
  double worst_rot = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const RigidTransform t = random_transform(rng);
    const auto pairs = correspondences(rng, t, 20, 0.05);
    const RigidTransform est = estimate_transform(pairs);
    const RigidTransform ref = horn(pairs);
    EXPECT_LT(rotation_angle_between(est.rotation, ref.rotation), 1e-7);
    EXPECT_LT((est.translation - ref.translation).norm(), 1e-7);
    worst_rot = std::max(worst_rot, rotation_angle_between(est.rotation, t.rotation));
  }
  // 20 points over a 20 m cube with 5 cm noise pin rotation to a few mrad
  EXPECT_LT(worst_rot, 0.02);
}

TEST(EstimateTransform, ReflectionIsCorrected) {
  // Mirrored target: the best proper rotation is returned, never a reflection.
  std::vector<std::pair<Vec3, Vec3>> pairs;
  for (const Vec3& p : {Vec3(1, 0, 0), Vec3(0, 2, 0), Vec3(0, 0, 3), Vec3(1, 1, 1)}) {
    pairs.emplace_back(p, Vec3(-p.x(), p.y(), p.z()));
  }
  const RigidTransform est = estimate_transform(pairs);
  EXPECT_NEAR(est.rotation.determinant(), 1.0, 1e-12);
}

TEST(EstimateTransform, DegenerateInputs) {
  std::vector<std::pair<Vec3, Vec3>> two{{Vec3(0, 0, 0), Vec3(0, 0, 0)}, {Vec3(1, 0, 0), Vec3(1, 0, 0)}};
  EXPECT_THROW(estimate_transform(two), EstimationError);
  std::vector<std::pair<Vec3, Vec3>> line;
  for (int i = 0; i < 5; ++i) line.emplace_back(Vec3(i, 2.0 * i, 0), Vec3(i, 0, 1));
  EXPECT_THROW(estimate_transform(line), EstimationError);
  std::vector<std::pair<Vec3, Vec3>> same(4, {Vec3(1, 1, 1), Vec3(2, 2, 2)});
  EXPECT_THROW(estimate_transform(same), EstimationError);
}

TEST(AssignLayer, HandValues) {
  ReflectivityStats s;
  s.mean = 50.0;
  s.stddev = 10.0;
  EXPECT_EQ(assign_layer(49.0, s, 1.0), 0);  // below the mean clamps to 0
  EXPECT_EQ(assign_layer(50.0, s, 1.0), 0);
  EXPECT_EQ(assign_layer(65.0, s, 1.0), 1);
  EXPECT_EQ(assign_layer(70.0, s, 1.0), 2);
  EXPECT_EQ(assign_layer(70.0, s, 0.5), 4);
  EXPECT_EQ(assign_layer(1000.0, s, 1.0), 4);
  s.stddev = 1e-9;
  EXPECT_EQ(assign_layer(1000.0, s, 1.0), 0);
}

PointCloud wall_cloud(double x, double refl, std::mt19937_64& rng, bool add_blob) {
  std::vector<Point> pts;
  std::uniform_real_distribution<double> u(0.02, 0.98);
  // a 4 x 4 m wall at constant x, 30 points per voxel
  for (int vy = 0; vy < 4; ++vy) {
    for (int vz = 0; vz < 4; ++vz) {
      for (int k = 0; k < 30; ++k) pts.push_back({x, vy + u(rng), vz + u(rng), refl});
    }
  }
  if (add_blob) {
    for (int k = 0; k < 200; ++k) pts.push_back({-7.0 - u(rng), -7.0 - u(rng), u(rng), refl});
  }
  return PointCloud(pts, std::vector<std::uint16_t>(pts.size(), 0), 1);
}

TEST(ExtractPlanes, WallVoxels) {
  std::mt19937_64 rng(63);
  const PointCloud cloud = wall_cloud(5.5, 80.0, rng, true);
  ReflectivityStats stats;
  stats.mean = 20.0;
  stats.stddev = 20.0;
  VerifyConfig cfg;
  const auto planes = extract_planes(cloud, stats, cfg);
  ASSERT_EQ(planes.size(), 16u);  // the blob voxel is not planar
  for (const Plane& p : planes) {
    EXPECT_LT((p.normal - Vec3(-1, 0, 0)).norm(), 1e-9);  // faces the sensor
    EXPECT_NEAR(p.center.x(), 5.5, 1e-12);
    EXPECT_EQ(p.layer, 3);
    EXPECT_EQ(p.support, 30u);
  }
  for (std::size_t i = 1; i < planes.size(); ++i) {
    const Vec3 a = planes[i - 1].center, b = planes[i].center;
    EXPECT_TRUE(std::floor(a.y()) < std::floor(b.y()) ||
                (std::floor(a.y()) == std::floor(b.y()) && std::floor(a.z()) < std::floor(b.z())));
  }
  cfg.min_voxel_points = 31;
  EXPECT_TRUE(extract_planes(cloud, stats, cfg).empty());
}

std::vector<Plane> random_planes(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Plane> out;
  for (std::size_t i = 0; i < n; ++i) {
    Plane p;
    p.center = Vec3(u(rng), u(rng), 0.1 * u(rng));
    p.normal = Vec3(g(rng), g(rng), g(rng)).normalized();
    p.layer = static_cast<int>(rng() % 5);
    out.push_back(p);
  }
  return out;
}

std::vector<Plane> move_planes(const std::vector<Plane>& in, const RigidTransform& t) {
  auto out = in;
  for (auto& p : out) {
    p.center = t.apply(p.center);
    p.normal = t.rotate(p.normal);
  }
  return out;
}

TEST(PlaneCoincidence, AlignedAndMisaligned) {
  std::mt19937_64 rng(64);
  const auto ref = random_planes(rng, 200);
  const RigidTransform t = random_transform(rng);
  const auto query = move_planes(ref, t.inverse());
  VerifyConfig cfg;
  EXPECT_DOUBLE_EQ(plane_coincidence(query, ref, t, cfg), 1.0);
  EXPECT_LT(plane_coincidence(query, ref, RigidTransform::identity(), cfg), 0.1);
  EXPECT_EQ(plane_coincidence({}, ref, t, cfg), 0.0);
  EXPECT_EQ(plane_coincidence(query, {}, t, cfg), 0.0);

  // flipped normals still agree
  auto flipped = query;
  for (auto& p : flipped) p.normal = -p.normal;
  EXPECT_DOUBLE_EQ(plane_coincidence(flipped, ref, t, cfg), 1.0);

  // layer difference: 2 passes, 3 fails with sigma_lambda 3
  auto shifted = query;
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i].layer = ref[i].layer <= 1 ? ref[i].layer + 3 : 0;
  std::size_t fails = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) fails += std::abs(shifted[i].layer - ref[i].layer) >= 3;
  const auto d = plane_coincidence_detail(shifted, ref, t, cfg);
  EXPECT_EQ(d.matched, ref.size() - fails);
}

TEST(PlaneCoincidence, ThresholdsAreStrict) {
  Plane r;
  r.center = Vec3(0, 0, 0);
  r.normal = Vec3(1, 0, 0);
  VerifyConfig cfg;
  Plane q = r;
  q.center = Vec3(0.29, 0, 0);
  EXPECT_EQ(plane_coincidence(std::vector{q}, std::vector{r}, {}, cfg), 1.0);
  q.center = Vec3(0.31, 0, 0);
  EXPECT_EQ(plane_coincidence(std::vector{q}, std::vector{r}, {}, cfg), 0.0);
  q = r;
  q.normal = Vec3(1, 0.25, 0).normalized();  // |n - r| ~ 0.245
  EXPECT_EQ(plane_coincidence(std::vector{q}, std::vector{r}, {}, cfg), 0.0);
  q.normal = Vec3(1, 0.15, 0).normalized();
  EXPECT_EQ(plane_coincidence(std::vector{q}, std::vector{r}, {}, cfg), 1.0);
}

TEST(VerifyLoop, RecoversTransformAndAccepts) {
  std::mt19937_64 rng(65);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  const RigidTransform t = RigidTransform::from_yaw(0.7, Vec3(3, -2, 0.1));

  KeyInstanceSet ref_set, query_set;
  ref_set.frame_id = 5;
  query_set.frame_id = 400;
  for (int i = 0; i < 12; ++i) {
    Instance in;
    in.centroid = Vec3(u(rng), u(rng), 0.1 * u(rng));
    in.size = 20;
    query_set.instances.push_back(in);
    in.centroid = t.apply(in.centroid);
    ref_set.instances.push_back(in);
  }
  DescriptorConfig dcfg;
  auto ref_desc = build_descriptors(ref_set, dcfg);
  for (auto& d : ref_desc) d.frame = 5;
  auto query_desc = build_descriptors(query_set, dcfg);
  for (auto& d : query_desc) d.frame = 400;

  const auto ref_planes = random_planes(rng, 100);
  DescriptorDB db;
  db.insert_frame(ref_desc, ref_set, ref_planes);
  const auto query_planes = move_planes(ref_planes, t.inverse());

  const auto cands = db.retrieve_candidates(query_desc, MatchConfig{});
  ASSERT_EQ(cands.size(), 1u);
  VerifyConfig cfg;
  const VerifyResult r = verify_loop(db, cands[0], query_planes, cfg);
  EXPECT_TRUE(r.accepted);
  EXPECT_DOUBLE_EQ(r.coincidence, 1.0);
  EXPECT_LT(rotation_angle_between(r.transform.rotation, t.rotation), 1e-9);
  EXPECT_LT((r.transform.translation - t.translation).norm(), 1e-9);
  EXPECT_GE(r.inlier_pairs, query_desc.size() / 2);

  // unrelated planes are rejected
  const auto other = random_planes(rng, 100);
  EXPECT_FALSE(verify_loop(db, cands[0], other, cfg).accepted);

  // fewer than three pairs cannot be verified
  CandidateScore few = cands[0];
  few.matched_pairs.resize(2);
  EXPECT_FALSE(verify_loop(db, few, query_planes, cfg).accepted);
}

TEST(VerifyConfigTest, Validation) {
  VerifyConfig c;
  c.accept_threshold = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = VerifyConfig{};
  c.voxel_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = VerifyConfig{};
  c.min_voxel_points = 2;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace retrip
