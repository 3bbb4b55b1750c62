#include "retrip/verification.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "retrip/kernels.hpp"

namespace retrip {

void VerifyConfig::validate() const {
  if (!(voxel_size > 0.0)) throw std::invalid_argument("voxel_size must be positive");
  if (!(planarity_ratio > 0.0)) throw std::invalid_argument("planarity_ratio must be positive");
  if (min_voxel_points < 3) throw std::invalid_argument("min_voxel_points must be at least 3");
  if (!(z_l > 0.0)) throw std::invalid_argument("z_l must be positive");
  if (!(sigma_n > 0.0) || !(sigma_d > 0.0)) throw std::invalid_argument("sigma_n and sigma_d must be positive");
  if (sigma_lambda < 0) throw std::invalid_argument("sigma_lambda must be non-negative");
  if (!(accept_threshold >= 0.0 && accept_threshold <= 1.0)) {
    throw std::invalid_argument("accept_threshold must lie in [0, 1]");
  }
  if (!(consensus_dist > 0.0)) throw std::invalid_argument("consensus_dist must be positive");
  if (max_hypotheses < 1) throw std::invalid_argument("max_hypotheses must be at least 1");
}

int assign_layer(double mu_r_v, const ReflectivityStats& stats, double z_l, double sigma_floor) {
  if (stats.stddev < sigma_floor) return 0;
  const double steps = std::floor((mu_r_v - stats.mean) / (stats.stddev * z_l));
  return static_cast<int>(std::clamp(steps, 0.0, 4.0));
}

std::vector<Plane> extract_planes(const PointCloud& cloud, const ReflectivityStats& stats, const VerifyConfig& cfg) {
  cfg.validate();
  struct Keyed {
    std::array<std::int32_t, 3> voxel;
    std::uint32_t index;
  };
  std::vector<Keyed> keyed(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point& p = cloud[i];
    keyed[i] = {{static_cast<std::int32_t>(std::floor(p.x / cfg.voxel_size)),
                 static_cast<std::int32_t>(std::floor(p.y / cfg.voxel_size)),
                 static_cast<std::int32_t>(std::floor(p.z / cfg.voxel_size))},
                static_cast<std::uint32_t>(i)};
  }
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    return a.voxel != b.voxel ? a.voxel < b.voxel : a.index < b.index;
  });

  std::vector<Plane> planes;
  Eigen::SelfAdjointEigenSolver<Mat3> solver;
  for (std::size_t begin = 0; begin < keyed.size();) {
    std::size_t end = begin + 1;
    while (end < keyed.size() && keyed[end].voxel == keyed[begin].voxel) ++end;
    const std::size_t n = end - begin;
    if (n >= cfg.min_voxel_points) {
      Vec3 mean = Vec3::Zero();
      double r_sum = 0.0;
      for (std::size_t k = begin; k < end; ++k) {
        mean += cloud[keyed[k].index].xyz();
        r_sum += cloud[keyed[k].index].r;
      }
      mean /= static_cast<double>(n);
      Mat3 cov = Mat3::Zero();
      for (std::size_t k = begin; k < end; ++k) {
        const Vec3 d = cloud[keyed[k].index].xyz() - mean;
        cov.noalias() += d * d.transpose();
      }
      cov /= static_cast<double>(n);
      solver.compute(cov);
      const Vec3 ev = solver.eigenvalues();  // ascending
      if (ev[1] > 0.0 && ev[0] <= cfg.planarity_ratio * ev[1]) {
        Plane pl;
        pl.center = mean;
        pl.normal = solver.eigenvectors().col(0).normalized();
        if (pl.normal.dot(mean) > 0.0) pl.normal = -pl.normal;
        pl.layer = assign_layer(r_sum / static_cast<double>(n), stats, cfg.z_l, cfg.sigma_floor);
        pl.support = static_cast<std::uint32_t>(n);
        planes.push_back(pl);
      }
    }
    begin = end;
  }
  return planes;
}

RigidTransform estimate_transform(std::span<const std::pair<Vec3, Vec3>> pairs) {
  if (pairs.size() < 3) throw EstimationError("rigid transform needs at least 3 correspondences");
  Vec3 cq = Vec3::Zero();
  Vec3 cr = Vec3::Zero();
  for (const auto& [q, r] : pairs) {
    cq += q;
    cr += r;
  }
  cq /= static_cast<double>(pairs.size());
  cr /= static_cast<double>(pairs.size());

  Mat3 h = Mat3::Zero();
  Mat3 scatter = Mat3::Zero();
  for (const auto& [q, r] : pairs) {
    const Vec3 dq = q - cq;
    h.noalias() += dq * (r - cr).transpose();
    scatter.noalias() += dq * dq.transpose();
  }
  // Collinear (or coincident) query points leave the rotation about their line free.
  const Vec3 spread = Eigen::SelfAdjointEigenSolver<Mat3>(scatter, Eigen::EigenvaluesOnly).eigenvalues();
  if (!(spread[2] > 0.0) || spread[1] <= 1e-12 * spread[2]) {
    throw EstimationError("correspondences are collinear");
  }

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (sv[1] <= 1e-12 * sv[0]) throw EstimationError("rank-deficient correspondence set");
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  RigidTransform t;
  t.rotation = v * d * u.transpose();
  t.translation = cr - t.rotation * cq;
  return t;
}

CoincidenceResult plane_coincidence_detail(std::span<const Plane> query, std::span<const Plane> reference,
                                           const RigidTransform& t, const VerifyConfig& cfg) {
  CoincidenceResult out;
  if (query.empty() || reference.empty()) return out;
  std::vector<double> xs(reference.size()), ys(reference.size()), zs(reference.size());
  for (std::size_t j = 0; j < reference.size(); ++j) {
    xs[j] = reference[j].center.x();
    ys[j] = reference[j].center.y();
    zs[j] = reference[j].center.z();
  }
  const kernels::PointsSoA soa{xs, ys, zs};
  const auto& k = kernels::active_kernels();
  for (const Plane& p : query) {
    const Vec3 c = t.apply(p.center);
    const Vec3 n = t.rotate(p.normal);
    const Plane& r = reference[k.nearest(soa, c.x(), c.y(), c.z()).index];
    const double normal_err = std::min((n - r.normal).norm(), (n + r.normal).norm());
    if (!(normal_err < cfg.sigma_n)) continue;
    if (!(std::abs(r.normal.dot(c - r.center)) < cfg.sigma_d)) continue;
    if (!(std::abs(p.layer - r.layer) < cfg.sigma_lambda)) continue;
    ++out.matched;
  }
  out.fraction = static_cast<double>(out.matched) / static_cast<double>(query.size());
  return out;
}

double plane_coincidence(std::span<const Plane> query, std::span<const Plane> reference, const RigidTransform& t,
                         const VerifyConfig& cfg) {
  return plane_coincidence_detail(query, reference, t, cfg).fraction;
}

namespace {

bool pair_supports(const std::pair<Descriptor, Descriptor>& pr, const RigidTransform& t, double max_dist_sq) {
  for (int j = 0; j < 3; ++j) {
    const Vec3 moved = t.apply(pr.first.vertices[j].instance.centroid);
    if ((moved - pr.second.vertices[j].instance.centroid).squaredNorm() > max_dist_sq) return false;
  }
  return true;
}

}  // namespace

VerifyResult verify_loop(const DescriptorDB& db, const CandidateScore& candidate, std::span<const Plane> query_planes,
                         const VerifyConfig& cfg) {
  cfg.validate();
  VerifyResult result;
  const auto& pairs = candidate.matched_pairs;
  if (pairs.size() < 3) return result;
  const FrameRecord* ref = db.frame(candidate.frame_id);
  if (ref == nullptr) return result;

  const double max_dist_sq = cfg.consensus_dist * cfg.consensus_dist;
  const std::size_t stride = pairs.size() / cfg.max_hypotheses + 1;
  std::size_t best_support = 0;
  RigidTransform best;
  for (std::size_t h = 0; h < pairs.size(); h += stride) {
    std::array<std::pair<Vec3, Vec3>, 3> corr;
    for (int j = 0; j < 3; ++j) {
      corr[j] = {pairs[h].first.vertices[j].instance.centroid, pairs[h].second.vertices[j].instance.centroid};
    }
    RigidTransform t;
    try {
      t = estimate_transform(corr);
    } catch (const EstimationError&) {
      continue;
    }
    std::size_t support = 0;
    for (const auto& pr : pairs) support += pair_supports(pr, t, max_dist_sq) ? 1 : 0;
    if (support > best_support) {
      best_support = support;
      best = t;
    }
  }
  if (best_support == 0) return result;

  // Refine on the distinct vertex correspondences of all supporting pairs.
  std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
  std::vector<std::pair<Vec3, Vec3>> corr;
  for (const auto& pr : pairs) {
    if (!pair_supports(pr, best, max_dist_sq)) continue;
    for (int j = 0; j < 3; ++j) {
      if (seen.emplace(pr.first.vertices[j].slot, pr.second.vertices[j].slot).second) {
        corr.emplace_back(pr.first.vertices[j].instance.centroid, pr.second.vertices[j].instance.centroid);
      }
    }
  }
  try {
    result.transform = estimate_transform(corr);
  } catch (const EstimationError&) {
    result.transform = best;
  }
  result.inlier_pairs = best_support;
  const auto c = plane_coincidence_detail(query_planes, ref->planes, result.transform, cfg);
  result.coincidence = c.fraction;
  result.matched_plane_pairs = c.matched;
  result.accepted = result.coincidence >= cfg.accept_threshold;
  return result;
}

}  // namespace retrip
