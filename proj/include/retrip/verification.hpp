#pragma once

#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "retrip/geometry.hpp"
#include "retrip/retrieval.hpp"
#include "retrip/scan_io.hpp"

namespace retrip {

struct VerifyConfig {
  double voxel_size = 1.0;
  double planarity_ratio = 0.1;   // planar iff smallest eigenvalue <= ratio * middle eigenvalue
  std::size_t min_voxel_points = 10;
  double z_l = 1.0;               // reflectivity layer step, in standard deviations
  double sigma_n = 0.2;           // normal alignment threshold
  double sigma_d = 0.3;           // point-to-plane distance threshold, meters
  int sigma_lambda = 3;           // layer difference threshold
  double accept_threshold = 0.3;  // minimum plane-coincidence fraction
  double sigma_floor = 1e-6;      // below this stddev every plane gets layer 0
  double consensus_dist = 1.0;    // vertex residual for a descriptor pair to support a transform, meters
  std::size_t max_hypotheses = 50;

  void validate() const;
};

struct VerifyResult {
  bool accepted = false;
  double coincidence = 0.0;
  RigidTransform transform;          // maps query-frame points into the candidate frame
  std::size_t matched_plane_pairs = 0;
  std::size_t inlier_pairs = 0;      // descriptor pairs consistent with `transform`
};

class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reflectivity layer of a voxel with mean reflectivity `mu_r_v`:
// clamp(floor((mu_r_v - mean) / (stddev * z_l)), 0, 4); 0 when stddev < sigma_floor.
int assign_layer(double mu_r_v, const ReflectivityStats& stats, double z_l, double sigma_floor = 1e-6);

// Planar voxels of the cloud, ordered by voxel coordinate. Normals point
// toward the sensor origin.
std::vector<Plane> extract_planes(const PointCloud& cloud, const ReflectivityStats& stats, const VerifyConfig& cfg);

// Least-squares rigid transform taking each pair's first point onto its second
// (Kabsch with reflection correction). Throws EstimationError for fewer than 3
// pairs or collinear query points.
RigidTransform estimate_transform(std::span<const std::pair<Vec3, Vec3>> pairs);

struct CoincidenceResult {
  double fraction = 0.0;
  std::size_t matched = 0;
};

// Fraction of query planes that, after applying T, agree with their nearest
// reference plane (by center distance) in normal, offset and layer.
CoincidenceResult plane_coincidence_detail(std::span<const Plane> query, std::span<const Plane> reference,
                                           const RigidTransform& t, const VerifyConfig& cfg);
double plane_coincidence(std::span<const Plane> query, std::span<const Plane> reference, const RigidTransform& t,
                         const VerifyConfig& cfg);

// Geometric check of one retrieval candidate. Each matched descriptor pair
// yields a transform hypothesis from its three vertex correspondences; the
// hypothesis supported by most pairs is refined on all supporting vertices and
// then scored by plane coincidence.
VerifyResult verify_loop(const DescriptorDB& db, const CandidateScore& candidate, std::span<const Plane> query_planes,
                         const VerifyConfig& cfg);

}  // namespace retrip
