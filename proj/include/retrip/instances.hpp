#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "retrip/geometry.hpp"
#include "retrip/scan_io.hpp"

namespace retrip {

struct ClusterConfig {
  double radius = 0.5;  // connectivity distance, inclusive
  std::size_t min_cluster_size = 5;
  std::size_t max_cluster_size = 10000;
  std::size_t k = 20;   // key-instance budget

  void validate() const;
};

struct Cluster {
  std::vector<std::uint32_t> members;  // sorted point indices
  Label source = Label::kArp;
};

struct Instance {
  Vec3 centroid = Vec3::Zero();
  Label label = Label::kArp;
  std::uint32_t size = 0;
  std::uint32_t first_member = 0;  // lowest member index, used for tie-breaking

  friend bool operator==(const Instance&, const Instance&) = default;
};

struct KeyInstanceSet {
  std::vector<Instance> instances;
  std::uint32_t frame_id = 0;

  std::size_t size() const { return instances.size(); }
};

// Connected components of the radius graph over `indices` (edge iff distance
// <= radius), keeping components whose size lies in [min, max]. Clusters are
// ordered by their lowest member index.
std::vector<Cluster> euclidean_cluster(const PointCloud& cloud, std::span<const std::uint32_t> indices,
                                       const ClusterConfig& cfg, Label source = Label::kArp);

std::vector<Instance> make_instances(const PointCloud& cloud, std::span<const Cluster> clusters);

// Strict weak order used for key-set selection: larger first, then closer to
// the sensor origin, then lower first member index.
bool instance_priority_less(const Instance& a, const Instance& b);

// Up to k instances: absolute instances first, relative instances filling the
// remaining k - |ari| slots, each group in priority order.
KeyInstanceSet build_key_instance_set(std::span<const Instance> ari, std::span<const Instance> rri,
                                      std::size_t k, std::uint32_t frame_id);

}  // namespace retrip
