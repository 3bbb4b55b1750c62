#pragma once

#include <cstdint>
#include <vector>

#include "retrip/scan_io.hpp"

namespace retrip {

struct KeypointConfig {
  double z_a = 4.5;          // z-score threshold for absolute reflectivity points
  double delta_r = 400.0;    // threshold on mean squared neighbour difference
  int window = 3;            // half-width of the ring-local neighbourhood
  double sigma_floor = 1e-6; // below this stddev no absolute points are extracted

  // Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

enum class PointClass : std::uint8_t { kRemainder = 0, kArp = 1, kRrp = 2 };

const char* point_class_name(PointClass c);

// Exclusive split of a scan; each list is sorted ascending.
struct KeypointPartition {
  std::vector<std::uint32_t> arp;
  std::vector<std::uint32_t> rrp;
  std::vector<std::uint32_t> remainder;

  std::vector<PointClass> classes(std::size_t n) const;
};

// Indices whose reflectivity z-score strictly exceeds cfg.z_a; empty when
// stats.stddev < cfg.sigma_floor.
std::vector<std::uint32_t> extract_arp(const PointCloud& cloud, const ReflectivityStats& stats,
                                       const KeypointConfig& cfg);

// Mean of (r_i - r_j)^2 over up to `window` ring neighbours on each side of
// point i. Returns 0 for a point alone in its ring.
double local_variation(const PointCloud& cloud, std::uint32_t i, int window);

// local_variation for every point, indexed by point.
std::vector<double> local_variations(const PointCloud& cloud, int window);

// Absolute points take precedence: a point qualifying under both criteria is
// reported only as ARP. Ties at a threshold go to the remainder.
KeypointPartition extract_keypoints(const PointCloud& cloud, const KeypointConfig& cfg);
KeypointPartition extract_keypoints(const PointCloud& cloud, const ReflectivityStats& stats,
                                    const KeypointConfig& cfg);

}  // namespace retrip
