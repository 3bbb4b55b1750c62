#include "retrip/keypoints.hpp"

#include <stdexcept>

#include "retrip/kernels.hpp"

namespace retrip {

void KeypointConfig::validate() const {
  if (!(z_a > 0.0)) throw std::invalid_argument("z_a must be positive");
  if (!(delta_r > 0.0)) throw std::invalid_argument("delta_r must be positive");
  if (window < 1) throw std::invalid_argument("window must be at least 1");
  if (!(sigma_floor > 0.0)) throw std::invalid_argument("sigma_floor must be positive");
}

const char* point_class_name(PointClass c) {
  switch (c) {
    case PointClass::kArp: return "ARP";
    case PointClass::kRrp: return "RRP";
    case PointClass::kRemainder: return "REM";
  }
  return "REM";
}

std::vector<PointClass> KeypointPartition::classes(std::size_t n) const {
  std::vector<PointClass> out(n, PointClass::kRemainder);
  for (auto i : arp) out[i] = PointClass::kArp;
  for (auto i : rrp) out[i] = PointClass::kRrp;
  return out;
}

std::vector<std::uint32_t> extract_arp(const PointCloud& cloud, const ReflectivityStats& stats,
                                       const KeypointConfig& cfg) {
  std::vector<std::uint32_t> out;
  if (cloud.empty() || stats.stddev < cfg.sigma_floor) return out;
  std::vector<double> r(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) r[i] = cloud[i].r;
  std::vector<std::uint8_t> mask(cloud.size());
  kernels::active_kernels().zscore_above(r, stats.mean, stats.stddev, cfg.z_a, mask);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out.push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

double local_variation(const PointCloud& cloud, std::uint32_t i, int window) {
  if (i >= cloud.size()) throw std::out_of_range("point index out of range");
  const auto members = cloud.ring_members(cloud.ring_of(i));
  const std::size_t pos = cloud.ring_position(i);
  const std::size_t w = static_cast<std::size_t>(window);
  const std::size_t lo = pos >= w ? pos - w : 0;
  const std::size_t hi = std::min(members.size() - 1, pos + w);
  const double ri = cloud[i].r;
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t j = lo; j <= hi; ++j) {
    if (j == pos) continue;
    const double d = ri - cloud[members[j]].r;
    acc += d * d;
    ++count;
  }
  return count ? acc / static_cast<double>(count) : 0.0;
}

std::vector<double> local_variations(const PointCloud& cloud, int window) {
  std::vector<double> out(cloud.size(), 0.0);
  std::vector<double> ring_r;
  std::vector<double> ring_out;
  const auto& k = kernels::active_kernels();
  for (std::uint32_t ring = 0; ring < cloud.ring_count(); ++ring) {
    const auto members = cloud.ring_members(ring);
    ring_r.resize(members.size());
    ring_out.resize(members.size());
    for (std::size_t j = 0; j < members.size(); ++j) ring_r[j] = cloud[members[j]].r;
    k.local_variation(ring_r, window, ring_out);
    for (std::size_t j = 0; j < members.size(); ++j) out[members[j]] = ring_out[j];
  }
  return out;
}

KeypointPartition extract_keypoints(const PointCloud& cloud, const ReflectivityStats& stats,
                                    const KeypointConfig& cfg) {
  cfg.validate();
  KeypointPartition part;
  part.arp = extract_arp(cloud, stats, cfg);
  std::vector<std::uint8_t> is_arp(cloud.size(), 0);
  for (auto i : part.arp) is_arp[i] = 1;
  const auto dr = local_variations(cloud, cfg.window);
  for (std::uint32_t i = 0; i < cloud.size(); ++i) {
    if (is_arp[i]) continue;
    if (dr[i] > cfg.delta_r) {
      part.rrp.push_back(i);
    } else {
      part.remainder.push_back(i);
    }
  }
  return part;
}

KeypointPartition extract_keypoints(const PointCloud& cloud, const KeypointConfig& cfg) {
  if (cloud.empty()) return {};
  return extract_keypoints(cloud, reflectivity_stats(cloud), cfg);
}

}  // namespace retrip
