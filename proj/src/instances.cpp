#include "retrip/instances.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace retrip {

namespace {

struct CellKey {
  std::int64_t x, y, z;
  friend bool operator==(const CellKey&, const CellKey&) = default;
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ull;
    h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4Full + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::uint8_t> rank_;
};

}  // namespace

void ClusterConfig::validate() const {
  if (!(radius > 0.0)) throw std::invalid_argument("cluster radius must be positive");
  if (min_cluster_size < 1 || min_cluster_size > max_cluster_size) {
    throw std::invalid_argument("cluster size bounds must satisfy 1 <= min <= max");
  }
  if (k < 3) throw std::invalid_argument("key-instance budget k must be at least 3");
}

std::vector<Cluster> euclidean_cluster(const PointCloud& cloud, std::span<const std::uint32_t> indices,
                                       const ClusterConfig& cfg, Label source) {
  cfg.validate();
  const std::size_t n = indices.size();
  if (n == 0) return {};
  const double r2 = cfg.radius * cfg.radius;

  // Cells of edge `radius`: any edge joins points in the same or adjacent cells.
  std::unordered_map<CellKey, std::vector<std::uint32_t>, CellKeyHash> grid;
  grid.reserve(n);
  std::vector<CellKey> keys(n);
  for (std::size_t a = 0; a < n; ++a) {
    const Point& p = cloud[indices[a]];
    keys[a] = {static_cast<std::int64_t>(std::floor(p.x / cfg.radius)),
               static_cast<std::int64_t>(std::floor(p.y / cfg.radius)),
               static_cast<std::int64_t>(std::floor(p.z / cfg.radius))};
    grid[keys[a]].push_back(static_cast<std::uint32_t>(a));
  }

  DisjointSets sets(n);
  for (std::size_t a = 0; a < n; ++a) {
    const Point& pa = cloud[indices[a]];
    const CellKey& ka = keys[a];
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = grid.find({ka.x + dx, ka.y + dy, ka.z + dz});
          if (it == grid.end()) continue;
          for (const std::uint32_t b : it->second) {
            if (b <= a) continue;
            if (sets.find(a) == sets.find(b)) continue;
            const Point& pb = cloud[indices[b]];
            const double ex = pa.x - pb.x, ey = pa.y - pb.y, ez = pa.z - pb.z;
            if (ex * ex + ey * ey + ez * ez <= r2) sets.unite(a, b);
          }
        }
      }
    }
  }

  std::unordered_map<std::size_t, std::size_t> root_to_cluster;
  std::vector<Cluster> clusters;
  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t root = sets.find(a);
    auto [it, inserted] = root_to_cluster.emplace(root, clusters.size());
    if (inserted) clusters.push_back({{}, source});
    clusters[it->second].members.push_back(indices[a]);
  }
  std::vector<Cluster> kept;
  for (auto& c : clusters) {
    if (c.members.size() < cfg.min_cluster_size || c.members.size() > cfg.max_cluster_size) continue;
    std::sort(c.members.begin(), c.members.end());
    kept.push_back(std::move(c));
  }
  std::sort(kept.begin(), kept.end(),
            [](const Cluster& a, const Cluster& b) { return a.members.front() < b.members.front(); });
  return kept;
}

std::vector<Instance> make_instances(const PointCloud& cloud, std::span<const Cluster> clusters) {
  std::vector<Instance> out;
  out.reserve(clusters.size());
  for (const Cluster& c : clusters) {
    if (c.members.empty()) throw std::invalid_argument("empty cluster");
    Vec3 sum = Vec3::Zero();
    for (const auto i : c.members) sum += cloud[i].xyz();
    Instance inst;
    inst.centroid = sum / static_cast<double>(c.members.size());
    inst.label = c.source;
    inst.size = static_cast<std::uint32_t>(c.members.size());
    inst.first_member = *std::min_element(c.members.begin(), c.members.end());
    out.push_back(inst);
  }
  return out;
}

bool instance_priority_less(const Instance& a, const Instance& b) {
  if (a.size != b.size) return a.size > b.size;
  const double da = a.centroid.squaredNorm();
  const double db = b.centroid.squaredNorm();
  if (da != db) return da < db;
  return a.first_member < b.first_member;
}

KeyInstanceSet build_key_instance_set(std::span<const Instance> ari, std::span<const Instance> rri,
                                      std::size_t k, std::uint32_t frame_id) {
  for (const auto& i : ari) {
    if (i.label != Label::kArp) throw std::invalid_argument("absolute instance list holds a relative instance");
  }
  for (const auto& i : rri) {
    if (i.label != Label::kRrp) throw std::invalid_argument("relative instance list holds an absolute instance");
  }
  std::vector<Instance> a(ari.begin(), ari.end());
  std::vector<Instance> r(rri.begin(), rri.end());
  std::sort(a.begin(), a.end(), instance_priority_less);
  std::sort(r.begin(), r.end(), instance_priority_less);

  KeyInstanceSet set;
  set.frame_id = frame_id;
  const std::size_t take_a = std::min(k, a.size());
  set.instances.assign(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(take_a));
  const std::size_t take_r = std::min(k - take_a, r.size());
  set.instances.insert(set.instances.end(), r.begin(), r.begin() + static_cast<std::ptrdiff_t>(take_r));
  return set;
}

}  // namespace retrip
