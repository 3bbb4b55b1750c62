#include "retrip/descriptor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace retrip {

void DescriptorConfig::validate() const {
  if (!(side_min > 0.0) || !(side_min < side_max)) {
    throw std::invalid_argument("side bounds must satisfy 0 < side_min < side_max");
  }
  if (!(resolution > 0.0)) throw std::invalid_argument("resolution must be positive");
  if (!(degenerate_eps >= 0.0)) throw std::invalid_argument("degenerate_eps must be non-negative");
}

std::optional<Descriptor> canonicalize_triangle(const TriangleVertex& a, const TriangleVertex& b,
                                                const TriangleVertex& c, const DescriptorConfig& cfg,
                                                std::uint32_t frame) {
  if (a.slot == b.slot || b.slot == c.slot || a.slot == c.slot) return std::nullopt;
  const std::array<const TriangleVertex*, 3> v{&a, &b, &c};
  auto dist = [&](int i, int j) { return (v[i]->instance.centroid - v[j]->instance.centroid).norm(); };
  // d[i][j] computed once so every labelling sees identical side values.
  double d[3][3];
  for (int i = 0; i < 3; ++i) {
    d[i][i] = 0.0;
    for (int j = i + 1; j < 3; ++j) d[i][j] = d[j][i] = dist(i, j);
  }

  static constexpr std::array<std::array<int, 3>, 6> kPerms{
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  const std::array<int, 3>* best = nullptr;
  std::array<std::uint32_t, 3> best_slots{};
  for (const auto& p : kPerms) {
    const double l12 = d[p[0]][p[1]];
    const double l23 = d[p[1]][p[2]];
    const double l13 = d[p[0]][p[2]];
    if (!(l12 <= l23 && l23 <= l13)) continue;
    const std::array<std::uint32_t, 3> slots{v[p[0]]->slot, v[p[1]]->slot, v[p[2]]->slot};
    if (best == nullptr || slots < best_slots) {
      best = &p;
      best_slots = slots;
    }
  }
  if (best == nullptr) return std::nullopt;  // only reachable with NaN centroids

  const auto& p = *best;
  Descriptor out;
  out.vertices = {*v[p[0]], *v[p[1]], *v[p[2]]};
  out.sides = {d[p[0]][p[1]], d[p[1]][p[2]], d[p[0]][p[2]]};
  for (double s : out.sides) {
    if (s < cfg.side_min || s > cfg.side_max) return std::nullopt;
  }
  if (out.sides[0] + out.sides[1] - out.sides[2] < cfg.degenerate_eps) return std::nullopt;
  out.centroid = (out.vertices[0].instance.centroid + out.vertices[1].instance.centroid +
                  out.vertices[2].instance.centroid) /
                 3.0;
  out.frame = frame;
  return out;
}

std::vector<Descriptor> build_descriptors(const KeyInstanceSet& key_set, const DescriptorConfig& cfg) {
  cfg.validate();
  std::vector<Descriptor> out;
  const std::size_t n = key_set.instances.size();
  if (n < 3) return out;
  out.reserve(n * (n - 1) * (n - 2) / 6);
  std::vector<TriangleVertex> verts(n);
  for (std::size_t i = 0; i < n; ++i) verts[i] = {key_set.instances[i], static_cast<std::uint32_t>(i)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      for (std::size_t k = j + 1; k < n; ++k) {
        if (auto d = canonicalize_triangle(verts[i], verts[j], verts[k], cfg, key_set.frame_id)) {
          out.push_back(*d);
        }
      }
    }
  }
  return out;
}

HashKey hash_key(const std::array<double, 3>& sides, double resolution) {
  HashKey key;
  for (int i = 0; i < 3; ++i) key.bins[i] = static_cast<std::int32_t>(std::floor(sides[i] / resolution));
  return key;
}

}  // namespace retrip
