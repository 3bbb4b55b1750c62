#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "retrip/instances.hpp"

namespace retrip {

struct DescriptorConfig {
  double side_min = 2.0;     // meters
  double side_max = 120.0;   // meters
  double resolution = 0.2;   // hash quantization, meters
  double degenerate_eps = 0.01;

  void validate() const;
};

// An instance together with its position in the key-instance set.
struct TriangleVertex {
  Instance instance;
  std::uint32_t slot = 0;

  friend bool operator==(const TriangleVertex&, const TriangleVertex&) = default;
};

// Triangle over three key-instance centroids. Vertices are labelled so that
// sides[0] = |v0 v1| <= sides[1] = |v1 v2| <= sides[2] = |v0 v2|.
struct Descriptor {
  std::array<TriangleVertex, 3> vertices;
  std::array<double, 3> sides{};
  Vec3 centroid = Vec3::Zero();
  std::uint32_t frame = 0;

  friend bool operator==(const Descriptor&, const Descriptor&) = default;
};

struct HashKey {
  std::array<std::int32_t, 3> bins{};
  friend bool operator==(const HashKey&, const HashKey&) = default;
};

struct HashKeyHash {
  std::size_t operator()(const HashKey& k) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (auto b : k.bins) {
      h ^= static_cast<std::uint32_t>(b);
      h *= 1099511628211ull;
      h ^= h >> 29;
    }
    return static_cast<std::size_t>(h);
  }
};

// Relabels the three vertices into canonical order; among several valid
// labellings (equal sides) the one with the lexicographically smallest slot
// triple wins. Rejects duplicate slots, sides outside [side_min, side_max],
// and near-degenerate triangles (l12 + l23 - l13 < degenerate_eps).
std::optional<Descriptor> canonicalize_triangle(const TriangleVertex& a, const TriangleVertex& b,
                                                const TriangleVertex& c, const DescriptorConfig& cfg,
                                                std::uint32_t frame = 0);

// All accepted triangles over C(n, 3) slot triples, in lexicographic slot order.
std::vector<Descriptor> build_descriptors(const KeyInstanceSet& key_set, const DescriptorConfig& cfg);

HashKey hash_key(const std::array<double, 3>& sides, double resolution);
inline HashKey hash_key(const Descriptor& d, double resolution) { return hash_key(d.sides, resolution); }

}  // namespace retrip
