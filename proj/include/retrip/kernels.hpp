#pragma once

// Data-parallel inner loops with a scalar reference and SIMD variants. The
// variant is chosen once at runtime from the CPU features (override with the
// RETRIP_SIMD environment variable: "scalar" or "avx2").
//
// Every variant follows the same floating-point evaluation order, so results
// are bit-identical across variants:
//  - reductions accumulate into 4 lane-strided partial sums, element i going
//    to lane i % 4 (tail elements included), combined as (l0 + l1) + (l2 + l3);
//  - local variation sums neighbours in ascending index order;
//  - squared distances are ((dx*dx) + (dy*dy)) + (dz*dz), no fused multiply-add.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>

namespace retrip::kernels {

enum class Isa { kScalar, kAvx2 };

struct Nearest {
  std::size_t index = 0;
  double distance_sq = std::numeric_limits<double>::infinity();
};

// Structure-of-arrays view over 3D points.
struct PointsSoA {
  std::span<const double> x;
  std::span<const double> y;
  std::span<const double> z;
  std::size_t size() const { return x.size(); }
};

struct KernelTable {
  Isa isa;
  double (*sum)(std::span<const double> values);
  double (*sum_sq_dev)(std::span<const double> values, double mean);
  // out[i] = mean of (r[i] - r[j])^2 over j in [i - window, i + window], j != i,
  // clipped to [0, n); 0 when the window holds no other element.
  void (*local_variation)(std::span<const double> r, int window, std::span<double> out);
  // mask[i] = ((r[i] - mean) / stddev) > z
  void (*zscore_above)(std::span<const double> r, double mean, double stddev, double z,
                       std::span<std::uint8_t> mask);
  // First index of minimum squared distance to (qx, qy, qz).
  Nearest (*nearest)(const PointsSoA& pts, double qx, double qy, double qz);
  // Writes the indices i with |x[i]-a| <= tol, |y[i]-b| <= tol and
  // |z[i]-c| <= tol to `out` in ascending order and returns their count. `out`
  // must hold pts.size() entries.
  std::size_t (*within_box)(const PointsSoA& pts, double a, double b, double c, double tol, std::uint32_t* out);
};

const KernelTable& scalar_kernels();
// nullptr when the variant is not compiled in or not supported by this CPU.
const KernelTable* avx2_kernels();
// Variant used by the library.
const KernelTable& active_kernels();

std::string_view isa_name(Isa isa);

}  // namespace retrip::kernels
