#include <cmath>

#include "kernels_impl.hpp"

namespace retrip::kernels::detail {

double sum_scalar(std::span<const double> v) {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= v.size(); i += 4) {
    acc[0] += v[i];
    acc[1] += v[i + 1];
    acc[2] += v[i + 2];
    acc[3] += v[i + 3];
  }
  for (std::size_t l = 0; i < v.size(); ++i, ++l) acc[l] += v[i];
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

double sum_sq_dev_scalar(std::span<const double> v, double mean) {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= v.size(); i += 4) {
    for (std::size_t l = 0; l < 4; ++l) {
      const double d = v[i + l] - mean;
      acc[l] += d * d;
    }
  }
  for (std::size_t l = 0; i < v.size(); ++i, ++l) {
    const double d = v[i] - mean;
    acc[l] += d * d;
  }
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

double local_variation_at(std::span<const double> r, int window, std::size_t i) {
  const std::size_t n = r.size();
  const std::size_t w = static_cast<std::size_t>(window);
  const std::size_t lo = i >= w ? i - w : 0;
  const std::size_t hi = std::min(n - 1, i + w);
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t j = lo; j <= hi; ++j) {
    if (j == i) continue;
    const double d = r[i] - r[j];
    acc += d * d;
    ++count;
  }
  return count ? acc / static_cast<double>(count) : 0.0;
}

void local_variation_scalar(std::span<const double> r, int window, std::span<double> out) {
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = local_variation_at(r, window, i);
}

void zscore_above_scalar(std::span<const double> r, double mean, double stddev, double z,
                         std::span<std::uint8_t> mask) {
  for (std::size_t i = 0; i < r.size(); ++i) mask[i] = ((r[i] - mean) / stddev) > z ? 1 : 0;
}

Nearest nearest_scalar(const PointsSoA& pts, double qx, double qy, double qz) {
  Nearest best;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double dx = qx - pts.x[i];
    const double dy = qy - pts.y[i];
    const double dz = qz - pts.z[i];
    const double d2 = ((dx * dx) + (dy * dy)) + (dz * dz);
    if (d2 < best.distance_sq) best = {i, d2};
  }
  return best;
}

std::size_t within_box_scalar(const PointsSoA& pts, double a, double b, double c, double tol, std::uint32_t* out) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (std::abs(pts.x[i] - a) <= tol && std::abs(pts.y[i] - b) <= tol && std::abs(pts.z[i] - c) <= tol) {
      out[n++] = static_cast<std::uint32_t>(i);
    }
  }
  return n;
}

}  // namespace retrip::kernels::detail
