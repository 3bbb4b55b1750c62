#include <cmath>

#include "kernels_impl.hpp"

#if RETRIP_HAVE_AVX2_BUILD

#include <immintrin.h>

#define RETRIP_AVX2 __attribute__((target("avx2")))

namespace retrip::kernels::detail {

namespace {

RETRIP_AVX2 inline double combine_lanes(__m256d acc, const double* tail, std::size_t tail_len) {
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  for (std::size_t l = 0; l < tail_len; ++l) lanes[l] += tail[l];
  return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

}  // namespace

RETRIP_AVX2 double sum_avx2(std::span<const double> v) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= v.size(); i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(v.data() + i));
  return combine_lanes(acc, v.data() + i, v.size() - i);
}

RETRIP_AVX2 double sum_sq_dev_avx2(std::span<const double> v, double mean) {
  const __m256d m = _mm256_set1_pd(mean);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= v.size(); i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(v.data() + i), m);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  for (std::size_t l = 0; i < v.size(); ++i, ++l) {
    const double d = v[i] - mean;
    lanes[l] += d * d;
  }
  return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

RETRIP_AVX2 void local_variation_avx2(std::span<const double> r, int window, std::span<double> out) {
  const std::size_t n = r.size();
  const std::size_t w = static_cast<std::size_t>(window);
  if (n < 2 * w + 4) {
    local_variation_scalar(r, window, out);
    return;
  }
  // Points with a full window on both sides: [w, n - w).
  for (std::size_t i = 0; i < w; ++i) out[i] = local_variation_at(r, window, i);
  const __m256d lane_count = _mm256_set1_pd(static_cast<double>(2 * w));
  std::size_t i = w;
  for (; i + 4 <= n - w; i += 4) {
    const __m256d ri = _mm256_loadu_pd(r.data() + i);
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t off = w; off >= 1; --off) {
      const __m256d d = _mm256_sub_pd(ri, _mm256_loadu_pd(r.data() + i - off));
      acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
    }
    for (std::size_t off = 1; off <= w; ++off) {
      const __m256d d = _mm256_sub_pd(ri, _mm256_loadu_pd(r.data() + i + off));
      acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
    }
    _mm256_storeu_pd(out.data() + i, _mm256_div_pd(acc, lane_count));
  }
  for (; i < n; ++i) out[i] = local_variation_at(r, window, i);
}

RETRIP_AVX2 void zscore_above_avx2(std::span<const double> r, double mean, double stddev, double z,
                                   std::span<std::uint8_t> mask) {
  const __m256d m = _mm256_set1_pd(mean);
  const __m256d s = _mm256_set1_pd(stddev);
  const __m256d zz = _mm256_set1_pd(z);
  std::size_t i = 0;
  for (; i + 4 <= r.size(); i += 4) {
    const __m256d score = _mm256_div_pd(_mm256_sub_pd(_mm256_loadu_pd(r.data() + i), m), s);
    const int bits = _mm256_movemask_pd(_mm256_cmp_pd(score, zz, _CMP_GT_OQ));
    mask[i] = bits & 1;
    mask[i + 1] = (bits >> 1) & 1;
    mask[i + 2] = (bits >> 2) & 1;
    mask[i + 3] = (bits >> 3) & 1;
  }
  for (; i < r.size(); ++i) mask[i] = ((r[i] - mean) / stddev) > z ? 1 : 0;
}

RETRIP_AVX2 std::size_t within_box_avx2(const PointsSoA& pts, double a, double b, double c, double tol,
                                        std::uint32_t* out) {
  const std::size_t n = pts.size();
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vb = _mm256_set1_pd(b);
  const __m256d vc = _mm256_set1_pd(c);
  const __m256d vt = _mm256_set1_pd(tol);
  const __m256d sign = _mm256_set1_pd(-0.0);
  std::size_t count = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d dx = _mm256_andnot_pd(sign, _mm256_sub_pd(_mm256_loadu_pd(pts.x.data() + i), va));
    const __m256d dy = _mm256_andnot_pd(sign, _mm256_sub_pd(_mm256_loadu_pd(pts.y.data() + i), vb));
    const __m256d dz = _mm256_andnot_pd(sign, _mm256_sub_pd(_mm256_loadu_pd(pts.z.data() + i), vc));
    const __m256d ok = _mm256_and_pd(_mm256_and_pd(_mm256_cmp_pd(dx, vt, _CMP_LE_OQ), _mm256_cmp_pd(dy, vt, _CMP_LE_OQ)),
                                     _mm256_cmp_pd(dz, vt, _CMP_LE_OQ));
    int bits = _mm256_movemask_pd(ok);
    while (bits != 0) {
      out[count++] = static_cast<std::uint32_t>(i + static_cast<std::size_t>(__builtin_ctz(static_cast<unsigned>(bits))));
      bits &= bits - 1;
    }
  }
  for (; i < n; ++i) {
    if (std::abs(pts.x[i] - a) <= tol && std::abs(pts.y[i] - b) <= tol && std::abs(pts.z[i] - c) <= tol) {
      out[count++] = static_cast<std::uint32_t>(i);
    }
  }
  return count;
}

RETRIP_AVX2 Nearest nearest_avx2(const PointsSoA& pts, double qx, double qy, double qz) {
  const std::size_t n = pts.size();
  const __m256d vx = _mm256_set1_pd(qx);
  const __m256d vy = _mm256_set1_pd(qy);
  const __m256d vz = _mm256_set1_pd(qz);
  __m256d best = _mm256_set1_pd(std::numeric_limits<double>::infinity());
  __m256d best_idx = _mm256_set1_pd(0.0);
  __m256d idx = _mm256_setr_pd(0.0, 1.0, 2.0, 3.0);
  const __m256d step = _mm256_set1_pd(4.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d dx = _mm256_sub_pd(vx, _mm256_loadu_pd(pts.x.data() + i));
    const __m256d dy = _mm256_sub_pd(vy, _mm256_loadu_pd(pts.y.data() + i));
    const __m256d dz = _mm256_sub_pd(vz, _mm256_loadu_pd(pts.z.data() + i));
    const __m256d d2 =
        _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)), _mm256_mul_pd(dz, dz));
    const __m256d lt = _mm256_cmp_pd(d2, best, _CMP_LT_OQ);
    best = _mm256_blendv_pd(best, d2, lt);
    best_idx = _mm256_blendv_pd(best_idx, idx, lt);
    idx = _mm256_add_pd(idx, step);
  }
  alignas(32) double lane_d[4];
  alignas(32) double lane_i[4];
  _mm256_store_pd(lane_d, best);
  _mm256_store_pd(lane_i, best_idx);
  Nearest out;
  for (int l = 0; l < 4; ++l) {
    const auto li = static_cast<std::size_t>(lane_i[l]);
    if (lane_d[l] < out.distance_sq || (lane_d[l] == out.distance_sq && li < out.index)) {
      out = {li, lane_d[l]};
    }
  }
  for (; i < n; ++i) {
    const double dx = qx - pts.x[i];
    const double dy = qy - pts.y[i];
    const double dz = qz - pts.z[i];
    const double d2 = ((dx * dx) + (dy * dy)) + (dz * dz);
    if (d2 < out.distance_sq) out = {i, d2};
  }
  return out;
}

}  // namespace retrip::kernels::detail

#endif
