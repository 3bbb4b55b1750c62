#pragma once

#include <algorithm>

#include "retrip/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define RETRIP_HAVE_AVX2_BUILD 1
#else
#define RETRIP_HAVE_AVX2_BUILD 0
#endif

namespace retrip::kernels::detail {

double sum_scalar(std::span<const double> v);
double sum_sq_dev_scalar(std::span<const double> v, double mean);
double local_variation_at(std::span<const double> r, int window, std::size_t i);
void local_variation_scalar(std::span<const double> r, int window, std::span<double> out);
void zscore_above_scalar(std::span<const double> r, double mean, double stddev, double z,
                         std::span<std::uint8_t> mask);
Nearest nearest_scalar(const PointsSoA& pts, double qx, double qy, double qz);
std::size_t within_box_scalar(const PointsSoA& pts, double a, double b, double c, double tol, std::uint32_t* out);

#if RETRIP_HAVE_AVX2_BUILD
double sum_avx2(std::span<const double> v);
double sum_sq_dev_avx2(std::span<const double> v, double mean);
void local_variation_avx2(std::span<const double> r, int window, std::span<double> out);
void zscore_above_avx2(std::span<const double> r, double mean, double stddev, double z,
                       std::span<std::uint8_t> mask);
Nearest nearest_avx2(const PointsSoA& pts, double qx, double qy, double qz);
std::size_t within_box_avx2(const PointsSoA& pts, double a, double b, double c, double tol, std::uint32_t* out);
#endif

}  // namespace retrip::kernels::detail
