#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "retrip/kernels.hpp"

namespace retrip::kernels {
namespace {

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

class KernelEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    simd_ = avx2_kernels();
    if (!simd_) GTEST_SKIP() << "no SIMD variant on this machine";
  }
  const KernelTable& ref_ = scalar_kernels();
  const KernelTable* simd_ = nullptr;
};

std::vector<double> random_values(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

TEST_F(KernelEquivalence, Reductions) {
  std::mt19937_64 rng(1);
  for (std::size_t n = 0; n < 70; ++n) {
    const auto v = random_values(rng, n * 7 + n % 3, -1e3, 1e3);
    EXPECT_TRUE(same_bits(ref_.sum(v), simd_->sum(v))) << n;
    EXPECT_TRUE(same_bits(ref_.sum_sq_dev(v, 3.25), simd_->sum_sq_dev(v, 3.25))) << n;
  }
}

TEST_F(KernelEquivalence, LocalVariationAndZscore) {
  std::mt19937_64 rng(2);
  for (std::size_t n : {0u, 1u, 2u, 5u, 17u, 64u, 1023u}) {
    const auto r = random_values(rng, n, 0.0, 255.0);
    for (int w : {1, 2, 3, 8}) {
      std::vector<double> a(n), b(n);
      ref_.local_variation(r, w, a);
      simd_->local_variation(r, w, b);
      for (std::size_t i = 0; i < n; ++i) ASSERT_TRUE(same_bits(a[i], b[i])) << n << ' ' << w << ' ' << i;
    }
    std::vector<std::uint8_t> ma(n), mb(n);
    ref_.zscore_above(r, 120.0, 40.0, 1.1, ma);
    simd_->zscore_above(r, 120.0, 40.0, 1.1, mb);
    EXPECT_EQ(ma, mb);
  }
}

TEST_F(KernelEquivalence, NearestAndWithinBox) {
  std::mt19937_64 rng(3);
  for (std::size_t n : {0u, 1u, 3u, 4u, 9u, 100u, 4097u}) {
    auto x = random_values(rng, n, 0.0, 4.0), y = random_values(rng, n, 0.0, 4.0), z = random_values(rng, n, 0.0, 4.0);
    // exact duplicates and boundary values exercise tie and <= handling
    if (n > 5) {
      x[5] = x[2], y[5] = y[2], z[5] = z[2];
      x[3] = 2.5, y[3] = 1.0, z[3] = 1.0;
    }
    const PointsSoA pts{x, y, z};
    for (int q = 0; q < 20; ++q) {
      const auto p = random_values(rng, 3, 0.0, 4.0);
      const Nearest a = ref_.nearest(pts, p[0], p[1], p[2]);
      const Nearest b = simd_->nearest(pts, p[0], p[1], p[2]);
      EXPECT_EQ(a.index, b.index);
      EXPECT_TRUE(same_bits(a.distance_sq, b.distance_sq));

      std::vector<std::uint32_t> oa(n + 1), ob(n + 1);
      const std::size_t ca = ref_.within_box(pts, p[0], p[1], p[2], 0.5, oa.data());
      const std::size_t cb = simd_->within_box(pts, p[0], p[1], p[2], 0.5, ob.data());
      ASSERT_EQ(ca, cb);
      oa.resize(ca);
      ob.resize(cb);
      EXPECT_EQ(oa, ob);
    }
    if (n > 5) {
      std::vector<std::uint32_t> oa(n), ob(n);
      // |2.5 - 2.0| == 0.5 exactly: inclusive
      const std::size_t ca = ref_.within_box(pts, 2.0, 1.0, 1.0, 0.5, oa.data());
      EXPECT_EQ(ca, simd_->within_box(pts, 2.0, 1.0, 1.0, 0.5, ob.data()));
      EXPECT_NE(std::find(oa.begin(), oa.begin() + ca, 3u), oa.begin() + ca);
    }
  }
}

// Plain loops independent of the lane ordering.
TEST(ScalarKernels, AgreeWithNaiveLoops) {
  const KernelTable& k = scalar_kernels();
  std::mt19937_64 rng(4);
  const auto v = random_values(rng, 1001, 0.0, 100.0);
  long double s = 0.0L;
  for (double x : v) s += x;
  EXPECT_NEAR(k.sum(v), static_cast<double>(s), 1e-9);

  const std::vector<double> r{0, 10, 20, 1000};
  std::vector<double> out(4);
  k.local_variation(r, 2, out);
  EXPECT_DOUBLE_EQ(out[0], (100.0 + 400.0) / 2.0);
  EXPECT_DOUBLE_EQ(out[1], (100.0 + 100.0 + 990.0 * 990.0) / 3.0);

  const std::vector<double> x{0, 3, 1, 1}, y{0, 0, 0, 0}, z{0, 0, 0, 0};
  const Nearest n = k.nearest({x, y, z}, 1.2, 0, 0);
  EXPECT_EQ(n.index, 2u);  // first of the tied minimum
  EXPECT_NEAR(n.distance_sq, 0.04, 1e-15);

  std::vector<std::uint32_t> idx(4);
  EXPECT_EQ(k.within_box({x, y, z}, 1.0, 0.0, 0.0, 0.0, idx.data()), 2u);
  EXPECT_EQ(idx[0], 2u);
  EXPECT_EQ(idx[1], 3u);
}

TEST(Dispatch, ActiveTableIsAVariant) {
  const Isa isa = active_kernels().isa;
  EXPECT_TRUE(isa == Isa::kScalar || isa == Isa::kAvx2);
  EXPECT_EQ(isa_name(Isa::kScalar), "scalar");
  EXPECT_EQ(isa_name(Isa::kAvx2), "avx2");
}

}  // namespace
}  // namespace retrip::kernels
