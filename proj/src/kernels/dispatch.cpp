#include <cstdlib>
#include <string_view>

#include "kernels_impl.hpp"

namespace retrip::kernels {

namespace {

const KernelTable kScalar{
    Isa::kScalar,          detail::sum_scalar,          detail::sum_sq_dev_scalar,
    detail::local_variation_scalar, detail::zscore_above_scalar, detail::nearest_scalar,
    detail::within_box_scalar,
};

#if RETRIP_HAVE_AVX2_BUILD
const KernelTable kAvx2{
    Isa::kAvx2,          detail::sum_avx2,          detail::sum_sq_dev_avx2,
    detail::local_variation_avx2, detail::zscore_above_avx2, detail::nearest_avx2,
    detail::within_box_avx2,
};
#endif

const KernelTable& select() {
  const char* env = std::getenv("RETRIP_SIMD");
  const std::string_view want = env ? env : "";
  if (want == "scalar") return kScalar;
  if (const KernelTable* avx2 = avx2_kernels()) return *avx2;
  return kScalar;
}

}  // namespace

const KernelTable& scalar_kernels() { return kScalar; }

const KernelTable* avx2_kernels() {
#if RETRIP_HAVE_AVX2_BUILD
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active_kernels() {
  static const KernelTable& table = select();
  return table;
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
  }
  return "unknown";
}

}  // namespace retrip::kernels
