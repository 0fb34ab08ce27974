#include "rfslam/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace rfslam::kernels {

#ifdef RFSLAM_HAVE_AVX2
const KernelTable* avx2_table_compiled();
#endif

namespace {

bool cpu_has_avx2() {
#if defined(RFSLAM_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* initial_table() {
  if (const char* env = std::getenv("RFSLAM_SIMD")) {
    if (std::string(env) == "scalar") return &scalar_table();
  }
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> s{initial_table()};
  return s;
}

}  // namespace

const KernelTable* avx2_table() {
#ifdef RFSLAM_HAVE_AVX2
  static const bool ok = cpu_has_avx2();
  return ok ? avx2_table_compiled() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

void set_active(Isa isa) {
  if (isa == Isa::kAvx2 && avx2_table() != nullptr) {
    slot().store(avx2_table());
  } else {
    slot().store(&scalar_table());
  }
}

std::string_view isa_name(Isa isa) {
  return isa == Isa::kAvx2 ? "avx2" : "scalar";
}

}  // namespace rfslam::kernels
