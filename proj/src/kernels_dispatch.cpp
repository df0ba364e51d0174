#include <atomic>

#include "uad/error.hpp"
#include "uad/kernels.hpp"

namespace uad::kernels {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "unknown";
}

bool supported(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(UAD_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::Neon:
#if defined(UAD_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa detect() {
  if (supported(Isa::Avx2)) return Isa::Avx2;
  if (supported(Isa::Neon)) return Isa::Neon;
  return Isa::Scalar;
}

const KernelTable& table(Isa isa) {
  if (!supported(isa)) {
    throw ConfigError("kernel ISA '" + std::string(isa_name(isa)) +
                      "' is not available on this build/CPU");
  }
  switch (isa) {
#if defined(UAD_HAVE_AVX2)
    case Isa::Avx2: return avx2::table();
#endif
#if defined(UAD_HAVE_NEON)
    case Isa::Neon: return neon::table();
#endif
    default: return scalar::table();
  }
}

namespace {
std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> s{&table(detect())};
  return s;
}
}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

void select(Isa isa) { slot().store(&table(isa), std::memory_order_relaxed); }

}  // namespace uad::kernels
