#pragma once

// Data-parallel inner loops shared by the differentiable primitives.
//
// Every kernel has a scalar reference implementation; AVX2+FMA (x86-64) and
// NEON (AArch64) variants are compiled when the toolchain targets them and
// selected at runtime. Vector variants reassociate sums, so they agree with
// the reference to rounding error, not bit-for-bit; a given process always
// uses one table, which keeps runs reproducible.

#include <cstddef>
#include <string_view>

namespace uad::kernels {

enum class Isa { Scalar, Avx2, Neon };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // y[i] += a * x[i * stride]
  void (*axpy_strided)(double a, const double* x, std::size_t stride, double* y,
                       std::size_t n);
  // sum_i x[i]
  double (*sum)(const double* x, std::size_t n);
};

/// True when the running CPU can execute the given table.
bool supported(Isa isa);

/// Best table for this CPU.
Isa detect();

/// Table for a specific ISA; throws ConfigError if unsupported or not built.
const KernelTable& table(Isa isa);

/// Table used by the library. Defaults to detect().
const KernelTable& active();

/// Overrides the process-wide selection (tests and benchmarks).
void select(Isa isa);

namespace scalar {
const KernelTable& table();
}
#if defined(UAD_HAVE_AVX2)
namespace avx2 {
const KernelTable& table();
}
#endif
#if defined(UAD_HAVE_NEON)
namespace neon {
const KernelTable& table();
}
#endif

}  // namespace uad::kernels
