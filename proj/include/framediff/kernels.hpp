#pragma once

#include <cstddef>

// Low-level array kernels. Every routine exists as a scalar reference
// implementation and, on x86-64 with AVX2+FMA, as a vectorized variant.
// The active table is picked once at startup (see dispatch.cpp) and can
// be forced via the FRAMEDIFF_KERNELS environment variable or set_active().
//
// Elementwise kernels (add/sub/mul/scale/axpy) are bit-identical across
// variants: same per-element operation, no reassociation. Reductions and
// GEMMs reassociate and may use FMA, so they agree only to ~1e-13 relative.

namespace framediff::kern {

enum class Isa { kScalar, kAvx2 };

struct Ops {
  const char* name;

  // out[i] = x[i] op y[i]
  void (*add)(std::size_t n, const double* x, const double* y, double* out);
  void (*sub)(std::size_t n, const double* x, const double* y, double* out);
  void (*mul)(std::size_t n, const double* x, const double* y, double* out);
  // out[i] = a * x[i]
  void (*scale)(std::size_t n, double a, const double* x, double* out);
  // y[i] += a * x[i]
  void (*axpy)(std::size_t n, double a, const double* x, double* y);

  double (*dot)(std::size_t n, const double* x, const double* y);
  double (*sum)(std::size_t n, const double* x);

  // Packed row-major GEMM. When accumulate is false, C is overwritten.
  // nn: C[m,n] = A[m,k] * B[k,n]
  // tn: C[m,n] = A^T * B with A stored [k,m]
  // nt: C[m,n] = A * B^T with B stored [n,k]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c, bool accumulate);
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c, bool accumulate);
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c, bool accumulate);
};

const Ops& scalar_ops();

// nullptr when the build or the CPU lacks AVX2+FMA.
const Ops* avx2_ops();

bool cpu_has_avx2();

// Active table; resolved on first use from FRAMEDIFF_KERNELS
// (scalar | avx2 | auto). Unset behaves like auto.
const Ops& active();
Isa active_isa();

// Test hook. Throws ConfigError when the requested ISA is unavailable.
void set_active(Isa isa);

}  // namespace framediff::kern
