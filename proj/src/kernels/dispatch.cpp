#include <cstdlib>
#include <string>

#include "framediff/errors.hpp"
#include "framediff/kernels.hpp"

namespace framediff::kern {
namespace {

const Ops* g_active = nullptr;
Isa g_isa = Isa::kScalar;

void resolve() {
  if (g_active) return;
  const char* env = std::getenv("FRAMEDIFF_KERNELS");
  std::string want = env ? env : "auto";
  if (want == "scalar") {
    g_active = &scalar_ops();
    g_isa = Isa::kScalar;
    return;
  }
  if (want == "avx2") {
    if (!cpu_has_avx2() || !avx2_ops())
      throw ConfigError("FRAMEDIFF_KERNELS=avx2 but AVX2/FMA is unavailable");
    g_active = avx2_ops();
    g_isa = Isa::kAvx2;
    return;
  }
  if (want != "auto")
    throw ConfigError("unknown FRAMEDIFF_KERNELS value: " + want);
  if (cpu_has_avx2() && avx2_ops()) {
    g_active = avx2_ops();
    g_isa = Isa::kAvx2;
  } else {
    g_active = &scalar_ops();
    g_isa = Isa::kScalar;
  }
}

}  // namespace

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const Ops& active() {
  resolve();
  return *g_active;
}

Isa active_isa() {
  resolve();
  return g_isa;
}

void set_active(Isa isa) {
  if (isa == Isa::kAvx2) {
    if (!cpu_has_avx2() || !avx2_ops())
      throw ConfigError("AVX2/FMA kernels unavailable on this CPU/build");
    g_active = avx2_ops();
  } else {
    g_active = &scalar_ops();
  }
  g_isa = isa;
}

}  // namespace framediff::kern
