#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>

#include "notescore/errors.hpp"
#include "notescore/kernels.hpp"

namespace notescore::kernels {

#if defined(NOTESCORE_HAVE_AVX2)
const KernelSet& avx2_set_unchecked();
#endif

namespace {

bool cpu_has_avx2() {
#if defined(NOTESCORE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelSet* resolve(std::string_view name) {
  if (name == "scalar") return &scalar_set();
  if (name == "avx2") {
    const KernelSet* set = avx2_set();
    if (set == nullptr) throw ConfigError("avx2 kernels are not available on this machine");
    return set;
  }
  if (name == "auto" || name.empty()) {
    const KernelSet* set = avx2_set();
    return set != nullptr ? set : &scalar_set();
  }
  throw ConfigError("unknown kernel set '" + std::string(name) + "'");
}

const KernelSet* initial() {
  const char* env = std::getenv("NOTESCORE_KERNELS");
  return resolve(env != nullptr ? std::string_view(env) : std::string_view("auto"));
}

std::atomic<const KernelSet*>& current() {
  static std::atomic<const KernelSet*> ptr{initial()};
  return ptr;
}

}  // namespace

const KernelSet* avx2_set() {
#if defined(NOTESCORE_HAVE_AVX2)
  static const bool supported = cpu_has_avx2();
  return supported ? &avx2_set_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

const KernelSet& active() { return *current().load(std::memory_order_acquire); }

void select(std::string_view name) { current().store(resolve(name), std::memory_order_release); }

void gemm_nn(const KernelSet& ks, std::size_t m, std::size_t k, std::size_t n,
             const double* a, const double* b, double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av != 0.0) ks.axpy(av, b + p * n, crow, n);
    }
  }
}

void gemm_tn(const KernelSet& ks, std::size_t m, std::size_t k, std::size_t n,
             const double* a, const double* b, double* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + k * n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    const double* arow = a + r * k;
    const double* brow = b + r * n;
    for (std::size_t i = 0; i < k; ++i) {
      const double av = arow[i];
      if (av != 0.0) ks.axpy(av, brow, c + i * n, n);
    }
  }
}

void gemm_nt(const KernelSet& ks, std::size_t m, std::size_t n, std::size_t k,
             const double* a, const double* b, double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    for (std::size_t j = 0; j < k; ++j) {
      const double v = ks.dot(arow, b + j * n, n);
      crow[j] = accumulate ? crow[j] + v : v;
    }
  }
}

}  // namespace notescore::kernels
