#pragma once

// Dense double-precision inner loops.
//
// Every kernel has a scalar reference implementation. On x86-64 an AVX2+FMA
// variant is compiled into a separate translation unit and selected at
// runtime when the CPU reports support. Results of the two variants agree to
// rounding (FMA contraction and summation order differ), so anything that
// needs bit-identical output must run under one kernel set for its lifetime.
//
// Selection order: NOTESCORE_KERNELS environment variable ("scalar", "avx2",
// "auto"), then CPU detection.

#include <cstddef>
#include <string_view>

namespace notescore::kernels {

struct KernelSet {
  std::string_view name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*scale)(double alpha, const double* x, double* out, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  double (*max)(const double* x, std::size_t n);
};

const KernelSet& scalar_set();

// nullptr when the AVX2 variant was not compiled in or the CPU lacks it.
const KernelSet* avx2_set();

const KernelSet& active();

// Accepts "scalar", "avx2" or "auto". Throws ConfigError for unknown names
// or an unavailable set.
void select(std::string_view name);

// Row-major GEMM helpers built on a kernel set. `accumulate` adds into c
// instead of overwriting it.
//   gemm_nn: c[m x n] = a[m x k] * b[k x n]
//   gemm_tn: c[k x n] = a[m x k]^T * b[m x n]
//   gemm_nt: c[m x k] = a[m x n] * b[k x n]^T
void gemm_nn(const KernelSet& ks, std::size_t m, std::size_t k, std::size_t n,
             const double* a, const double* b, double* c, bool accumulate);
void gemm_tn(const KernelSet& ks, std::size_t m, std::size_t k, std::size_t n,
             const double* a, const double* b, double* c, bool accumulate);
void gemm_nt(const KernelSet& ks, std::size_t m, std::size_t n, std::size_t k,
             const double* a, const double* b, double* c, bool accumulate);

}  // namespace notescore::kernels
