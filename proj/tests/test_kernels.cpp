#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "notescore/errors.hpp"
#include "notescore/kernels.hpp"
#include "notescore/rng.hpp"

namespace ks = notescore::kernels;

namespace {

std::vector<double> random_vector(notescore::Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-3.0, 3.0);
  return v;
}

// Tolerance for reassociated sums of n terms of magnitude <= 9.
double sum_tol(std::size_t n) { return 1e-13 * static_cast<double>(n + 1) * 9.0; }

}  // namespace

TEST(Kernels, ScalarSetIsAlwaysAvailable) {
  EXPECT_EQ(ks::scalar_set().name, "scalar");
  EXPECT_THROW(ks::select("bogus"), notescore::ConfigError);
}

class KernelEquivalence : public ::testing::TestWithParam<std::size_t> {
 protected:
  void SetUp() override {
    if (ks::avx2_set() == nullptr) GTEST_SKIP() << "AVX2 kernels unavailable on this machine";
  }
};

TEST_P(KernelEquivalence, ElementwiseMatchScalarExactly) {
  const std::size_t n = GetParam();
  notescore::Rng rng(n + 11);
  const auto a = random_vector(rng, n), b = random_vector(rng, n);
  const auto& s = ks::scalar_set();
  const auto& v = *ks::avx2_set();
  std::vector<double> o1(n), o2(n);
  for (auto op : {&ks::KernelSet::add, &ks::KernelSet::sub, &ks::KernelSet::mul}) {
    (s.*op)(a.data(), b.data(), o1.data(), n);
    (v.*op)(a.data(), b.data(), o2.data(), n);
    EXPECT_EQ(o1, o2);
  }
  s.scale(0.37, a.data(), o1.data(), n);
  v.scale(0.37, a.data(), o2.data(), n);
  EXPECT_EQ(o1, o2);
  if (n > 0) EXPECT_EQ(s.max(a.data(), n), v.max(a.data(), n));
}

TEST_P(KernelEquivalence, ReductionsMatchScalarToRounding) {
  const std::size_t n = GetParam();
  notescore::Rng rng(n + 29);
  const auto a = random_vector(rng, n), b = random_vector(rng, n);
  const auto& s = ks::scalar_set();
  const auto& v = *ks::avx2_set();
  EXPECT_NEAR(s.dot(a.data(), b.data(), n), v.dot(a.data(), b.data(), n), sum_tol(n));
  EXPECT_NEAR(s.sum(a.data(), n), v.sum(a.data(), n), sum_tol(n));
  std::vector<double> y1 = b, y2 = b;
  s.axpy(-1.25, a.data(), y1.data(), n);
  v.axpy(-1.25, a.data(), y2.data(), n);
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y1[i], y2[i], 1e-14);
}

INSTANTIATE_TEST_SUITE_P(Lengths, KernelEquivalence, ::testing::Values(0, 1, 3, 4, 5, 7, 8, 9, 16, 31, 64, 257));

TEST(Kernels, GemmVariantsAgreeWithLoops) {
  notescore::Rng rng(5);
  const std::size_t m = 5, k = 7, n = 3;
  const auto a = random_vector(rng, m * k), b = random_vector(rng, k * n);
  std::vector<const ks::KernelSet*> sets{&ks::scalar_set()};
  if (ks::avx2_set()) sets.push_back(ks::avx2_set());
  for (const auto* set : sets) {
    std::vector<double> c(m * n, 0.0);
    ks::gemm_nn(*set, m, k, n, a.data(), b.data(), c.data(), false);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double ref = 0;
        for (std::size_t p = 0; p < k; ++p) ref += a[i * k + p] * b[p * n + j];
        EXPECT_NEAR(c[i * n + j], ref, 1e-12) << set->name;
      }
    // a^T (m x k)^T * c (m x n) -> k x n
    std::vector<double> t(k * n, 0.0);
    ks::gemm_tn(*set, m, k, n, a.data(), c.data(), t.data(), false);
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) {
        double ref = 0;
        for (std::size_t i = 0; i < m; ++i) ref += a[i * k + p] * c[i * n + j];
        EXPECT_NEAR(t[p * n + j], ref, 1e-11) << set->name;
      }
    // c (m x n) * b^T where b viewed as k x n -> m x k
    std::vector<double> u(m * k, 1.0);
    ks::gemm_nt(*set, m, n, k, c.data(), b.data(), u.data(), true);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        double ref = 1.0;
        for (std::size_t j = 0; j < n; ++j) ref += c[i * n + j] * b[p * n + j];
        EXPECT_NEAR(u[i * k + p], ref, 1e-11) << set->name;
      }
  }
}
