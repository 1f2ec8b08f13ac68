#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "framediff/kernels.hpp"

using namespace framediff;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = gauss(rng);
  return v;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / (std::abs(a) + std::abs(b) + 1e-30);
}

double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, rel_err(a[i], b[i]));
  return m;
}

// Sizes chosen to hit every vector-width remainder path.
const std::size_t kSizes[] = {1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 33, 64, 67};

}  // namespace

TEST_CASE("scalar gemm against naive triple loop") {
  std::mt19937_64 rng(7);
  const auto& ops = kern::scalar_ops();
  for (std::size_t m : {1, 2, 5}) {
    for (std::size_t n : {1, 3, 8}) {
      for (std::size_t k : {1, 4, 9}) {
        auto a = random_vec(m * k, rng);
        auto b = random_vec(k * n, rng);
        std::vector<double> c(m * n), ref(m * n, 0.0);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
            ref[i * n + j] = s;
          }
        ops.gemm_nn(m, n, k, a.data(), b.data(), c.data(), false);
        CHECK(max_rel_err(c, ref) < 1e-13);

        // tn: pass a stored [k, m]
        std::vector<double> at(k * m);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
        ops.gemm_tn(m, n, k, at.data(), b.data(), c.data(), false);
        CHECK(max_rel_err(c, ref) < 1e-13);

        // nt: pass b stored [n, k]
        std::vector<double> bt(n * k);
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
        ops.gemm_nt(m, n, k, a.data(), bt.data(), c.data(), false);
        CHECK(max_rel_err(c, ref) < 1e-13);
      }
    }
  }
}

TEST_CASE("avx2 elementwise kernels are bit-identical to scalar") {
  if (!kern::cpu_has_avx2() || !kern::avx2_ops()) {
    MESSAGE("AVX2 unavailable, skipping");
    return;
  }
  const auto& s = kern::scalar_ops();
  const auto& v = *kern::avx2_ops();
  std::mt19937_64 rng(11);
  for (std::size_t n : kSizes) {
    auto x = random_vec(n, rng);
    auto y = random_vec(n, rng);
    std::vector<double> a(n), b(n);

    s.add(n, x.data(), y.data(), a.data());
    v.add(n, x.data(), y.data(), b.data());
    CHECK(std::memcmp(a.data(), b.data(), n * sizeof(double)) == 0);

    s.sub(n, x.data(), y.data(), a.data());
    v.sub(n, x.data(), y.data(), b.data());
    CHECK(std::memcmp(a.data(), b.data(), n * sizeof(double)) == 0);

    s.mul(n, x.data(), y.data(), a.data());
    v.mul(n, x.data(), y.data(), b.data());
    CHECK(std::memcmp(a.data(), b.data(), n * sizeof(double)) == 0);

    s.scale(n, 1.7, x.data(), a.data());
    v.scale(n, 1.7, x.data(), b.data());
    CHECK(std::memcmp(a.data(), b.data(), n * sizeof(double)) == 0);

    a = y;
    b = y;
    s.axpy(n, -0.9, x.data(), a.data());
    v.axpy(n, -0.9, x.data(), b.data());
    CHECK(std::memcmp(a.data(), b.data(), n * sizeof(double)) == 0);
  }
}

TEST_CASE("avx2 reductions and gemm match scalar within tolerance") {
  if (!kern::cpu_has_avx2() || !kern::avx2_ops()) {
    MESSAGE("AVX2 unavailable, skipping");
    return;
  }
  const auto& s = kern::scalar_ops();
  const auto& v = *kern::avx2_ops();
  std::mt19937_64 rng(13);
  for (std::size_t n : kSizes) {
    auto x = random_vec(n, rng);
    auto y = random_vec(n, rng);
    CHECK(rel_err(s.dot(n, x.data(), y.data()), v.dot(n, x.data(), y.data())) <
          1e-12);
    CHECK(rel_err(s.sum(n, x.data()), v.sum(n, x.data())) < 1e-12);
  }
  for (std::size_t m : {1, 3, 6}) {
    for (std::size_t n : {1, 5, 13, 32}) {
      for (std::size_t k : {2, 9, 128}) {
        auto a = random_vec(m * k, rng);
        auto b = random_vec(k * n, rng);
        std::vector<double> cs(m * n), cv(m * n);
        s.gemm_nn(m, n, k, a.data(), b.data(), cs.data(), false);
        v.gemm_nn(m, n, k, a.data(), b.data(), cv.data(), false);
        CHECK(max_rel_err(cs, cv) < 1e-12);

        auto a2 = random_vec(k * m, rng);
        s.gemm_tn(m, n, k, a2.data(), b.data(), cs.data(), false);
        v.gemm_tn(m, n, k, a2.data(), b.data(), cv.data(), false);
        CHECK(max_rel_err(cs, cv) < 1e-12);

        auto b2 = random_vec(n * k, rng);
        s.gemm_nt(m, n, k, a.data(), b2.data(), cs.data(), false);
        v.gemm_nt(m, n, k, a.data(), b2.data(), cv.data(), false);
        CHECK(max_rel_err(cs, cv) < 1e-12);
      }
    }
  }
}

TEST_CASE("gemm accumulate adds onto existing output") {
  std::mt19937_64 rng(17);
  for (const kern::Ops* ops : {&kern::scalar_ops(), kern::avx2_ops()}) {
    if (!ops) continue;
    const std::size_t m = 3, n = 5, k = 4;
    auto a = random_vec(m * k, rng);
    auto b = random_vec(k * n, rng);
    std::vector<double> base = random_vec(m * n, rng);
    std::vector<double> once(m * n), acc = base;
    ops->gemm_nn(m, n, k, a.data(), b.data(), once.data(), false);
    ops->gemm_nn(m, n, k, a.data(), b.data(), acc.data(), true);
    for (std::size_t i = 0; i < m * n; ++i)
      CHECK(acc[i] == doctest::Approx(base[i] + once[i]).epsilon(1e-12));
  }
}

TEST_CASE("dispatch honors forced isa") {
  kern::set_active(kern::Isa::kScalar);
  CHECK(std::string(kern::active().name) == "scalar");
  if (kern::cpu_has_avx2() && kern::avx2_ops()) {
    kern::set_active(kern::Isa::kAvx2);
    CHECK(std::string(kern::active().name) == "avx2");
  }
  kern::set_active(kern::cpu_has_avx2() && kern::avx2_ops()
                       ? kern::Isa::kAvx2
                       : kern::Isa::kScalar);
}
