#include <doctest.h>

#include <vector>

#include "sfl/kernels/kernels.hpp"
#include "sfl/nn/rng.hpp"

using namespace sfl;
using kernels::Trans;

namespace {

template <class T>
std::vector<T> random_vec(std::size_t n, Rng rng) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(-1, 1));
  return v;
}

template <class T>
void check_gemm_equivalence(double tol) {
  const auto* fast = kernels::avx2_table<T>();
  if (fast == nullptr) {
    MESSAGE("AVX2 kernels unavailable on this CPU; equivalence not exercised");
    return;
  }
  const auto& ref = kernels::scalar_table<T>();
  Rng rng(42);
  const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {17, 9, 33}, {8, 64, 16}, {31, 2, 19}, {5, 37, 1}};
  int idx = 0;
  for (const auto& s : shapes) {
    const std::size_t m = s[0], n = s[1], k = s[2];
    for (int ta = 0; ta < 2; ++ta) {
      for (int tb = 0; tb < 2; ++tb) {
        const Trans TA = ta ? Trans::Yes : Trans::No, TB = tb ? Trans::Yes : Trans::No;
        const std::size_t lda = ta ? m : k, ldb = tb ? k : n;
        auto a = random_vec<T>(m * k, rng.child(idx * 3 + 0));
        auto b = random_vec<T>(k * n, rng.child(idx * 3 + 1));
        auto c0 = random_vec<T>(m * n, rng.child(idx * 3 + 2));
        auto c1 = c0;
        ++idx;
        ref.gemm(TA, TB, m, n, k, T(0.7), a.data(), lda, b.data(), ldb, T(0.3), c0.data(), n);
        fast->gemm(TA, TB, m, n, k, T(0.7), a.data(), lda, b.data(), ldb, T(0.3), c1.data(), n);
        for (std::size_t i = 0; i < c0.size(); ++i) CHECK(std::abs(double(c0[i]) - double(c1[i])) <= tol);
      }
    }
  }
  auto x = random_vec<T>(1003, rng.child("x"));
  auto y0 = random_vec<T>(1003, rng.child("y"));
  auto y1 = y0;
  ref.axpy(x.size(), T(-1.5), x.data(), y0.data());
  fast->axpy(x.size(), T(-1.5), x.data(), y1.data());
  for (std::size_t i = 0; i < y0.size(); ++i) CHECK(std::abs(double(y0[i]) - double(y1[i])) <= tol);
  CHECK(std::abs(double(ref.dot(x.size(), x.data(), y0.data())) - double(fast->dot(x.size(), x.data(), y0.data()))) <=
        tol * 100);
  auto z0 = x, z1 = x;
  ref.scal(z0.size(), T(0.25), z0.data());
  fast->scal(z1.size(), T(0.25), z1.data());
  for (std::size_t i = 0; i < z0.size(); ++i) CHECK(z0[i] == z1[i]);
}

}  // namespace

TEST_CASE("AVX2 kernels agree with the scalar reference (float)") { check_gemm_equivalence<float>(1e-4); }

TEST_CASE("AVX2 kernels agree with the scalar reference (double)") { check_gemm_equivalence<double>(1e-12); }

TEST_CASE("scalar gemm matches a hand-computed product") {
  const auto& k = kernels::scalar_table<double>();
  const double a[] = {1, 2, 3, 4, 5, 6};     // 2x3
  const double b[] = {7, 8, 9, 10, 11, 12};  // 3x2
  double c[4] = {1, 1, 1, 1};
  k.gemm(Trans::No, Trans::No, 2, 2, 3, 1.0, a, 3, b, 2, 0.0, c, 2);
  CHECK(c[0] == 58);
  CHECK(c[1] == 64);
  CHECK(c[2] == 139);
  CHECK(c[3] == 154);
}

TEST_CASE("active table is one of the two implementations") {
  const auto name = kernels::active<float>().name;
  CHECK((name == "scalar" || name == "avx2"));
}
