// AVX2 + FMA kernels. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after cpu_has_avx2() returned true.

#include "sfl/kernels/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

#include <vector>

namespace sfl::kernels {
namespace {

template <class T>
struct Vec;

template <>
struct Vec<float> {
  using reg = __m256;
  static constexpr std::size_t width = 8;
  static reg zero() { return _mm256_setzero_ps(); }
  static reg set1(float v) { return _mm256_set1_ps(v); }
  static reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
  static reg mul(reg a, reg b) { return _mm256_mul_ps(a, b); }
  static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
  static float hsum(reg v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
  }
};

template <>
struct Vec<double> {
  using reg = __m256d;
  static constexpr std::size_t width = 4;
  static reg zero() { return _mm256_setzero_pd(); }
  static reg set1(double v) { return _mm256_set1_pd(v); }
  static reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
  static reg mul(reg a, reg b) { return _mm256_mul_pd(a, b); }
  static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
  static double hsum(reg v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d high64 = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
  }
};

template <class T>
void axpy_simd(std::size_t n, T a, const T* x, T* y) {
  using V = Vec<T>;
  const auto av = V::set1(a);
  std::size_t i = 0;
  for (; i + 2 * V::width <= n; i += 2 * V::width) {
    V::store(y + i, V::fmadd(av, V::load(x + i), V::load(y + i)));
    V::store(y + i + V::width,
             V::fmadd(av, V::load(x + i + V::width), V::load(y + i + V::width)));
  }
  for (; i + V::width <= n; i += V::width) {
    V::store(y + i, V::fmadd(av, V::load(x + i), V::load(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

template <class T>
T dot_simd(std::size_t n, const T* x, const T* y) {
  using V = Vec<T>;
  auto acc0 = V::zero(), acc1 = V::zero(), acc2 = V::zero(), acc3 = V::zero();
  std::size_t i = 0;
  for (; i + 4 * V::width <= n; i += 4 * V::width) {
    acc0 = V::fmadd(V::load(x + i), V::load(y + i), acc0);
    acc1 = V::fmadd(V::load(x + i + V::width), V::load(y + i + V::width), acc1);
    acc2 = V::fmadd(V::load(x + i + 2 * V::width), V::load(y + i + 2 * V::width), acc2);
    acc3 = V::fmadd(V::load(x + i + 3 * V::width), V::load(y + i + 3 * V::width), acc3);
  }
  for (; i + V::width <= n; i += V::width) {
    acc0 = V::fmadd(V::load(x + i), V::load(y + i), acc0);
  }
  T acc = V::hsum(V::add(V::add(acc0, acc1), V::add(acc2, acc3)));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <class T>
void scal_simd(std::size_t n, T a, T* x) {
  using V = Vec<T>;
  const auto av = V::set1(a);
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) V::store(x + i, V::mul(av, V::load(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

template <class T>
void scale_row(std::size_t n, T beta, T* row) {
  if (beta == T(0)) {
    for (std::size_t j = 0; j < n; ++j) row[j] = T(0);
  } else if (beta != T(1)) {
    scal_simd(n, beta, row);
  }
}

// B untransposed: each row of C accumulates scaled rows of B (vectorised over n).
// B transposed: each C entry is a dot product over k (vectorised over k).
template <class T>
void gemm_simd(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, T alpha,
               const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c,
               std::size_t ldc) {
  if (tb == Trans::No) {
    for (std::size_t i = 0; i < m; ++i) {
      T* crow = c + i * ldc;
      scale_row(n, beta, crow);
      for (std::size_t p = 0; p < k; ++p) {
        const T av = ta == Trans::Yes ? a[p * lda + i] : a[i * lda + p];
        if (av == T(0)) continue;
        axpy_simd(n, alpha * av, b + p * ldb, crow);
      }
    }
    return;
  }
  std::vector<T> packed;
  if (ta == Trans::Yes) packed.resize(k);
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * lda;
    if (ta == Trans::Yes) {
      for (std::size_t p = 0; p < k; ++p) packed[p] = a[p * lda + i];
      arow = packed.data();
    }
    T* crow = c + i * ldc;
    for (std::size_t j = 0; j < n; ++j) {
      const T acc = dot_simd(k, arow, b + j * ldb);
      crow[j] = beta == T(0) ? alpha * acc : alpha * acc + beta * crow[j];
    }
  }
}

}  // namespace

template <>
const KernelTable<float>* avx2_table<float>() {
  static const KernelTable<float> table{"avx2", &gemm_simd<float>, &axpy_simd<float>,
                                        &dot_simd<float>, &scal_simd<float>};
  return cpu_has_avx2() ? &table : nullptr;
}

template <>
const KernelTable<double>* avx2_table<double>() {
  static const KernelTable<double> table{"avx2", &gemm_simd<double>, &axpy_simd<double>,
                                         &dot_simd<double>, &scal_simd<double>};
  return cpu_has_avx2() ? &table : nullptr;
}

}  // namespace sfl::kernels

#else

namespace sfl::kernels {

template <>
const KernelTable<float>* avx2_table<float>() {
  return nullptr;
}

template <>
const KernelTable<double>* avx2_table<double>() {
  return nullptr;
}

}  // namespace sfl::kernels

#endif
