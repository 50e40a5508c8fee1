#include "sfl/kernels/kernels.hpp"

#include <vector>

namespace sfl::kernels {
namespace {

template <class T>
void gemm_ref(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, T alpha,
              const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c,
              std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = ta == Trans::Yes ? a[p * lda + i] : a[i * lda + p];
        const T bv = tb == Trans::Yes ? b[j * ldb + p] : b[p * ldb + j];
        acc += av * bv;
      }
      T& out = c[i * ldc + j];
      out = beta == T(0) ? alpha * acc : alpha * acc + beta * out;
    }
  }
}

template <class T>
void axpy_ref(std::size_t n, T a, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class T>
T dot_ref(std::size_t n, const T* x, const T* y) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <class T>
void scal_ref(std::size_t n, T a, T* x) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

}  // namespace

template <>
const KernelTable<float>& scalar_table<float>() {
  static const KernelTable<float> table{"scalar", &gemm_ref<float>, &axpy_ref<float>,
                                        &dot_ref<float>, &scal_ref<float>};
  return table;
}

template <>
const KernelTable<double>& scalar_table<double>() {
  static const KernelTable<double> table{"scalar", &gemm_ref<double>, &axpy_ref<double>,
                                         &dot_ref<double>, &scal_ref<double>};
  return table;
}

}  // namespace sfl::kernels
