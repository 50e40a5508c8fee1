#pragma once
// Dense arithmetic kernels used by the engine's hot loops.
//
// Every kernel has a portable scalar reference and, on x86-64, an AVX2+FMA
// variant. The active table is chosen once at startup from CPUID; setting
// SFL_SIMD=scalar in the environment forces the reference path. The two paths
// agree to rounding but not bitwise, so a single process never mixes them.

#include <cstddef>
#include <string_view>

namespace sfl::kernels {

enum class Trans : bool { No = false, Yes = true };

template <class T>
struct KernelTable {
  std::string_view name;

  // C[m x n] = alpha * op(A)[m x k] * op(B)[k x n] + beta * C, row-major.
  // lda/ldb/ldc are the row strides of the stored (untransposed) matrices.
  void (*gemm)(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
               T alpha, const T* a, std::size_t lda, const T* b, std::size_t ldb,
               T beta, T* c, std::size_t ldc);

  // y += a * x
  void (*axpy)(std::size_t n, T a, const T* x, T* y);

  T (*dot)(std::size_t n, const T* x, const T* y);

  // x *= a
  void (*scal)(std::size_t n, T a, T* x);
};

// Reference implementation, always available.
template <class T>
const KernelTable<T>& scalar_table();

// AVX2+FMA implementation, or nullptr when the CPU (or build) lacks it.
template <class T>
const KernelTable<T>* avx2_table();

// The table selected for this process.
template <class T>
const KernelTable<T>& active();

bool cpu_has_avx2();

}  // namespace sfl::kernels
