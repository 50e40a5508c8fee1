#include <cstdlib>
#include <string_view>

#include "sfl/kernels/kernels.hpp"

namespace sfl::kernels {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  static const bool has = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return has;
#else
  return false;
#endif
}

namespace {

bool scalar_forced() {
  const char* env = std::getenv("SFL_SIMD");
  return env != nullptr && std::string_view(env) == "scalar";
}

template <class T>
const KernelTable<T>& select() {
  if (!scalar_forced()) {
    if (const auto* t = avx2_table<T>()) return *t;
  }
  return scalar_table<T>();
}

}  // namespace

template <>
const KernelTable<float>& active<float>() {
  static const KernelTable<float>& table = select<float>();
  return table;
}

template <>
const KernelTable<double>& active<double>() {
  static const KernelTable<double>& table = select<double>();
  return table;
}

}  // namespace sfl::kernels
