#pragma once
// Shared helpers for unit tests: central finite differences in double.

#include <functional>

#include "sfl/nn/rng.hpp"
#include "sfl/nn/tensor.hpp"

namespace sfl::test {

inline Tensor64 random_tensor64(Shape dims, Rng rng, double lo = -1.0, double hi = 1.0) {
  Tensor64 t(std::move(dims));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

inline Tensor random_tensor(Shape dims, Rng rng, double lo = -1.0, double hi = 1.0) {
  return random_tensor64(std::move(dims), rng, lo, hi).cast<float>();
}

// Central difference of f with respect to every element of t.
inline Tensor64 numeric_grad(Tensor64& t, const std::function<double()>& f, double h = 1e-3) {
  Tensor64 g(t.dims());
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const double v = t[i];
    t[i] = v + h;
    const double fp = f();
    t[i] = v - h;
    const double fm = f();
    t[i] = v;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

inline double max_rel_err(const Tensor64& a, const Tensor64& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = std::abs(a[i] - b[i]) / std::max(1.0, std::max(std::abs(a[i]), std::abs(b[i])));
    worst = std::max(worst, d);
  }
  return worst;
}

}  // namespace sfl::test
