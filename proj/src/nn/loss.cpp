#include "sfl/nn/loss.hpp"

#include <algorithm>
#include <cmath>

namespace sfl {
namespace {

template <class T>
void check_logits(const BasicTensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("logits must be (batch, classes), got " + to_string(logits.dims()));
}

// log-sum-exp of one row, shifted by its max for stability.
template <class T>
double row_lse(const T* row, std::size_t n, double& max_out) {
  double mx = row[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, static_cast<double>(row[j]));
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += std::exp(static_cast<double>(row[j]) - mx);
  max_out = mx;
  return mx + std::log(s);
}

}  // namespace

template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  check_logits(logits);
  const std::size_t b = logits.dim(0), n = logits.dim(1);
  BasicTensor<T> out(logits.dims());
  for (std::size_t i = 0; i < b; ++i) {
    const T* row = logits.data() + i * n;
    double mx;
    const double lse = row_lse(row, n, mx);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = static_cast<T>(std::exp(static_cast<double>(row[j]) - lse));
  }
  return out;
}

template <class T>
LossResult<T> cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels) {
  check_logits(logits);
  const std::size_t b = logits.dim(0), n = logits.dim(1);
  if (labels.size() != b) throw ShapeError("cross_entropy: label count does not match batch");
  LossResult<T> r;
  r.grad = softmax(logits);
  const double inv_b = 1.0 / static_cast<double>(b);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= n) {
      throw Error("cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(n) + ")");
    }
    const T* row = logits.data() + i * n;
    double mx;
    total += row_lse(row, n, mx) - static_cast<double>(row[y]);
    T* g = r.grad.data() + i * n;
    g[y] -= T(1);
    for (std::size_t j = 0; j < n; ++j) g[j] = static_cast<T>(g[j] * inv_b);
  }
  r.loss = total * inv_b;
  return r;
}

template <class T>
LossResult<T> cross_entropy_soft(const BasicTensor<T>& logits, const BasicTensor<T>& targets) {
  check_logits(logits);
  if (targets.dims() != logits.dims()) throw ShapeError("cross_entropy_soft: target shape mismatch");
  const std::size_t b = logits.dim(0), n = logits.dim(1);
  LossResult<T> r;
  r.grad = softmax(logits);
  const double inv_b = 1.0 / static_cast<double>(b);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const T* row = logits.data() + i * n;
    const T* t = targets.data() + i * n;
    double mx;
    const double lse = row_lse(row, n, mx);
    T* g = r.grad.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      total += static_cast<double>(t[j]) * (lse - static_cast<double>(row[j]));
      g[j] = static_cast<T>((g[j] - t[j]) * inv_b);
    }
  }
  r.loss = total * inv_b;
  return r;
}

template <class T>
std::vector<double> per_sample_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels) {
  check_logits(logits);
  const std::size_t b = logits.dim(0), n = logits.dim(1);
  std::vector<double> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    const T* row = logits.data() + i * n;
    double mx;
    out[i] = row_lse(row, n, mx) - static_cast<double>(row[labels[i]]);
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  check_logits(logits);
  const std::size_t b = logits.dim(0), n = logits.dim(1);
  std::vector<int> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    const float* row = logits.data() + i * n;
    out[i] = static_cast<int>(std::max_element(row, row + n) - row);
  }
  return out;
}

template Tensor softmax(const Tensor&);
template Tensor64 softmax(const Tensor64&);
template LossResult<float> cross_entropy(const Tensor&, std::span<const int>);
template LossResult<double> cross_entropy(const Tensor64&, std::span<const int>);
template LossResult<float> cross_entropy_soft(const Tensor&, const Tensor&);
template LossResult<double> cross_entropy_soft(const Tensor64&, const Tensor64&);
template std::vector<double> per_sample_cross_entropy(const Tensor&, std::span<const int>);
template std::vector<double> per_sample_cross_entropy(const Tensor64&, std::span<const int>);

}  // namespace sfl
