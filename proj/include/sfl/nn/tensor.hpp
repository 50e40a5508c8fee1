#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sfl/error.hpp"

namespace sfl {

using Shape = std::vector<std::size_t>;

// An empty shape denotes an empty tensor, not a scalar.
inline std::size_t numel_of(const Shape& s) {
  if (s.empty()) return 0;
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& s);

// Dense row-major array. The leading dimension is the batch wherever a tensor
// carries a batch of samples.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape dims, T fill = T(0)) : dims_(std::move(dims)), data_(numel_of(dims_), fill) {}
  BasicTensor(Shape dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
    if (numel_of(dims_) != data_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match dims " + to_string(dims_));
    }
  }

  const Shape& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Batch size and per-sample element count for batched tensors.
  std::size_t batch() const { return dims_.empty() ? 0 : dims_[0]; }
  std::size_t sample_numel() const { return dims_.empty() || dims_[0] == 0 ? 0 : data_.size() / dims_[0]; }
  Shape sample_shape() const { return Shape(dims_.begin() + (dims_.empty() ? 0 : 1), dims_.end()); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> row(std::size_t b) { return std::span<T>(data_).subspan(b * sample_numel(), sample_numel()); }
  std::span<const T> row(std::size_t b) const {
    return std::span<const T>(data_).subspan(b * sample_numel(), sample_numel());
  }

  BasicTensor reshaped(Shape dims) const {
    if (numel_of(dims) != numel()) {
      throw ShapeError("cannot reshape " + to_string(dims_) + " to " + to_string(dims));
    }
    return BasicTensor(std::move(dims), data_);
  }

  void reshape(Shape dims) {
    if (numel_of(dims) != numel()) {
      throw ShapeError("cannot reshape " + to_string(dims_) + " to " + to_string(dims));
    }
    dims_ = std::move(dims);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <class U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>(dims_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  // Exact equality of dims and of every element's bit pattern.
  bool bit_equal(const BasicTensor& o) const {
    return dims_ == o.dims_ &&
           (data_.empty() || std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(T)) == 0);
  }

 private:
  Shape dims_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Gathers rows `indices` of a batched tensor into a new batch.
template <class T>
BasicTensor<T> gather_rows(const BasicTensor<T>& src, std::span<const std::size_t> indices) {
  Shape dims = src.dims();
  dims[0] = indices.size();
  BasicTensor<T> out(dims);
  const std::size_t n = src.sample_numel();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(src.data() + indices[i] * n, n, out.data() + i * n);
  }
  return out;
}

// Rows [begin, end) of a batched tensor.
template <class T>
BasicTensor<T> slice_rows(const BasicTensor<T>& src, std::size_t begin, std::size_t end) {
  Shape dims = src.dims();
  dims[0] = end - begin;
  const std::size_t n = src.sample_numel();
  return BasicTensor<T>(dims, std::vector<T>(src.data() + begin * n, src.data() + end * n));
}

// Concatenates batched tensors with identical sample shapes.
template <class T>
BasicTensor<T> concat_rows(std::span<const BasicTensor<T>> parts) {
  if (parts.empty()) return {};
  Shape dims = parts[0].dims();
  std::size_t rows = 0;
  std::vector<T> data;
  for (const auto& p : parts) {
    if (p.sample_shape() != parts[0].sample_shape()) throw ShapeError("concat_rows: sample shapes differ");
    rows += p.batch();
    data.insert(data.end(), p.storage().begin(), p.storage().end());
  }
  dims[0] = rows;
  return BasicTensor<T>(dims, std::move(data));
}

}  // namespace sfl
