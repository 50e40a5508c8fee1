#pragma once

#include <span>

#include "sfl/nn/tensor.hpp"

namespace sfl {

template <class T>
struct LossResult {
  double loss = 0.0;           // mean over the batch
  BasicTensor<T> grad;         // d(loss)/d(logits)
};

// Row-wise softmax of a (batch, classes) tensor.
template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

// Mean cross-entropy against hard labels; grad = (softmax - onehot) / batch.
template <class T>
LossResult<T> cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels);

// Mean cross-entropy against per-row target distributions.
template <class T>
LossResult<T> cross_entropy_soft(const BasicTensor<T>& logits, const BasicTensor<T>& targets);

// Per-sample cross-entropy values (no gradient).
template <class T>
std::vector<double> per_sample_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels);

std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace sfl
