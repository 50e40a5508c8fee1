#pragma once
// Per-unit primitives shared by the first-order and second-order passes.
// All functions take batched tensors (leading batch dimension).

#include "sfl/nn/layers.hpp"
#include "sfl/nn/tensor.hpp"

namespace sfl::ops {

// y = x W^T (+ b). x is flattened per sample.
template <class T>
BasicTensor<T> linear_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>* b);

// dx = g W, reshaped to `in_dims`.
template <class T>
BasicTensor<T> linear_backward_input(const BasicTensor<T>& g, const BasicTensor<T>& w, const Shape& in_dims);

// dW += g^T x ; db += column sums of g (db may be null).
template <class T>
void linear_param_grad(const BasicTensor<T>& x, const BasicTensor<T>& g, BasicTensor<T>& dw, BasicTensor<T>* db);

template <class T>
BasicTensor<T> conv2d_forward(const UnitSpec& u, const BasicTensor<T>& x, const BasicTensor<T>& w,
                              const BasicTensor<T>* b);

template <class T>
BasicTensor<T> conv2d_backward_input(const UnitSpec& u, const BasicTensor<T>& g, const BasicTensor<T>& w,
                                     const Shape& in_dims);

template <class T>
void conv2d_param_grad(const UnitSpec& u, const BasicTensor<T>& x, const BasicTensor<T>& g, BasicTensor<T>& dw,
                       BasicTensor<T>* db);

template <class T>
BasicTensor<T> conv_transpose2d_forward(const UnitSpec& u, const BasicTensor<T>& x, const BasicTensor<T>& w,
                                        const BasicTensor<T>* b);

template <class T>
BasicTensor<T> conv_transpose2d_backward_input(const UnitSpec& u, const BasicTensor<T>& g,
                                               const BasicTensor<T>& w, const Shape& in_dims);

template <class T>
void conv_transpose2d_param_grad(const UnitSpec& u, const BasicTensor<T>& x, const BasicTensor<T>& g,
                                 BasicTensor<T>& dw, BasicTensor<T>* db);

template <class T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x);

// g masked by (x > 0).
template <class T>
BasicTensor<T> relu_mask(const BasicTensor<T>& x, const BasicTensor<T>& g);

template <class T>
BasicTensor<T> sigmoid_forward(const BasicTensor<T>& x);

// y is the sigmoid output.
template <class T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& y, const BasicTensor<T>& g);

// 2x2 stride-2 max pooling. Ties resolve to the first element in row-major
// window order.
template <class T>
BasicTensor<T> maxpool_forward(const BasicTensor<T>& x);

// Routes g (pooled shape) back to the argmax positions of x.
template <class T>
BasicTensor<T> maxpool_backward(const BasicTensor<T>& x, const BasicTensor<T>& g);

// Reads v (shape of x) at the argmax positions of x: the transpose of
// maxpool_backward, used by the second-order pass.
template <class T>
BasicTensor<T> maxpool_gather(const BasicTensor<T>& x, const BasicTensor<T>& v);

}  // namespace sfl::ops
