#pragma once
// Gradient-matching objective and its parameter gradient.
//
// For a network S, hard labels y and a target input-gradient G, the objective
// is  Phi(W) = || d CE(S(W; A), y) / dA  -  G ||^2  (sum over all elements),
// where CE is the batch-mean cross-entropy. dPhi/dW needs a reverse pass
// through the reverse pass: the adjoint of the input gradient is pushed
// forward through the transposed backward chain (picking up the weight terms
// that the backward pass depends on), through the softmax Hessian, and then
// back through an ordinary reverse pass. ReLU and max-pool masks are piecewise
// constant, so they contribute no curvature terms.

#include <span>

#include "sfl/nn/layers.hpp"
#include "sfl/nn/tensor.hpp"

namespace sfl {

template <class T>
struct GradientMatchResult {
  double loss = 0.0;            // Phi
  ParamSet<T> grads;            // dPhi/dW
  BasicTensor<T> input_grad;    // dCE/dA under the current parameters
};

// Supports Linear, Conv2d, ReLU, MaxPool2x2 and Flatten units; anything else
// raises an Error.
template <class T>
GradientMatchResult<T> second_order_input_grad_backward(std::span<const UnitSpec> units, const ParamSet<T>& params,
                                                        const BasicTensor<T>& activation,
                                                        std::span<const int> labels,
                                                        const BasicTensor<T>& target_grad);

// Phi alone, for finite-difference checks.
template <class T>
double gradient_match_loss(std::span<const UnitSpec> units, const ParamSet<T>& params,
                           const BasicTensor<T>& activation, std::span<const int> labels,
                           const BasicTensor<T>& target_grad);

// Ensures every unit is supported by the second-order pass.
void check_second_order_support(std::span<const UnitSpec> units);

}  // namespace sfl
