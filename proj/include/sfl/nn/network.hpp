#pragma once

#include <span>
#include <vector>

#include "sfl/nn/layers.hpp"
#include "sfl/nn/tensor.hpp"

namespace sfl {

// acts[0] is the input; acts[i + 1] is the output of unit i.
template <class T>
using Activations = std::vector<BasicTensor<T>>;

template <class T>
Activations<T> forward(std::span<const UnitSpec> units, const ParamSet<T>& params, const BasicTensor<T>& x);

// Output of the last unit only.
template <class T>
BasicTensor<T> forward_output(std::span<const UnitSpec> units, const ParamSet<T>& params, const BasicTensor<T>& x);

struct BackwardOptions {
  bool param_grads = true;
  bool input_grad = true;
};

template <class T>
struct Gradients {
  ParamSet<T> params;        // empty when param_grads was off
  BasicTensor<T> input;      // empty when input_grad was off
};

// Reverse pass for the scalar whose gradient w.r.t. the last activation is
// `upstream`. Throws if `acts` was not produced by a matching forward call.
template <class T>
Gradients<T> backward(std::span<const UnitSpec> units, const ParamSet<T>& params, const Activations<T>& acts,
                      const BasicTensor<T>& upstream, BackwardOptions opts = {});

}  // namespace sfl
