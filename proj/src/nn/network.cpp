#include "sfl/nn/network.hpp"

#include "sfl/nn/ops.hpp"

namespace sfl {
namespace {

template <class T>
BasicTensor<T> unit_forward(const UnitSpec& u, const LayerParams<T>& p, const BasicTensor<T>& x, int index) {
  const Shape out = output_shape(u, x.sample_shape(), index);
  BasicTensor<T> y;
  switch (u.kind) {
    case UnitKind::Linear: y = ops::linear_forward(x, p.weight, &p.bias); break;
    case UnitKind::Conv2d: y = ops::conv2d_forward(u, x, p.weight, &p.bias); break;
    case UnitKind::ConvTranspose2d: y = ops::conv_transpose2d_forward(u, x, p.weight, &p.bias); break;
    case UnitKind::ReLU: y = ops::relu_forward(x); break;
    case UnitKind::Sigmoid: y = ops::sigmoid_forward(x); break;
    case UnitKind::MaxPool2x2: y = ops::maxpool_forward(x); break;
    case UnitKind::Flatten: y = x.reshaped({x.batch(), numel_of(out)}); break;
  }
  return y;
}

}  // namespace

template <class T>
Activations<T> forward(std::span<const UnitSpec> units, const ParamSet<T>& params, const BasicTensor<T>& x) {
  if (params.size() != units.size()) throw ShapeError("forward: parameter set does not match unit list");
  if (x.rank() < 2) throw ShapeError("forward: input must be batched, got " + to_string(x.dims()));
  Activations<T> acts;
  acts.reserve(units.size() + 1);
  acts.push_back(x);
  for (std::size_t i = 0; i < units.size(); ++i) {
    acts.push_back(unit_forward(units[i], params[i], acts.back(), static_cast<int>(i)));
  }
  return acts;
}

template <class T>
BasicTensor<T> forward_output(std::span<const UnitSpec> units, const ParamSet<T>& params, const BasicTensor<T>& x) {
  if (params.size() != units.size()) throw ShapeError("forward: parameter set does not match unit list");
  if (x.rank() < 2) throw ShapeError("forward: input must be batched, got " + to_string(x.dims()));
  BasicTensor<T> cur = x;
  for (std::size_t i = 0; i < units.size(); ++i) cur = unit_forward(units[i], params[i], cur, static_cast<int>(i));
  return cur;
}

template <class T>
Gradients<T> backward(std::span<const UnitSpec> units, const ParamSet<T>& params, const Activations<T>& acts,
                      const BasicTensor<T>& upstream, BackwardOptions opts) {
  if (acts.size() != units.size() + 1) {
    throw Error("backward: activation cache has " + std::to_string(acts.size()) + " entries, expected " +
                std::to_string(units.size() + 1));
  }
  if (upstream.dims() != acts.back().dims()) {
    throw ShapeError("backward: upstream gradient " + to_string(upstream.dims()) + " does not match output " +
                     to_string(acts.back().dims()));
  }
  Gradients<T> out;
  if (opts.param_grads) out.params = params.zeros_like();
  BasicTensor<T> g = upstream;
  for (std::size_t ii = units.size(); ii-- > 0;) {
    const auto& u = units[ii];
    const auto& x = acts[ii];
    const bool need_input = opts.input_grad || ii > 0;
    switch (u.kind) {
      case UnitKind::Linear:
        if (opts.param_grads) ops::linear_param_grad(x, g, out.params[ii].weight, &out.params[ii].bias);
        if (need_input) g = ops::linear_backward_input(g, params[ii].weight, x.dims());
        break;
      case UnitKind::Conv2d:
        if (opts.param_grads) ops::conv2d_param_grad(u, x, g, out.params[ii].weight, &out.params[ii].bias);
        if (need_input) g = ops::conv2d_backward_input(u, g, params[ii].weight, x.dims());
        break;
      case UnitKind::ConvTranspose2d:
        if (opts.param_grads) {
          ops::conv_transpose2d_param_grad(u, x, g, out.params[ii].weight, &out.params[ii].bias);
        }
        if (need_input) g = ops::conv_transpose2d_backward_input(u, g, params[ii].weight, x.dims());
        break;
      case UnitKind::ReLU: g = ops::relu_mask(x, g); break;
      case UnitKind::Sigmoid: g = ops::sigmoid_backward(acts[ii + 1], g); break;
      case UnitKind::MaxPool2x2: g = ops::maxpool_backward(x, g); break;
      case UnitKind::Flatten: g.reshape(x.dims()); break;
    }
  }
  if (opts.input_grad) out.input = std::move(g);
  return out;
}

template Activations<float> forward(std::span<const UnitSpec>, const ParamSet<float>&, const Tensor&);
template Activations<double> forward(std::span<const UnitSpec>, const ParamSet<double>&, const Tensor64&);
template Tensor forward_output(std::span<const UnitSpec>, const ParamSet<float>&, const Tensor&);
template Tensor64 forward_output(std::span<const UnitSpec>, const ParamSet<double>&, const Tensor64&);
template Gradients<float> backward(std::span<const UnitSpec>, const ParamSet<float>&, const Activations<float>&,
                                   const Tensor&, BackwardOptions);
template Gradients<double> backward(std::span<const UnitSpec>, const ParamSet<double>&,
                                    const Activations<double>&, const Tensor64&, BackwardOptions);

}  // namespace sfl
